//! Kirkwood-Salzburg fixed point on the lattice.
//!
//! The solver works in one dimension with all points on a lattice of
//! spacing `h`. Partition-object coefficients are translation and
//! reflection invariant, so they are cached under canonicalized integer
//! keys; the ratio functions live in tables over canonical admissible
//! configurations. Truncations (point-count caps, integration windows,
//! pruned far-apart tuples) are accumulated and reported rather than
//! silently dropped.

use crate::covariance::KernelParams;
use crate::gaussian::Grid;
use crate::geometry::external_tree_length;
use crate::geometry::PointConfiguration;
use crate::model::{Estimate, Method, Model};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Tunables of the fixed-point computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsConfig {
    pub lambda: f64,
    /// Lattice spacing; all configuration points sit on multiples of it.
    pub spacing: f64,
    /// Longest configuration kept in the ratio-function tables.
    pub n_max: usize,
    /// Deepest integral term kept in the operator sums.
    pub m_max: usize,
    /// New integration points stay within this distance of the point set.
    pub z_extent: f64,
    /// Half-width of the carrier grid.
    pub grid_extent: f64,
    /// Monte Carlo samples per expectation (scaled down for longer
    /// configurations, whose contributions are coupling-suppressed).
    pub samples: usize,
    pub seed: u64,
    pub picard_tol: f64,
    pub max_iterations: usize,
    /// Tuples whose coupling bound falls below this are skipped and
    /// accounted in the truncation total.
    pub prune_tol: f64,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            lambda: 0.02,
            spacing: 0.5,
            n_max: 3,
            m_max: 3,
            z_extent: 4.0,
            grid_extent: 14.0,
            samples: 40_000,
            seed: 2026,
            picard_tol: 1e-10,
            max_iterations: 60,
            prune_tol: 1e-6,
        }
    }
}

/// Serialized solver state.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    schema: u32,
    lambda: f64,
    spacing: f64,
    samples: usize,
    seed: u64,
    cache: BTreeMap<String, Estimate>,
    truncation: f64,
}

/// Result of the zeroth-order Picard iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Solution {
    pub table: BTreeMap<Vec<i64>, f64>,
    pub iterations: usize,
    pub final_change: f64,
    pub contraction_ratio: f64,
}

/// Norm bound and witness lower bounds for the homogeneous operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A0NormReport {
    /// Exact operator norm of the truncated operator: the weighted
    /// absolute row sums.
    pub norm_bound: f64,
    /// Ratios achieved by explicit witnesses; each is a lower bound.
    pub witness_ratios: BTreeMap<String, f64>,
}

/// Second source-order solution on a restricted configuration domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F2Solution {
    pub table: BTreeMap<Vec<i64>, f64>,
    pub norm2: f64,
    pub iterations: usize,
    pub final_change: f64,
}

pub struct Solver {
    pub cfg: KsConfig,
    model: Model,
    cache: BTreeMap<String, Estimate>,
    /// Truncation-error proxy: the largest estimated magnitude of terms
    /// dropped from any single output sum.
    pub truncation: f64,
    /// Largest single-output standard error seen in operator sums.
    pub coefficient_std_err: f64,
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Canonical representative of an ordered configuration under translation
/// and reflection: anchor the first point at zero, compare against the
/// mirrored tuple, keep the lexicographically smaller one.
pub fn canonical_points(pts: &[i64]) -> Vec<i64> {
    let direct: Vec<i64> = pts.iter().map(|p| p - pts[0]).collect();
    let mirror: Vec<i64> = pts.iter().map(|p| pts[0] - p).collect();
    direct.min(mirror)
}

impl Solver {
    pub fn new(cfg: KsConfig) -> Result<Self> {
        if cfg.spacing <= 0.0 || cfg.z_extent <= 1.0 {
            return Err(Error::Domain("spacing and window must be positive".into()));
        }
        if cfg.n_max < 1 || cfg.n_max > 3 || cfg.m_max < 1 || cfg.m_max > 3 {
            return Err(Error::Capability(
                "point-count caps support 1..=3".into(),
            ));
        }
        if cfg.grid_extent < cfg.z_extent + 2.0 {
            return Err(Error::Domain(
                "carrier grid must extend past the integration window".into(),
            ));
        }
        let grid = Grid::line(-cfg.grid_extent, cfg.grid_extent, cfg.spacing)?;
        let model = Model::new(grid, KernelParams::d1(), cfg.lambda)?;
        Ok(Solver {
            cfg,
            model,
            cache: BTreeMap::new(),
            truncation: 0.0,
            coefficient_std_err: 0.0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    fn coord(&self, k: i64) -> f64 {
        k as f64 * self.cfg.spacing
    }

    /// Lattice offsets admissible as a next point: farther than the unit
    /// ball from every current point, within the window of the set, and on
    /// the carrier grid.
    fn extension_offsets(&self, base: &[i64]) -> Vec<i64> {
        let h = self.cfg.spacing;
        let reach = (self.cfg.z_extent / h).floor() as i64;
        let k_cap = ((self.cfg.grid_extent - 2.0) / h).floor() as i64;
        let lo = base.iter().min().unwrap() - reach;
        let hi = base.iter().max().unwrap() + reach;
        (lo.max(-k_cap)..=hi.min(k_cap))
            .filter(|&k| {
                base.iter().all(|&b| ((k - b).abs() as f64 * h) > 1.0)
                    && base
                        .iter()
                        .any(|&b| ((k - b).abs() as f64 * h) <= self.cfg.z_extent + 1e-9)
            })
            .collect()
    }

    /// All ordered extensions of `base` by `count` further points.
    fn extensions_of(&self, base: &[i64], count: usize) -> Vec<Vec<i64>> {
        let mut tuples: Vec<Vec<i64>> = vec![base.to_vec()];
        for _ in 0..count {
            let mut next = Vec::new();
            for t in &tuples {
                for k in self.extension_offsets(t) {
                    let mut e = t.clone();
                    e.push(k);
                    next.push(e);
                }
            }
            tuples = next;
        }
        tuples
    }

    /// Canonical configuration keys for the ratio-function tables.
    pub fn table_keys(&self) -> Vec<Vec<i64>> {
        let mut set: BTreeSet<Vec<i64>> = BTreeSet::new();
        for n in 1..=self.cfg.n_max {
            for cfg in self.extensions_of(&[0], n - 1) {
                set.insert(canonical_points(&cfg));
            }
        }
        set.into_iter().collect()
    }

    /// Crude decay bound on the contraction couplings of a configuration:
    /// the product over the later points of a bounded multiple of the
    /// covariance envelope at their distance to the earlier points.
    fn coupling_bound(&self, pts: &[i64]) -> f64 {
        let h = self.cfg.spacing;
        let mut bound = 1.0;
        for j in 1..pts.len() {
            let d = (0..j)
                .map(|i| (pts[j] - pts[i]).abs() as f64 * h)
                .fold(f64::INFINITY, f64::min);
            bound *= (7.5 * (-2.0 * (d - 1.0)).exp()).min(1.0);
        }
        bound
    }

    fn samples_for(&self, n: usize) -> usize {
        (self.cfg.samples >> (2 * (n.saturating_sub(1)))).max(4000)
    }

    /// Cached tree-expanded partition object over lattice points.
    /// `config` is the ordered configuration, `holes` are ball centers cut
    /// out of the interaction region (region = B_config minus B_holes) and
    /// `inserts` are source-derivative insertion points.
    pub fn ztilde_cached(
        &mut self,
        config: &[i64],
        holes: &[i64],
        inserts: &[i64],
    ) -> Result<Estimate> {
        let shift = config[0];
        // holes whose ball cannot meet the configuration balls are inert
        let reach = (2.0 / self.cfg.spacing).ceil() as i64;
        let mut rel_holes: Vec<i64> = holes
            .iter()
            .filter(|&&b| config.iter().any(|&c| (b - c).abs() <= reach))
            .map(|&b| b - shift)
            .collect();
        rel_holes.sort_unstable();
        let rel_config: Vec<i64> = config.iter().map(|&c| c - shift).collect();
        let mut rel_inserts: Vec<i64> = inserts.iter().map(|&w| w - shift).collect();
        rel_inserts.sort_unstable();
        // reflected candidate
        let mut mir_holes: Vec<i64> = rel_holes.iter().map(|&b| -b).collect();
        mir_holes.sort_unstable();
        let mir_config: Vec<i64> = rel_config.iter().map(|&c| -c).collect();
        let mut mir_inserts: Vec<i64> = rel_inserts.iter().map(|&w| -w).collect();
        mir_inserts.sort_unstable();
        let direct = (rel_config, rel_holes, rel_inserts);
        let mirror = (mir_config, mir_holes, mir_inserts);
        let (ckey, hkey, ikey) = direct.min(mirror);
        let key = format!(
            "c:{ckey:?};h:{hkey:?};i:{ikey:?};s:{}",
            self.samples_for(config.len())
        );
        if let Some(&hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let pts: Vec<Vec<f64>> = ckey.iter().map(|&k| vec![self.coord(k)]).collect();
        let configuration = PointConfiguration::new(pts.clone())?;
        let ball = self.model.grid.ball_mask(&pts);
        let hole_pts: Vec<Vec<f64>> = hkey.iter().map(|&k| vec![self.coord(k)]).collect();
        let region: Vec<bool> = self
            .model
            .grid
            .sites
            .iter()
            .zip(&ball)
            .map(|(s, &b)| b && !crate::geometry::ball_contains(&hole_pts, s))
            .collect();
        let insert_sites: Vec<usize> = ikey
            .iter()
            .map(|&w| {
                self.model
                    .grid
                    .site_index(&[self.coord(w)])
                    .ok_or_else(|| Error::Domain("insertion point off the grid".into()))
            })
            .collect::<Result<_>>()?;
        let method = Method::Hybrid {
            samples: self.samples_for(config.len()),
            seed: self.cfg.seed ^ fnv1a(&key),
        };
        let est = self
            .model
            .ztilde(&region, &configuration, &insert_sites, &method)?;
        self.cache.insert(key, est);
        Ok(est)
    }

    /// Number of contraction legs that must each open their own quartic
    /// vertex in an `m`-point term with `s` insertions: the two legs of
    /// every contraction land on pairwise-distant sites, so only insertion
    /// matches avoid a vertex.
    fn free_legs(m: usize, s: usize) -> i32 {
        (2 * (m as i64 - 1) - s as i64).max(0) as i32
    }

    /// Generous per-term factor used for the pruning decision.
    fn lambda_decide(&self, m: usize, s: usize) -> f64 {
        (8.0 * self.cfg.lambda).powi(Self::free_legs(m, s)).min(1.0)
    }

    /// Calibrated magnitude estimate of the same term, used for the
    /// reported truncation proxy: a coupling power per vertex-opening leg,
    /// a covariance-scale factor per absorbed insertion leg, and a kernel
    /// sum scale per contraction operator.
    fn lambda_estimate(&self, m: usize, s: usize) -> f64 {
        let legs = 2 * (m - 1);
        let absorbed = s.min(legs) as i32;
        (2.0 * self.cfg.lambda).powi(Self::free_legs(m, s)).min(1.0)
            * 0.1f64.powi(absorbed)
            * 0.01f64.powi(m as i32 - 1)
    }

    /// One application of the homogeneous operator to a table over the
    /// canonical configuration keys. With `absolute` set, coefficients and
    /// values enter by absolute value, which turns the application on the
    /// extremal witness into the exact (truncated) operator norm.
    pub fn apply_a0(
        &mut self,
        f: &BTreeMap<Vec<i64>, f64>,
        absolute: bool,
    ) -> Result<BTreeMap<Vec<i64>, f64>> {
        let h = self.cfg.spacing;
        let keys = self.table_keys();
        let mut out = BTreeMap::new();
        let combine = |coef: f64, val: f64| {
            if absolute {
                coef.abs() * val.abs()
            } else {
                coef * val
            }
        };
        for y in &keys {
            let n = y.len();
            let x = &y[..n - 1];
            let mut acc = 0.0;
            let mut sig2 = 0.0;
            let mut dropped = 0.0;
            // carried shorter-configuration term
            if n >= 2 {
                acc += combine(1.0, f[&canonical_points(x)]);
            }
            // single-point coefficient
            let zb = self.ztilde_cached(&y[n - 1..], x, &[])?;
            let fy = f[y];
            acc += combine(-(zb.value - 1.0), fy);
            sig2 += (zb.std_err * fy).powi(2);
            // deeper integral terms, while the tables can carry them
            let m_cap = self.cfg.m_max.min(self.cfg.n_max + 1 - n);
            for m in 2..=m_cap {
                let weight = h.powi(m as i32 - 1);
                for tuple in self.extensions_of(y, m - 1) {
                    let zpts = &tuple[n - 1..];
                    let coupling = self.coupling_bound(zpts);
                    if coupling * self.lambda_decide(m, 0) < self.cfg.prune_tol {
                        dropped += coupling * self.lambda_estimate(m, 0) * weight;
                        continue;
                    }
                    let z = self.ztilde_cached(zpts, x, &[])?;
                    let fv = f[&canonical_points(&tuple)];
                    acc += combine(-weight * z.value, fv);
                    sig2 += (weight * z.std_err * fv).powi(2);
                }
            }
            // first term beyond the caps and the integration window
            dropped += self.lambda_estimate(m_cap + 1, 0)
                + self.lambda_estimate(2, 0) * 7.5 * (-2.0 * (self.cfg.z_extent - 1.0)).exp();
            self.truncation = self.truncation.max(dropped);
            self.coefficient_std_err = self.coefficient_std_err.max(sig2.sqrt());
            out.insert(y.clone(), acc);
        }
        Ok(out)
    }

    /// Weighted supremum norm over a configuration table.
    pub fn norm0(table: &BTreeMap<Vec<i64>, f64>) -> f64 {
        table
            .iter()
            .map(|(k, &v)| 0.5f64.powi(k.len() as i32 - 1) * v.abs())
            .fold(0.0, f64::max)
    }

    /// Picard iteration for the zeroth source order.
    pub fn solve_f0(&mut self) -> Result<F0Solution> {
        let keys = self.table_keys();
        let mut f: BTreeMap<Vec<i64>, f64> = keys.iter().map(|k| (k.clone(), 1.0)).collect();
        let mut prev_change = f64::INFINITY;
        let mut ratio = 0.0;
        for iter in 0..self.cfg.max_iterations {
            let af = self.apply_a0(&f, false)?;
            let mut next = BTreeMap::new();
            for k in &keys {
                let e = if k.len() == 1 { 1.0 } else { 0.0 };
                next.insert(k.clone(), e + af[k]);
            }
            let diff: BTreeMap<Vec<i64>, f64> = keys
                .iter()
                .map(|k| (k.clone(), next[k] - f[k]))
                .collect();
            let change = Solver::norm0(&diff);
            ratio = change / prev_change;
            f = next;
            if change < self.cfg.picard_tol {
                return Ok(F0Solution {
                    table: f,
                    iterations: iter + 1,
                    final_change: change,
                    contraction_ratio: ratio,
                });
            }
            if iter >= 4 && ratio >= 1.0 {
                return Err(Error::NonContraction(format!(
                    "change ratio {ratio:.3} at iteration {iter}"
                )));
            }
            prev_change = change;
        }
        Err(Error::NonContraction(format!(
            "no convergence in {} iterations (ratio {ratio:.3})",
            self.cfg.max_iterations
        )))
    }

    /// Operator norm of the truncated homogeneous operator, with witness
    /// lower bounds from explicit unit-norm tables.
    pub fn a0_norm(&mut self) -> Result<A0NormReport> {
        let keys = self.table_keys();
        let extremal: BTreeMap<Vec<i64>, f64> = keys
            .iter()
            .map(|k| (k.clone(), 2.0f64.powi(k.len() as i32 - 1)))
            .collect();
        let abs = self.apply_a0(&extremal, true)?;
        let norm_bound = Solver::norm0(&abs);
        let mut witness_ratios = BTreeMap::new();
        let witnesses: Vec<(&str, Box<dyn Fn(&[i64]) -> f64>)> = vec![
            ("uniform", Box::new(|k: &[i64]| 2.0f64.powi(k.len() as i32 - 1))),
            (
                "alternating",
                Box::new(|k: &[i64]| {
                    let sign = if k.len() % 2 == 0 { -1.0 } else { 1.0 };
                    sign * 2.0f64.powi(k.len() as i32 - 1)
                }),
            ),
            (
                "concentrated",
                Box::new(|k: &[i64]| if k.len() == 1 { 1.0 } else { 0.0 }),
            ),
            (
                "striped",
                Box::new(|k: &[i64]| {
                    let sign = if (k.iter().sum::<i64>().rem_euclid(2)) == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    sign * 2.0f64.powi(k.len() as i32 - 1)
                }),
            ),
        ];
        for (name, g) in witnesses {
            let table: BTreeMap<Vec<i64>, f64> =
                keys.iter().map(|k| (k.clone(), g(k))).collect();
            let image = self.apply_a0(&table, false)?;
            witness_ratios.insert(name.to_string(), Solver::norm0(&image));
        }
        Ok(A0NormReport {
            norm_bound,
            witness_ratios,
        })
    }

    /// First source-order right-hand side at a fixed insertion offset. The
    /// insertions are odd against the even measure, so every coefficient
    /// vanishes identically; the loop verifies rather than assumes this.
    pub fn apply_a1(
        &mut self,
        f0: &BTreeMap<Vec<i64>, f64>,
        w: i64,
    ) -> Result<BTreeMap<Vec<i64>, f64>> {
        self.apply_source_operator(f0, &[w])
    }

    /// Second source-order right-hand side at fixed insertion offsets.
    pub fn apply_a2(
        &mut self,
        f0: &BTreeMap<Vec<i64>, f64>,
        w1: i64,
        w2: i64,
    ) -> Result<BTreeMap<Vec<i64>, f64>> {
        self.apply_source_operator(f0, &[w1, w2])
    }

    /// Shared loop of the source-order operators applied to the zeroth
    /// order: output configurations live in the insertion frame, anchored
    /// at each insertion point.
    fn apply_source_operator(
        &mut self,
        f0: &BTreeMap<Vec<i64>, f64>,
        inserts: &[i64],
    ) -> Result<BTreeMap<Vec<i64>, f64>> {
        let h = self.cfg.spacing;
        let keys = self.source_domain(inserts);
        let s = inserts.len();
        let mut out = BTreeMap::new();
        for y in &keys {
            let n = y.len();
            let x = &y[..n - 1];
            let mut acc = 0.0;
            let mut sig2 = 0.0;
            let mut dropped = 0.0;
            let m_cap = self.cfg.m_max.min(self.cfg.n_max + 1 - n);
            for m in 1..=m_cap {
                let weight = h.powi(m as i32 - 1);
                for tuple in self.extensions_of(y, m - 1) {
                    let zpts = tuple[n - 1..].to_vec();
                    // insertions must land in the interaction region
                    let covered = inserts.iter().all(|&w| {
                        zpts.iter().any(|&z| ((w - z).abs() as f64 * h) <= 1.0 + 1e-12)
                    });
                    if !covered {
                        continue;
                    }
                    let coupling = self.coupling_bound(&zpts);
                    if coupling * self.lambda_decide(m, s) < self.cfg.prune_tol {
                        dropped += coupling * self.lambda_estimate(m, s) * weight;
                        continue;
                    }
                    let z = self.ztilde_cached(&zpts, x, inserts)?;
                    let fv = f0[&canonical_points(&tuple)];
                    acc -= weight * z.value * fv;
                    sig2 += (weight * z.std_err * fv).powi(2);
                }
            }
            dropped += self.lambda_estimate(m_cap + 1, s);
            self.truncation = self.truncation.max(dropped);
            self.coefficient_std_err = self.coefficient_std_err.max(sig2.sqrt());
            out.insert(y.clone(), acc);
        }
        Ok(out)
    }

    /// Configurations kept for the source-order tables: anchored at each
    /// insertion point, extended inside the window. Keys are absolute
    /// offsets in the insertion frame.
    fn source_domain(&self, inserts: &[i64]) -> Vec<Vec<i64>> {
        let mut set: BTreeSet<Vec<i64>> = BTreeSet::new();
        for &anchor in inserts {
            for n in 1..=self.cfg.n_max {
                for cfg in self.extensions_of(&[anchor], n - 1) {
                    set.insert(cfg);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Solve the second source-order equation on the restricted domain and
    /// report the weighted norm of the solution. Entries the homogeneous
    /// operator needs outside the domain are dropped into the truncation
    /// total.
    pub fn solve_f2(
        &mut self,
        f0: &BTreeMap<Vec<i64>, f64>,
        w1: i64,
        w2: i64,
    ) -> Result<F2Solution> {
        let h = self.cfg.spacing;
        let inserts = [w1, w2];
        let source = self.apply_a2(f0, w1, w2)?;
        let keys: Vec<Vec<i64>> = source.keys().cloned().collect();
        let domain: BTreeSet<Vec<i64>> = keys.iter().cloned().collect();
        let mut f2: BTreeMap<Vec<i64>, f64> =
            keys.iter().map(|k| (k.clone(), 0.0)).collect();
        let mut prev_change = f64::INFINITY;
        let mut iterations = 0;
        let mut final_change = f64::INFINITY;
        for iter in 0..self.cfg.max_iterations {
            // homogeneous application in the insertion frame
            let mut next = BTreeMap::new();
            for y in &keys {
                let n = y.len();
                let x = &y[..n - 1];
                let mut acc = source[y];
                if n >= 2 {
                    if let Some(&v) = f2.get(&y[..n - 1].to_vec()) {
                        acc += v;
                    }
                }
                let zb = self.ztilde_cached(&y[n - 1..], x, &[])?;
                acc -= (zb.value - 1.0) * f2[y];
                let m_cap = self.cfg.m_max.min(self.cfg.n_max + 1 - n);
                for m in 2..=m_cap {
                    let weight = h.powi(m as i32 - 1);
                    for tuple in self.extensions_of(y, m - 1) {
                        let zpts = &tuple[n - 1..];
                        let coupling = self.coupling_bound(zpts);
                        if coupling * self.lambda_decide(m, 0) < self.cfg.prune_tol {
                            continue;
                        }
                        match f2.get(&tuple) {
                            Some(&fv) if domain.contains(&tuple) => {
                                let z = self.ztilde_cached(zpts, x, &[])?;
                                acc -= weight * z.value * fv;
                            }
                            _ => {
                                let est = coupling * self.lambda_estimate(m, 0) * weight;
                                self.truncation = self.truncation.max(est);
                            }
                        }
                    }
                }
                next.insert(y.clone(), acc);
            }
            let change = keys
                .iter()
                .map(|k| (next[k] - f2[k]).abs())
                .fold(0.0, f64::max);
            f2 = next;
            iterations = iter + 1;
            final_change = change;
            if change < self.cfg.picard_tol {
                break;
            }
            if iter >= 4 && change >= prev_change {
                return Err(Error::NonContraction(
                    "second-order iteration failed to contract".into(),
                ));
            }
            prev_change = change;
        }
        // weighted norm with the external tree length of (w; x)
        let externals: Vec<Vec<f64>> =
            inserts.iter().map(|&w| vec![self.coord(w)]).collect();
        let mut norm2 = 0.0f64;
        for (k, &v) in &f2 {
            if v == 0.0 {
                continue;
            }
            let pts: Vec<Vec<f64>> = k.iter().map(|&p| vec![self.coord(p)]).collect();
            let ell = external_tree_length(&externals, &pts)?;
            let weighted = 0.5 * 0.5f64.powi(k.len() as i32 - 1) * ell.exp() * v.abs();
            norm2 = norm2.max(weighted);
        }
        Ok(F2Solution {
            table: f2,
            norm2,
            iterations,
            final_change,
        })
    }

    /// Connected two-point function from the expansion: the two-insertion
    /// reconstruction operator applied to the zeroth order, plus the
    /// single-insertion operator applied to the (identically zero) first
    /// order.
    pub fn schwinger_two_point(
        &mut self,
        f0: &BTreeMap<Vec<i64>, f64>,
        sep_units: i64,
    ) -> Result<Estimate> {
        let h = self.cfg.spacing;
        let w = [0i64, sep_units];
        let mut value = 0.0;
        let mut var = 0.0;
        let mut dropped = 0.0;
        let sep_coupling = 7.5 * (-2.0 * (sep_units.abs() as f64 * h - 1.0)).exp();
        for n in 1..=self.cfg.n_max {
            let weight = h.powi(n as i32 - 1);
            for cfg in self.extensions_of(&[0], n - 1) {
                // the second insertion must lie in the configuration balls
                if !cfg
                    .iter()
                    .any(|&p| ((p - sep_units).abs() as f64 * h) <= 1.0 + 1e-12)
                {
                    continue;
                }
                let coupling =
                    self.coupling_bound(&cfg) * (1.0 + sep_coupling).min(2.0);
                if coupling * self.lambda_decide(n, 2) < self.cfg.prune_tol {
                    dropped += coupling * self.lambda_estimate(n, 2) * weight;
                    continue;
                }
                let z = self.ztilde_cached(&cfg, &[], &w)?;
                let fv = f0[&canonical_points(&cfg)];
                value += weight * z.value * fv;
                var += (weight * z.std_err * fv).powi(2);
            }
        }
        // configurations beyond the length cap
        dropped += self.lambda_estimate(self.cfg.n_max + 1, 2) * sep_coupling.min(1.0);
        self.truncation = self.truncation.max(dropped);
        Ok(Estimate {
            value,
            std_err: var.sqrt(),
        })
    }

    /// First-order reconstruction applied to a first-order table in the
    /// insertion frame; included for completeness of the expansion, and
    /// identically zero when the table is (as the symmetry forces).
    pub fn t1_apply(
        &mut self,
        f1: &BTreeMap<Vec<i64>, f64>,
        w1: i64,
    ) -> Result<Estimate> {
        let h = self.cfg.spacing;
        let mut value = 0.0;
        let mut var = 0.0;
        for n in 1..=self.cfg.n_max {
            let weight = h.powi(n as i32 - 1);
            for cfg in self.extensions_of(&[w1], n - 1) {
                let fv = match f1.get(&cfg) {
                    Some(&v) if v != 0.0 => v,
                    _ => continue,
                };
                let z = self.ztilde_cached(&cfg, &[], &[w1])?;
                value += weight * z.value * fv;
                var += (weight * z.std_err * fv).powi(2);
            }
        }
        Ok(Estimate {
            value,
            std_err: var.sqrt(),
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let cp = Checkpoint {
            schema: 1,
            lambda: self.cfg.lambda,
            spacing: self.cfg.spacing,
            samples: self.cfg.samples,
            seed: self.cfg.seed,
            cache: self.cache.clone(),
            truncation: self.truncation,
        };
        let data = serde_json::to_string_pretty(&cp)?;
        std::fs::write(path, data)?;
        Ok(())
    }

    /// Load a coefficient cache saved by a compatible solver; returns the
    /// number of entries restored.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<usize> {
        let data = std::fs::read_to_string(path)?;
        let cp: Checkpoint = serde_json::from_str(&data)?;
        if cp.schema != 1 {
            return Err(Error::Capability(format!(
                "unknown checkpoint schema {}",
                cp.schema
            )));
        }
        if cp.lambda != self.cfg.lambda
            || cp.spacing != self.cfg.spacing
            || cp.samples != self.cfg.samples
            || cp.seed != self.cfg.seed
        {
            return Err(Error::Domain(
                "checkpoint parameters do not match the solver".into(),
            ));
        }
        let n = cp.cache.len();
        self.cache = cp.cache;
        self.truncation = self.truncation.max(cp.truncation);
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::covariance_r;
    use approx::assert_relative_eq;

    fn small_cfg(lambda: f64) -> KsConfig {
        KsConfig {
            lambda,
            z_extent: 3.0,
            grid_extent: 9.0,
            m_max: 2,
            samples: 20_000,
            ..KsConfig::default()
        }
    }

    #[test]
    fn table_keys_are_admissible_and_canonical() {
        let solver = Solver::new(small_cfg(0.0)).unwrap();
        let keys = solver.table_keys();
        assert!(keys.iter().any(|k| k.len() == 1));
        assert!(keys.iter().any(|k| k.len() == 3));
        for k in &keys {
            assert_eq!(k[0], 0);
            assert_eq!(k, &canonical_points(k));
            for i in 0..k.len() {
                for j in (i + 1)..k.len() {
                    assert!((k[i] - k[j]).abs() as f64 * 0.5 > 1.0);
                }
            }
        }
    }

    #[test]
    fn free_fixed_point_is_one() {
        let mut solver = Solver::new(small_cfg(0.0)).unwrap();
        let sol = solver.solve_f0().unwrap();
        for (_, v) in &sol.table {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-9);
        }
        assert_eq!(solver.truncation, 0.0);
        assert!(solver.coefficient_std_err < 1e-14);
    }

    #[test]
    fn free_operator_norm_is_half() {
        let mut solver = Solver::new(small_cfg(0.0)).unwrap();
        let report = solver.a0_norm().unwrap();
        assert_relative_eq!(report.norm_bound, 0.5, epsilon = 1e-12);
        assert_relative_eq!(report.witness_ratios["uniform"], 0.5, epsilon = 1e-12);
        assert!(report.witness_ratios["concentrated"] <= 0.5 + 1e-12);
    }

    #[test]
    fn free_two_point_recovers_covariance() {
        let mut solver = Solver::new(small_cfg(0.0)).unwrap();
        let f0 = solver.solve_f0().unwrap().table;
        let p = KernelParams::d1();
        for &sep in &[1, 3, 4, 6] {
            let s = solver.schwinger_two_point(&f0, sep).unwrap();
            let exact = covariance_r(sep as f64 * 0.5, &p).unwrap();
            assert_relative_eq!(s.value, exact, max_relative = 1e-9);
            assert_eq!(s.std_err, 0.0);
        }
    }

    #[test]
    fn first_order_table_vanishes_by_symmetry() {
        let mut solver = Solver::new(small_cfg(0.01)).unwrap();
        let f0 = solver.solve_f0().unwrap().table;
        let a1 = solver.apply_a1(&f0, 3).unwrap();
        for (_, v) in &a1 {
            assert_eq!(*v, 0.0);
        }
        let zero_f1: BTreeMap<Vec<i64>, f64> = a1;
        let t1 = solver.t1_apply(&zero_f1, 0).unwrap();
        assert_eq!(t1.value, 0.0);
    }

    #[test]
    fn interacting_fixed_point_contracts_and_stays_near_one() {
        let mut solver = Solver::new(small_cfg(0.005)).unwrap();
        let sol = solver.solve_f0().unwrap();
        assert!(sol.contraction_ratio < 0.8, "ratio {}", sol.contraction_ratio);
        for (k, v) in &sol.table {
            assert!((v - 1.0).abs() < 0.1, "f0{k:?} = {v}");
        }
    }

    #[test]
    fn interacting_two_point_matches_first_order() {
        let mut solver = Solver::new(small_cfg(0.005)).unwrap();
        let f0 = solver.solve_f0().unwrap().table;
        let sep = 3i64; // separation 1.5
        let s = solver.schwinger_two_point(&f0, sep).unwrap();
        let model = solver.model().clone();
        let region = vec![true; model.grid.len()];
        let a = model.grid.site_index(&[0.0]).unwrap();
        let b = model.grid.site_index(&[1.5]).unwrap();
        let first = model.two_point_first_order(&region, a, b).unwrap();
        let correction = (model.base.entry(a, b) - first).abs();
        assert!(
            (s.value - first).abs() < 0.5 * correction + 5.0 * s.std_err + 1e-5,
            "expansion {} vs first order {first} (correction {correction})",
            s.value
        );
    }

    #[test]
    fn second_order_solution_has_finite_norm() {
        let mut solver = Solver::new(small_cfg(0.01)).unwrap();
        let f0 = solver.solve_f0().unwrap().table;
        let sol = solver.solve_f2(&f0, 0, 3).unwrap();
        assert!(sol.norm2.is_finite() && sol.norm2 > 0.0);
        assert!(sol.final_change < solver.cfg.picard_tol * 10.0);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = std::env::temp_dir().join("cluster-lab-test-ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cache.json");
        let mut solver = Solver::new(small_cfg(0.01)).unwrap();
        let f0 = solver.solve_f0().unwrap().table;
        let s1 = solver.schwinger_two_point(&f0, 3).unwrap();
        solver.save_checkpoint(&path).unwrap();
        let mut restored = Solver::new(small_cfg(0.01)).unwrap();
        let n = restored.load_checkpoint(&path).unwrap();
        assert!(n > 0);
        let f0b = restored.solve_f0().unwrap().table;
        let s2 = restored.schwinger_two_point(&f0b, 3).unwrap();
        assert_eq!(s1.value.to_bits(), s2.value.to_bits());
        // incompatible parameters are rejected
        let mut other = Solver::new(small_cfg(0.02)).unwrap();
        assert!(other.load_checkpoint(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn determinism_across_fresh_solvers() {
        let run = || {
            let mut solver = Solver::new(small_cfg(0.01)).unwrap();
            let f0 = solver.solve_f0().unwrap().table;
            solver.schwinger_two_point(&f0, 4).unwrap().value
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}

