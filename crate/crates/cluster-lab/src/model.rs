//! The discretized interacting model.
//!
//! A quartic perturbation of the Gaussian measure lives on a grid window;
//! continuum integrals become `h^d` times site sums and functional
//! derivatives become `h^-d` times partial derivatives. The module builds
//! partition functions, brute-force correlators, the tree-expanded
//! partition objects and the fundamental recursion identity that drives
//! the fixed-point solver.

use crate::covariance::KernelParams;
use crate::gaussian::{
    expectation_poly, interpolate, CovarianceMatrix, GaussianSampler, Grid, InterpolationState,
};
use crate::geometry::PointConfiguration;
use crate::poly::Polynomial;
use crate::quadrature::{gauss_hermite_norm, gauss_legendre_on, TensorGrid};
use crate::trees::{enumerate_trees, t_exponents};
use crate::{Error, Result};
use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How expectations against the interacting weight are evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Method {
    /// Tensor Gauss-Hermite over the positive eigendirections. `order = 0`
    /// picks the order from the number of active sites.
    Quadrature { order: usize },
    /// Plain Monte Carlo with antithetic pairs.
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact Wick evaluation of the polynomial prefactor plus a Monte
    /// Carlo estimate of the `e^V - 1` correction; exact when the
    /// potential vanishes.
    Hybrid { samples: usize, seed: u64 },
}

impl Method {
    /// Same method with the seed mixed by a stream index, so repeated
    /// evaluations inside one computation stay independent.
    pub fn reseeded(&self, stream: u64) -> Method {
        let mix = |seed: u64| {
            seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        };
        match *self {
            Method::Quadrature { order } => Method::Quadrature { order },
            Method::MonteCarlo { samples, seed } => Method::MonteCarlo {
                samples,
                seed: mix(seed),
            },
            Method::Hybrid { samples, seed } => Method::Hybrid {
                samples,
                seed: mix(seed),
            },
        }
    }
}

/// A value with a Monte Carlo standard error (zero for exact routes).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate {
            value,
            std_err: 0.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Estimate {
        Estimate {
            value: self.value * c,
            std_err: self.std_err * c.abs(),
        }
    }

    /// Sum assuming independent errors.
    pub fn plus(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            std_err: (self.std_err * self.std_err + other.std_err * other.std_err).sqrt(),
        }
    }

    /// Product with first-order error propagation.
    pub fn times(&self, other: &Estimate) -> Estimate {
        Estimate {
            value: self.value * other.value,
            std_err: ((self.std_err * other.value).powi(2)
                + (other.std_err * self.value).powi(2))
            .sqrt(),
        }
    }
}

/// Sites of the grid inside the closed coordinate box [lo, hi].
pub fn box_mask(grid: &Grid, lo: &[f64], hi: &[f64]) -> Result<Vec<bool>> {
    if lo.len() != grid.dimension || hi.len() != grid.dimension {
        return Err(Error::Dimension("box bounds dimension mismatch".into()));
    }
    Ok(grid
        .sites
        .iter()
        .map(|s| {
            s.iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&a, &b))| x >= a - 1e-12 && x <= b + 1e-12)
        })
        .collect())
}

/// The interacting model on a grid: quartic coupling and a source field.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub kernel: KernelParams,
    pub base: CovarianceMatrix,
    pub lambda: f64,
    pub source: Vec<f64>,
}

impl Model {
    pub fn new(grid: Grid, kernel: KernelParams, lambda: f64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::Domain(format!("coupling {lambda} must be >= 0")));
        }
        if grid.dimension != kernel.dimension {
            return Err(Error::Dimension("grid/kernel dimension mismatch".into()));
        }
        let base = CovarianceMatrix::on_grid(&grid, &kernel)?;
        let source = vec![0.0; grid.len()];
        Ok(Model {
            grid,
            kernel,
            base,
            lambda,
            source,
        })
    }

    pub fn with_source(mut self, source: Vec<f64>) -> Result<Self> {
        if source.len() != self.grid.len() {
            return Err(Error::Dimension("source length mismatch".into()));
        }
        self.source = source;
        Ok(self)
    }

    fn check_region(&self, region: &[bool]) -> Result<()> {
        if region.len() != self.grid.len() {
            return Err(Error::Dimension("region mask length mismatch".into()));
        }
        Ok(())
    }

    /// The potential V = h^d sum_{s in region} (-lambda phi_s^4 + J_s phi_s)
    /// as a polynomial in the site variables.
    pub fn potential_poly(&self, region: &[bool]) -> Polynomial {
        let hd = self.grid.cell_volume();
        let mut v = Polynomial::zero();
        for (s, &inside) in region.iter().enumerate() {
            if !inside {
                continue;
            }
            if self.lambda != 0.0 {
                v.add(&Polynomial::variable(s, 4).scaled(-self.lambda * hd));
            }
            if self.source[s] != 0.0 {
                v.add(&Polynomial::variable(s, 1).scaled(self.source[s] * hd));
            }
        }
        v
    }

    /// E[ P(phi) e^{V(phi)} ] under the Gaussian measure `cov`, restricted
    /// exactly to the sites that P or V touch.
    pub fn expectation(
        &self,
        cov: &CovarianceMatrix,
        prefactor: &Polynomial,
        region: &[bool],
        method: &Method,
    ) -> Result<Estimate> {
        self.check_region(region)?;
        if cov.dim() != self.grid.len() {
            return Err(Error::Dimension("covariance/grid mismatch".into()));
        }
        let v = self.potential_poly(region);
        let mut active = prefactor.support();
        active.extend(v.support());
        active.sort_unstable();
        active.dedup();
        if active.is_empty() {
            return Ok(Estimate::exact(prefactor.eval(&[])));
        }
        let map: BTreeMap<usize, usize> =
            active.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let cl = cov.marginal(&active);
        let pl = prefactor.remap(&map);
        let vl = v.remap(&map);
        // odd prefactor against an even weight: exactly zero
        if pl.parity() == Some(1) && vl.parity() == Some(0) {
            return Ok(Estimate::exact(0.0));
        }
        match *method {
            Method::Hybrid { samples, seed } => {
                let wick = expectation_poly(&cl, &pl)?;
                if vl.is_zero() {
                    return Ok(Estimate::exact(wick));
                }
                let (mean, se) =
                    mc_average(&cl, samples, seed, |phi| {
                        pl.eval(phi) * (vl.eval(phi).exp_m1())
                    })?;
                Ok(Estimate {
                    value: wick + mean,
                    std_err: se,
                })
            }
            Method::MonteCarlo { samples, seed } => {
                let (mean, se) =
                    mc_average(&cl, samples, seed, |phi| pl.eval(phi) * vl.eval(phi).exp())?;
                Ok(Estimate {
                    value: mean,
                    std_err: se,
                })
            }
            Method::Quadrature { order } => {
                quadrature_expectation(&cl, &pl, &vl, order).map(Estimate::exact)
            }
        }
    }

    /// Partition function of the region: E[e^V].
    pub fn partition_function(&self, region: &[bool], method: &Method) -> Result<Estimate> {
        self.expectation(&self.base, &Polynomial::one(), region, method)
    }

    /// Unnormalized moment E[phi_{w_1} ... phi_{w_k} e^V].
    pub fn moment(&self, region: &[bool], inserts: &[usize], method: &Method) -> Result<Estimate> {
        let mut p = Polynomial::one();
        for &w in inserts {
            p = p.mul(&Polynomial::variable(w, 1));
        }
        self.expectation(&self.base, &p, region, method)
    }

    /// Brute-force connected two-point function
    /// <phi_a phi_b> - <phi_a><phi_b> with normalized expectations.
    pub fn connected_two_point(
        &self,
        region: &[bool],
        a: usize,
        b: usize,
        method: &Method,
    ) -> Result<Estimate> {
        let z = self.partition_function(region, &method.reseeded(1))?;
        let mab = self.moment(region, &[a, b], &method.reseeded(2))?;
        let ma = self.moment(region, &[a], &method.reseeded(3))?;
        let mb = self.moment(region, &[b], &method.reseeded(4))?;
        if z.value <= 0.0 {
            return Err(Error::Domain("non-positive partition function".into()));
        }
        let inv_z = Estimate {
            value: 1.0 / z.value,
            std_err: z.std_err / (z.value * z.value),
        };
        let first = mab.times(&inv_z);
        let second = ma.times(&inv_z).times(&mb.times(&inv_z));
        Ok(first.plus(&second.scaled(-1.0)))
    }

    /// Brute-force connected four-point function at J = 0, where odd
    /// moments vanish by symmetry.
    pub fn connected_four_point(
        &self,
        region: &[bool],
        sites: [usize; 4],
        method: &Method,
    ) -> Result<Estimate> {
        if self.source.iter().any(|&j| j != 0.0) {
            return Err(Error::Capability(
                "four-point cumulant implemented for J = 0 only".into(),
            ));
        }
        let z = self.partition_function(region, &method.reseeded(1))?;
        if z.value <= 0.0 {
            return Err(Error::Domain("non-positive partition function".into()));
        }
        let inv_z = Estimate {
            value: 1.0 / z.value,
            std_err: z.std_err / (z.value * z.value),
        };
        let [a, b, c, d] = sites;
        let full = self
            .moment(region, &[a, b, c, d], &method.reseeded(2))?
            .times(&inv_z);
        let mut out = full;
        let pairings = [[a, b, c, d], [a, c, b, d], [a, d, b, c]];
        for (k, q) in pairings.iter().enumerate() {
            let left = self
                .moment(region, &[q[0], q[1]], &method.reseeded(3 + 2 * k as u64))?
                .times(&inv_z);
            let right = self
                .moment(region, &[q[2], q[3]], &method.reseeded(4 + 2 * k as u64))?
                .times(&inv_z);
            out = out.plus(&left.times(&right).scaled(-1.0));
        }
        Ok(out)
    }

    /// First-order perturbative two-point function:
    /// C_ab - 12 lambda h^d sum_z C_az C_zz C_zb over the region.
    pub fn two_point_first_order(&self, region: &[bool], a: usize, b: usize) -> Result<f64> {
        self.check_region(region)?;
        let hd = self.grid.cell_volume();
        let mut corr = 0.0;
        for (z, &inside) in region.iter().enumerate() {
            if inside {
                corr += self.base.entry(a, z) * self.base.entry(z, z) * self.base.entry(z, b);
            }
        }
        Ok(self.base.entry(a, b) - 12.0 * self.lambda * hd * corr)
    }

    /// Second derivative of log Z in the sources at sites (a, b) by central
    /// finite differences; an independent cross-check of the connected
    /// two-point function.
    pub fn two_point_source_fd(
        &self,
        region: &[bool],
        a: usize,
        b: usize,
        eps: f64,
        method: &Method,
    ) -> Result<f64> {
        self.check_region(region)?;
        if !region[a] || !region[b] {
            return Err(Error::Domain("sources only act inside the region".into()));
        }
        let hd = self.grid.cell_volume();
        let log_z = |da: f64, db: f64| -> Result<f64> {
            let mut source = self.source.clone();
            source[a] += da;
            source[b] += db;
            let m = self.clone().with_source(source)?;
            Ok(m.partition_function(region, method)?.value.ln())
        };
        let pp = log_z(eps, eps)?;
        let pm = log_z(eps, -eps)?;
        let mp = log_z(-eps, eps)?;
        let mm = log_z(-eps, -eps)?;
        // delta/delta J = h^-d d/dJ, and both h^-d factors cancel the two
        // h^d factors in the source term of V
        Ok((pp - pm - mp + mm) / (4.0 * eps * eps * hd * hd))
    }

    /// One step of the two-derivative contraction operator: maps the
    /// prefactor P of P e^V to the prefactor of Delta_{a; shell}(P e^V),
    /// with the shell given as a site list.
    pub fn apply_delta(
        &self,
        p: &Polynomial,
        a_site: usize,
        shell_sites: &[usize],
        region: &[bool],
    ) -> Polynomial {
        let hd = self.grid.cell_volume();
        let mut out = Polynomial::zero();
        for &y in shell_sites {
            let c = self.base.entry(a_site, y);
            if c == 0.0 {
                continue;
            }
            let q = self.field_derivative(&self.field_derivative(p, y, region), a_site, region);
            out.add(&q.scaled(c / hd));
        }
        out
    }

    /// D_s(P) = dP/dphi_s + P * dV/dphi_s, the prefactor of the ordinary
    /// partial derivative of P e^V.
    fn field_derivative(&self, p: &Polynomial, site: usize, region: &[bool]) -> Polynomial {
        let mut out = p.derivative(site);
        if region[site] {
            let hd = self.grid.cell_volume();
            let mut dv = Polynomial::zero();
            if self.lambda != 0.0 {
                dv.add(&Polynomial::variable(site, 3).scaled(-4.0 * self.lambda * hd));
            }
            if self.source[site] != 0.0 {
                dv.add(&Polynomial::constant(self.source[site] * hd));
            }
            if !dv.is_zero() {
                out.add(&p.mul(&dv));
            }
        }
        out
    }

    /// The tree-expanded partition object over an admissible configuration:
    /// a sum over ordered trees of contraction-operator products, averaged
    /// against the covariance interpolated over the first n-1 points, with
    /// the t-monomials integrated by Gauss-Legendre quadrature. Optional
    /// source-derivative insertions multiply the integrand by field
    /// variables (and vanish when an insertion site leaves the region).
    pub fn ztilde(
        &self,
        region: &[bool],
        config: &PointConfiguration,
        insertions: &[usize],
        method: &Method,
    ) -> Result<Estimate> {
        self.check_region(region)?;
        let n = config.len();
        if n == 0 {
            return Err(Error::Domain(
                "the partition object needs at least one point".into(),
            ));
        }
        if n > 4 {
            return Err(Error::Capability(format!(
                "configuration length {n} exceeds the cap of 4"
            )));
        }
        let mut p0 = Polynomial::one();
        for &w in insertions {
            if w >= self.grid.len() {
                return Err(Error::Dimension("insertion site out of range".into()));
            }
            if !region[w] {
                return Ok(Estimate::exact(0.0));
            }
            p0 = p0.mul(&Polynomial::variable(w, 1));
        }
        if n == 1 {
            return self.expectation(&self.base, &p0, region, method);
        }
        let x_sites: Vec<usize> = config
            .points()
            .iter()
            .map(|p| {
                self.grid
                    .site_index(p)
                    .ok_or_else(|| Error::Domain("configuration point off the grid".into()))
            })
            .collect::<Result<_>>()?;
        // shell site lists for the prefixes x_1..x_k, k = 1..n-1
        let shells: Vec<Vec<usize>> = (1..n)
            .map(|k| {
                let outer = self.grid.ball_mask(&config.points()[..k]);
                let inner = if k == 1 {
                    vec![false; self.grid.len()]
                } else {
                    self.grid.ball_mask(&config.points()[..k - 1])
                };
                (0..self.grid.len())
                    .filter(|&i| outer[i] && !inner[i])
                    .collect()
            })
            .collect();
        // t-independent prefactor and exponent vector per ordered tree
        let mut terms: Vec<(Polynomial, Vec<u32>)> = Vec::new();
        for tree in enumerate_trees(n)? {
            let mut p = p0.clone();
            for j in 2..=n {
                p = self.apply_delta(&p, x_sites[j - 1], &shells[tree.parent_of(j) - 1], region);
                if p.is_zero() {
                    break;
                }
            }
            if !p.is_zero() {
                terms.push((p, t_exponents(&tree)));
            }
        }
        if terms.is_empty() {
            return Ok(Estimate::exact(0.0));
        }
        // The integrand is a polynomial in t: entries of the interpolated
        // covariance are multilinear, a Wick sum of <= 7 pairings brings
        // degree <= 7 per variable, and the pulled-out monomials at most
        // n - 1 more; these orders make the t-quadrature exact.
        let order = if n == 2 { 8 } else { 6 };
        let rule = gauss_legendre_on(0.0, 1.0, order);
        let mut grid_iter = TensorGrid::new(&rule, n - 1);
        let mut t = vec![0.0; n - 1];
        let mut value = 0.0;
        let mut var = 0.0;
        let mut stream = 0u64;
        while let Some(w) = grid_iter.next_into(&mut t) {
            let mut combined = Polynomial::zero();
            for (p, exps) in &terms {
                let mono: f64 = exps
                    .iter()
                    .enumerate()
                    .map(|(l, &e)| t[l].powi(e as i32))
                    .product();
                combined.add(&p.scaled(mono));
            }
            if combined.is_zero() {
                continue;
            }
            let st = InterpolationState::new(t.clone(), config.prefix(n - 1))?;
            let cov = interpolate(&self.base, &self.grid, &st)?;
            let est = self.expectation(&cov, &combined, region, &method.reseeded(stream))?;
            stream += 1;
            value += w * est.value;
            var += (w * est.std_err).powi(2);
        }
        Ok(Estimate {
            value,
            std_err: var.sqrt(),
        })
    }

    /// The partition object restricted to the configuration's ball union:
    /// region intersected with B_x.
    pub fn ztilde_bold(
        &self,
        region: &[bool],
        config: &PointConfiguration,
        insertions: &[usize],
        method: &Method,
    ) -> Result<Estimate> {
        self.check_region(region)?;
        let ball = self.grid.ball_mask(config.points());
        let cut: Vec<bool> = region.iter().zip(&ball).map(|(&r, &b)| r && b).collect();
        self.ztilde(&cut, config, insertions, method)
    }

    /// Both sides of the fundamental recursion for the partition objects:
    /// the full object equals its ball-restricted part times the outside
    /// partition function, plus the lattice integral over one more point.
    pub fn identity13_residual(
        &self,
        region: &[bool],
        config: &PointConfiguration,
        method: &Method,
    ) -> Result<Identity13Report> {
        self.check_region(region)?;
        let n = config.len();
        if !(1..=2).contains(&n) {
            return Err(Error::Capability(
                "identity check supports configurations of length 1 or 2".into(),
            ));
        }
        let lhs = self.ztilde(region, config, &[], &method.reseeded(101))?;
        let bold = self.ztilde_bold(region, config, &[], &method.reseeded(102))?;
        let ball = self.grid.ball_mask(config.points());
        let outside: Vec<bool> = region.iter().zip(&ball).map(|(&r, &b)| r && !b).collect();
        let zout = self.partition_function(&outside, &method.reseeded(103))?;
        let factorized = bold.times(&zout);
        let hd = self.grid.cell_volume();
        let mut tail = Estimate::exact(0.0);
        let mut n_tail = 0u64;
        for (zi, zsite) in self.grid.sites.iter().enumerate() {
            let _ = zi;
            if config
                .points()
                .iter()
                .any(|x| crate::dist(x, zsite) <= 1.0)
            {
                continue;
            }
            let extended = config.push(zsite.clone())?;
            let term = self.ztilde(region, &extended, &[], &method.reseeded(200 + n_tail))?;
            n_tail += 1;
            tail = tail.plus(&term.scaled(hd));
        }
        let rhs = factorized.plus(&tail);
        Ok(Identity13Report {
            lhs: lhs.value,
            factorized: factorized.value,
            tail: tail.value,
            residual: (lhs.value - rhs.value).abs(),
            std_err: (lhs.std_err * lhs.std_err + rhs.std_err * rhs.std_err).sqrt(),
        })
    }

    /// Telescope the recursion: reconstruct the partition function outside
    /// the configuration balls from depth-truncated sums of products of
    /// ball-restricted objects and remainder partition functions. Returns
    /// the residual after each depth.
    pub fn telescoping_expansion_check(
        &self,
        region: &[bool],
        config: &PointConfiguration,
        z1: &[f64],
        depth: usize,
        method: &Method,
    ) -> Result<TelescopingExpansionReport> {
        self.check_region(region)?;
        if depth == 0 || depth > 3 {
            return Err(Error::Capability("telescope depth supports 1..=3".into()));
        }
        if crate::geometry::ball_contains(config.points(), z1) {
            return Err(Error::Domain(
                "the seed point must lie outside the configuration balls".into(),
            ));
        }
        let ball_x = self.grid.ball_mask(config.points());
        // everything happens in the window with the configuration balls cut
        let cut: Vec<bool> = region.iter().zip(&ball_x).map(|(&r, &b)| r && !b).collect();
        let reference = self.partition_function(&cut, &method.reseeded(301))?;
        let hd = self.grid.cell_volume();
        let mut partial = Vec::new();
        let mut residuals = Vec::new();
        let mut acc = Estimate::exact(0.0);
        let mut tuples: Vec<Vec<Vec<f64>>> = vec![vec![z1.to_vec()]];
        for m in 1..=depth {
            let mut level = Estimate::exact(0.0);
            let mut stream = 0u64;
            for zpts in &tuples {
                let zc = PointConfiguration::new(zpts.clone())?;
                let bold = self.ztilde_bold(&cut, &zc, &[], &method.reseeded(400 + stream))?;
                stream += 1;
                if bold.value == 0.0 && bold.std_err == 0.0 {
                    continue;
                }
                let ball_z = self.grid.ball_mask(zc.points());
                let rest: Vec<bool> =
                    cut.iter().zip(&ball_z).map(|(&r, &b)| r && !b).collect();
                let zrest = self.partition_function(&rest, &method.reseeded(500 + stream))?;
                level = level.plus(&bold.times(&zrest).scaled(hd.powi(m as i32 - 1)));
            }
            acc = acc.plus(&level);
            partial.push(acc.value);
            residuals.push((reference.value - acc.value).abs());
            if m == depth {
                break;
            }
            // extend the tuples by one integration point; sites whose ball
            // misses the remaining region contribute exactly zero
            let mut next = Vec::new();
            for zpts in &tuples {
                for site in &self.grid.sites {
                    if crate::geometry::ball_contains(config.points(), site)
                        || crate::geometry::ball_contains(zpts, site)
                    {
                        continue;
                    }
                    let near = self.grid.sites.iter().zip(&cut).any(|(s, &r)| {
                        r && crate::dist(site, s) <= 1.0 + 1e-12
                    });
                    if !near {
                        continue;
                    }
                    let mut e = zpts.clone();
                    e.push(site.clone());
                    next.push(e);
                }
            }
            tuples = next;
        }
        Ok(TelescopingExpansionReport {
            reference: reference.value,
            partial,
            residuals,
            std_err: (reference.std_err * reference.std_err
                + acc.std_err * acc.std_err)
                .sqrt(),
        })
    }
}

/// Outcome of the depth-truncated telescoping reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TelescopingExpansionReport {
    pub reference: f64,
    /// Reconstruction after each depth.
    pub partial: Vec<f64>,
    pub residuals: Vec<f64>,
    pub std_err: f64,
}

/// Outcome of the recursion-identity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Identity13Report {
    pub lhs: f64,
    pub factorized: f64,
    pub tail: f64,
    pub residual: f64,
    /// Combined standard error of both sides.
    pub std_err: f64,
}

fn mc_average(
    cov: &CovarianceMatrix,
    samples: usize,
    seed: u64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let sampler = GaussianSampler::new(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = cov.dim();
    let mut phi = vec![0.0; dim];
    let mut neg = vec![0.0; dim];
    let pairs = (samples / 2).max(1);
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..pairs {
        sampler.sample_into(&mut rng, &mut phi);
        for (n, &p) in neg.iter_mut().zip(&phi) {
            *n = -p;
        }
        // antithetic pair: odd parts cancel exactly
        let val = 0.5 * (f(&phi) + f(&neg));
        sum += val;
        sq += val * val;
    }
    let mean = sum / pairs as f64;
    let var = (sq / pairs as f64 - mean * mean).max(0.0);
    Ok((mean, (var / pairs as f64).sqrt()))
}

fn auto_order(dims: usize) -> Result<usize> {
    Ok(match dims {
        0..=4 => 24,
        5 | 6 => 12,
        7 => 10,
        8 => 8,
        _ => {
            return Err(Error::Capability(format!(
                "{dims} active sites exceed the tensor-quadrature budget"
            )))
        }
    })
}

fn quadrature_expectation(
    cov: &CovarianceMatrix,
    p: &Polynomial,
    v: &Polynomial,
    order: usize,
) -> Result<f64> {
    let dim = cov.dim();
    let eig = SymmetricEigen::new(cov.matrix().clone());
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let active_dims: Vec<usize> = (0..dim)
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * max_eig.max(1e-300))
        .collect();
    let order = if order > 0 {
        order
    } else {
        auto_order(active_dims.len())?
    };
    let rule = gauss_hermite_norm(order);
    let mut grid_iter = TensorGrid::new(&rule, active_dims.len());
    let mut z = vec![0.0; active_dims.len()];
    let mut phi = vec![0.0; dim];
    let mut acc = 0.0;
    while let Some(w) = grid_iter.next_into(&mut z) {
        for (i, ph) in phi.iter_mut().enumerate() {
            let mut s = 0.0;
            for (a, &k) in active_dims.iter().enumerate() {
                s += eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt() * z[a];
            }
            *ph = s;
        }
        acc += w * p.eval(&phi) * v.eval(&phi).exp();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(lambda: f64) -> Model {
        let grid = Grid::line(-3.0, 3.0, 1.0).unwrap();
        Model::new(grid, KernelParams::d1(), lambda).unwrap()
    }

    fn full(m: &Model) -> Vec<bool> {
        vec![true; m.grid.len()]
    }

    #[test]
    fn free_partition_function_is_one() {
        let m = model(0.0);
        let z = m
            .partition_function(&full(&m), &Method::Hybrid {
                samples: 10,
                seed: 1,
            })
            .unwrap();
        assert_eq!(z.value, 1.0);
        assert_eq!(z.std_err, 0.0);
    }

    #[test]
    fn gaussian_source_closed_form() {
        // lambda = 0 with a source: Z = exp(h^2 J' C J / 2)
        let grid = Grid::line(-1.0, 1.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.0)
            .unwrap()
            .with_source(vec![0.4, -0.2, 0.7])
            .unwrap();
        let region = vec![true; 3];
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += m.source[i] * m.base.entry(i, j) * m.source[j];
            }
        }
        let exact = (0.5 * quad).exp();
        let z = m
            .partition_function(&region, &Method::Quadrature { order: 24 })
            .unwrap();
        assert_relative_eq!(z.value, exact, max_relative = 1e-10);
        let z = m
            .partition_function(&region, &Method::Hybrid {
                samples: 400_000,
                seed: 7,
            })
            .unwrap();
        assert!(
            (z.value - exact).abs() < 4.0 * z.std_err + 1e-6,
            "MC {} +- {} vs {exact}",
            z.value,
            z.std_err
        );
    }

    #[test]
    fn free_moments_are_wick() {
        let m = model(0.0);
        let region = full(&m);
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let c = m.moment(&region, &[1, 4], &method).unwrap();
        assert_eq!(c.value, m.base.entry(1, 4));
        let odd = m.moment(&region, &[2], &method).unwrap();
        assert_eq!(odd.value, 0.0);
    }

    #[test]
    fn quadrature_and_hybrid_agree_small_region() {
        let grid = Grid::line(-1.0, 1.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.05).unwrap();
        let region = vec![true; 3];
        let zq = m
            .partition_function(&region, &Method::Quadrature { order: 32 })
            .unwrap();
        let zh = m
            .partition_function(&region, &Method::Hybrid {
                samples: 400_000,
                seed: 3,
            })
            .unwrap();
        assert!(
            (zq.value - zh.value).abs() < 4.0 * zh.std_err + 1e-6,
            "quad {} vs hybrid {} +- {}",
            zq.value,
            zh.value,
            zh.std_err
        );
        let zm = m
            .partition_function(&region, &Method::MonteCarlo {
                samples: 400_000,
                seed: 5,
            })
            .unwrap();
        assert!((zq.value - zm.value).abs() < 4.0 * zm.std_err + 1e-5);
    }

    #[test]
    fn connected_two_point_matches_first_order() {
        let grid = Grid::line(-2.0, 2.0, 1.0).unwrap();
        let lambda = 0.01;
        let m = Model::new(grid, KernelParams::d1(), lambda).unwrap();
        let region = vec![true; m.grid.len()];
        let method = Method::Quadrature { order: 12 };
        let s2 = m.connected_two_point(&region, 1, 3, &method).unwrap();
        let first = m.two_point_first_order(&region, 1, 3).unwrap();
        // second-order effects are O(lambda^2 * C^3 * volumes)
        assert!(
            (s2.value - first).abs() < 100.0 * lambda * lambda,
            "{} vs {first}",
            s2.value
        );
        // and the free value is off by O(lambda)
        assert!((s2.value - m.base.entry(1, 3)).abs() > (s2.value - first).abs());
    }

    #[test]
    fn connected_two_point_matches_source_fd() {
        let grid = Grid::line(-1.0, 1.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.05).unwrap();
        let region = vec![true; 3];
        let method = Method::Quadrature { order: 32 };
        let direct = m.connected_two_point(&region, 0, 2, &method).unwrap();
        let fd = m.two_point_source_fd(&region, 0, 2, 1e-3, &method).unwrap();
        assert_relative_eq!(direct.value, fd, max_relative = 1e-4);
    }

    #[test]
    fn free_four_point_cumulant_vanishes() {
        let m = model(0.0);
        let region = full(&m);
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let s4 = m
            .connected_four_point(&region, [0, 1, 2, 3], &method)
            .unwrap();
        assert!(s4.value.abs() < 1e-14);
    }

    #[test]
    fn interacting_four_point_cumulant_is_negative() {
        let grid = Grid::line(-1.0, 1.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.02).unwrap();
        let region = vec![true; 3];
        let method = Method::Quadrature { order: 32 };
        let s4 = m
            .connected_four_point(&region, [0, 1, 1, 2], &method)
            .unwrap();
        assert!(s4.value < 0.0, "quartic repulsion should give {s4:?} < 0");
        // leading order: -24 lambda h sum_z C_0z C_1z C_1z C_2z
        let mut lead = 0.0;
        for z in 0..3 {
            lead += m.base.entry(0, z)
                * m.base.entry(1, z)
                * m.base.entry(1, z)
                * m.base.entry(2, z);
        }
        lead *= -24.0 * m.lambda * m.grid.cell_volume();
        assert_relative_eq!(s4.value, lead, max_relative = 0.05);
    }

    #[test]
    fn ztilde_single_point_is_partition_function() {
        let grid = Grid::line(-2.0, 2.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.03).unwrap();
        let region = vec![true; m.grid.len()];
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Quadrature { order: 16 };
        let zt = m.ztilde(&region, &config, &[], &method).unwrap();
        let z = m.partition_function(&region, &method).unwrap();
        assert_relative_eq!(zt.value, z.value, max_relative = 1e-12);
    }

    #[test]
    fn ztilde_free_pair_vanishes() {
        let m = model(0.0);
        let region = full(&m);
        let config = PointConfiguration::new(vec![vec![0.0], vec![2.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let zt = m.ztilde(&region, &config, &[], &method).unwrap();
        assert_eq!(zt.value, 0.0);
        assert_eq!(zt.std_err, 0.0);
    }

    #[test]
    fn ztilde_free_pair_with_insertions_is_covariance() {
        // at lambda = 0 the contraction collapses to h^-d C(x1, x2) through
        // the discrete deltas of the two insertions
        let m = model(0.0);
        let region = full(&m);
        let x1 = m.grid.site_index(&[0.0]).unwrap();
        let x2 = m.grid.site_index(&[2.0]).unwrap();
        let config = PointConfiguration::new(vec![vec![0.0], vec![2.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let zt = m.ztilde(&region, &config, &[x1, x2], &method).unwrap();
        let expected = m.base.entry(x1, x2) / m.grid.cell_volume();
        assert_relative_eq!(zt.value, expected, max_relative = 1e-12);
    }

    #[test]
    fn ztilde_insertion_outside_region_vanishes() {
        let m = model(0.02);
        let mut region = full(&m);
        region[0] = false;
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let zt = m.ztilde(&region, &config, &[0], &method).unwrap();
        assert_eq!(zt.value, 0.0);
    }

    #[test]
    fn identity13_exact_at_lambda_zero() {
        let grid = Grid::line(-4.0, 4.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.0).unwrap();
        let region = box_mask(&m.grid, &[-2.0], &[2.0]).unwrap();
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let rep = m.identity13_residual(&region, &config, &method).unwrap();
        assert!(rep.residual < 1e-12, "residual {}", rep.residual);
        assert_eq!(rep.std_err, 0.0);
    }

    #[test]
    fn identity13_holds_with_interaction() {
        let grid = Grid::line(-4.0, 4.0, 1.0).unwrap();
        let m = Model::new(grid, KernelParams::d1(), 0.01).unwrap();
        let region = box_mask(&m.grid, &[-2.0], &[2.0]).unwrap();
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 200_000,
            seed: 11,
        };
        let rep = m.identity13_residual(&region, &config, &method).unwrap();
        assert!(
            rep.residual < 5.0 * rep.std_err + 1e-8,
            "residual {} vs std err {}",
            rep.residual,
            rep.std_err
        );
    }

    #[test]
    fn telescoping_exact_at_lambda_zero() {
        let m = model(0.0);
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 10,
            seed: 1,
        };
        let rep = m
            .telescoping_expansion_check(&full(&m), &config, &[2.0], 1, &method)
            .unwrap();
        assert!(rep.residuals[0] < 1e-12, "residual {}", rep.residuals[0]);
        assert_eq!(rep.std_err, 0.0);
    }

    #[test]
    fn telescoping_residual_shrinks_with_depth() {
        let m = model(0.02);
        let config = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let method = Method::Hybrid {
            samples: 100_000,
            seed: 9,
        };
        let rep = m
            .telescoping_expansion_check(&full(&m), &config, &[2.0], 3, &method)
            .unwrap();
        assert!(rep.residuals[1] <= rep.residuals[0] + 5.0 * rep.std_err);
        // on this window the level-three sum is empty, so depth two is the
        // whole series up to sampling noise
        assert!(
            rep.residuals[2] < 5.0 * rep.std_err + 1e-7,
            "residuals {:?} vs std err {}",
            rep.residuals,
            rep.std_err
        );
    }
}
