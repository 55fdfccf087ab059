//! Finite-dimensional Gaussian measure engine.
//!
//! Provides the grid discretization carrier, interpolated covariances and
//! their t-derivative, Wick moments by two independent routes, the
//! change-of-covariance check and the moment-bound scans.

use crate::covariance::{covariance, KernelParams};
use crate::geometry::{ball_contains, PointConfiguration};
use crate::poly::{Monomial, Polynomial};
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Lattice discretization of a window: continuum integrals become
/// `spacing^d` times site sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    pub dimension: usize,
    pub spacing: f64,
    pub sites: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(dimension: usize, spacing: f64, sites: Vec<Vec<f64>>) -> Result<Self> {
        if spacing <= 0.0 {
            return Err(Error::Domain("grid spacing must be positive".into()));
        }
        for s in &sites {
            if s.len() != dimension {
                return Err(Error::Dimension("site dimension mismatch".into()));
            }
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                if crate::dist(&sites[i], &sites[j]) < 1e-12 {
                    return Err(Error::Domain("duplicate grid sites".into()));
                }
            }
        }
        Ok(Grid {
            dimension,
            spacing,
            sites,
        })
    }

    /// 1-d grid covering [lo, hi] with spacing h, sites at lo, lo+h, ...
    pub fn line(lo: f64, hi: f64, h: f64) -> Result<Self> {
        if hi < lo {
            return Err(Error::Domain("empty interval".into()));
        }
        let n = ((hi - lo) / h + 0.5).floor() as usize + 1;
        let sites = (0..n).map(|i| vec![lo + i as f64 * h]).collect();
        Grid::new(1, h, sites)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Volume element h^d.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension as i32)
    }

    /// Index of the site at the given point, within tolerance.
    pub fn site_index(&self, point: &[f64]) -> Option<usize> {
        self.sites
            .iter()
            .position(|s| crate::dist(s, point) < 1e-9)
    }

    /// Mask of sites inside the union of unit balls around the points.
    pub fn ball_mask(&self, points: &[Vec<f64>]) -> Vec<bool> {
        self.sites
            .iter()
            .map(|s| ball_contains(points, s))
            .collect()
    }

    /// Mask of sites in the k-th shell of the configuration.
    pub fn shell_mask(&self, config: &PointConfiguration, k: usize) -> Vec<bool> {
        let inner = self.ball_mask(&config.points()[..k - 1]);
        let outer = self.ball_mask(&config.points()[..k]);
        outer
            .iter()
            .zip(&inner)
            .map(|(&o, &i)| o && !i)
            .collect()
    }
}

/// Symmetric PSD kernel sampled on a site set.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    m: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension("covariance matrix must be square".into()));
        }
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Domain("covariance matrix not symmetric".into()));
                }
            }
        }
        Ok(CovarianceMatrix { m })
    }

    /// Kernel matrix of the regularized covariance on the grid sites.
    pub fn on_grid(grid: &Grid, params: &KernelParams) -> Result<Self> {
        let n = grid.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = covariance(&grid.sites[i], &grid.sites[j], params)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(CovarianceMatrix { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.m.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Marginal over a subset of indices (exact for Gaussians).
    pub fn marginal(&self, indices: &[usize]) -> CovarianceMatrix {
        let k = indices.len();
        let mut m = DMatrix::zeros(k, k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                m[(a, b)] = self.m[(i, j)];
            }
        }
        CovarianceMatrix { m }
    }
}

/// A point of the interpolation family: t in [0,1]^n over an admissible
/// configuration.
#[derive(Debug, Clone)]
pub struct InterpolationState {
    pub t: Vec<f64>,
    pub config: PointConfiguration,
}

impl InterpolationState {
    pub fn new(t: Vec<f64>, config: PointConfiguration) -> Result<Self> {
        if t.len() != config.len() {
            return Err(Error::Dimension(format!(
                "t of length {} with configuration of length {}",
                t.len(),
                config.len()
            )));
        }
        if t.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("interpolation parameters outside [0,1]".into()));
        }
        Ok(InterpolationState { t, config })
    }
}

fn masked(m: &DMatrix<f64>, row_mask: &[bool], col_mask: &[bool]) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !(row_mask[i] && col_mask[j]) {
                out[(i, j)] = 0.0;
            }
        }
    }
    out
}

/// Interpolated covariance via the convex recursion: each step blends the
/// previous kernel with its block-diagonal (ball vs. complement) version.
pub fn interpolate(
    base: &CovarianceMatrix,
    grid: &Grid,
    state: &InterpolationState,
) -> Result<CovarianceMatrix> {
    if base.dim() != grid.len() {
        return Err(Error::Dimension(
            "covariance dimension does not match grid".into(),
        ));
    }
    let mut current = base.m.clone();
    for k in 1..=state.config.len() {
        let tk = state.t[k - 1];
        let ball = grid.ball_mask(&state.config.points()[..k]);
        let comp: Vec<bool> = ball.iter().map(|&b| !b).collect();
        let inside = masked(&current, &ball, &ball);
        let outside = masked(&base.m, &comp, &comp);
        current = current.map(|v| tk * v) + (inside + outside).map(|v| (1.0 - tk) * v);
    }
    CovarianceMatrix::from_matrix(current)
}

/// Closed-form derivative of the interpolated covariance with respect to the
/// last parameter: a sum of shell-to-complement cross blocks of the base
/// kernel weighted by trailing t-products.
pub fn dcov_dt_last(
    base: &CovarianceMatrix,
    grid: &Grid,
    state: &InterpolationState,
) -> Result<DMatrix<f64>> {
    let n = state.config.len();
    if n == 0 {
        return Err(Error::Domain("derivative needs at least one point".into()));
    }
    let ball = grid.ball_mask(state.config.points());
    let comp: Vec<bool> = ball.iter().map(|&b| !b).collect();
    let mut out = DMatrix::zeros(base.dim(), base.dim());
    for k in 1..=n {
        let tprod: f64 = state.t[k - 1..n - 1].iter().product();
        let shell = grid.shell_mask(&state.config, k);
        let block = masked(&base.m, &shell, &comp);
        out += (block.clone() + block.transpose()).map(|v| tprod * v);
    }
    Ok(out)
}

/// Gaussian expectation of a monomial by explicit sum over perfect
/// matchings. Independent oracle for the recursion route.
pub fn wick_moment_matchings(c: &CovarianceMatrix, m: &Monomial) -> Result<f64> {
    let legs = monomial_legs(c, m)?;
    if legs.len() % 2 == 1 {
        return Ok(0.0);
    }
    fn matchings(legs: &[usize], c: &DMatrix<f64>) -> f64 {
        if legs.is_empty() {
            return 1.0;
        }
        let first = legs[0];
        let mut acc = 0.0;
        for k in 1..legs.len() {
            let rest: Vec<usize> = legs[1..]
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k - 1)
                .map(|(_, &l)| l)
                .collect();
            acc += c[(first, legs[k])] * matchings(&rest, c);
        }
        acc
    }
    Ok(matchings(&legs, &c.m))
}

/// Gaussian expectation of a monomial via the integration-by-parts
/// recursion, memoized on the sorted leg multiset.
pub fn wick_moment(c: &CovarianceMatrix, m: &Monomial) -> Result<f64> {
    let legs = monomial_legs(c, m)?;
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    Ok(wick_rec(&legs, &c.m, &mut cache))
}

fn monomial_legs(c: &CovarianceMatrix, m: &Monomial) -> Result<Vec<usize>> {
    let mut legs = Vec::new();
    for (&site, &e) in m {
        if site >= c.dim() {
            return Err(Error::Dimension(format!(
                "site {site} outside covariance of dimension {}",
                c.dim()
            )));
        }
        for _ in 0..e {
            legs.push(site);
        }
    }
    if legs.len() > 14 {
        return Err(Error::Capability(format!(
            "total degree {} exceeds the cap of 14",
            legs.len()
        )));
    }
    legs.sort_unstable();
    Ok(legs)
}

fn wick_rec(legs: &[usize], c: &DMatrix<f64>, cache: &mut HashMap<Vec<usize>, f64>) -> f64 {
    if legs.is_empty() {
        return 1.0;
    }
    if legs.len() % 2 == 1 {
        return 0.0;
    }
    if let Some(&v) = cache.get(legs) {
        return v;
    }
    // integrate the first leg by parts against the rest
    let first = legs[0];
    let mut acc = 0.0;
    for k in 1..legs.len() {
        let rest: Vec<usize> = legs[1..]
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k - 1)
            .map(|(_, &l)| l)
            .collect();
        acc += c[(first, legs[k])] * wick_rec(&rest, c, cache);
    }
    cache.insert(legs.to_vec(), acc);
    acc
}

/// Gaussian expectation of a polynomial (term-by-term Wick sum).
pub fn expectation_poly(c: &CovarianceMatrix, p: &Polynomial) -> Result<f64> {
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut acc = 0.0;
    for (m, coeff) in p.terms() {
        let legs = monomial_legs(c, m)?;
        acc += coeff * wick_rec(&legs, &c.m, &mut cache);
    }
    Ok(acc)
}

/// Residual of the change-of-covariance identity for a polynomial
/// functional: the t_n-derivative of the expectation versus the closed-form
/// double-derivative contraction against the kernel derivative.
pub fn change_of_covariance_residual(
    base: &CovarianceMatrix,
    grid: &Grid,
    state: &InterpolationState,
    f: &Polynomial,
    eps: f64,
) -> Result<f64> {
    let n = state.config.len();
    if n == 0 {
        return Err(Error::Domain("state must contain at least one point".into()));
    }
    if f.total_degree() > 8 {
        return Err(Error::Capability("polynomial degree exceeds 8".into()));
    }
    let tn = state.t[n - 1];
    let (lo, hi) = ((tn - eps).max(0.0), (tn + eps).min(1.0));
    let make = |t_last: f64| -> Result<f64> {
        let mut t = state.t.clone();
        t[n - 1] = t_last;
        let st = InterpolationState::new(t, state.config.clone())?;
        let cov = interpolate(base, grid, &st)?;
        expectation_poly(&cov, f)
    };
    let lhs = (make(hi)? - make(lo)?) / (hi - lo);

    let dcov = dcov_dt_last(base, grid, state)?;
    let cov_t = interpolate(base, grid, state)?;
    let ball = grid.ball_mask(state.config.points());
    let mut rhs = 0.0;
    for a in 0..grid.len() {
        if ball[a] {
            continue; // a ranges over the ball complement
        }
        for b in 0..grid.len() {
            if !ball[b] {
                continue;
            }
            if dcov[(a, b)] == 0.0 {
                continue;
            }
            let second = f.derivative(a).derivative(b);
            if second.is_zero() {
                continue;
            }
            rhs += dcov[(a, b)] * expectation_poly(&cov_t, &second)?;
        }
    }
    Ok((lhs - rhs).abs())
}

/// Sampler for N(0, C) with eigenvalue clipping at zero, so exactly
/// semi-definite kernels (block-factorized interpolations) stay sampleable.
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(c: &CovarianceMatrix) -> Result<Self> {
        let eig = SymmetricEigen::new(c.m.clone());
        let dim = c.dim();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-8 * dim as f64 {
            return Err(Error::Domain(format!(
                "covariance has significantly negative eigenvalue {min}"
            )));
        }
        let mut factor = eig.eigenvectors.clone();
        for j in 0..dim {
            let s = eig.eigenvalues[j].max(0.0).sqrt();
            for i in 0..dim {
                factor[(i, j)] *= s;
            }
        }
        Ok(GaussianSampler { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let dim = self.dim();
        let mut z = vec![0.0f64; dim];
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += self.factor[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }
}

/// One cell of the absolute-moment scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma2Cell {
    pub r: usize,
    pub n: usize,
    pub lhs: f64,
    pub std_err: f64,
}

/// Result of the absolute-moment bound scan: smallest constants with
/// lhs <= c3^r c4^n sqrt(r!) over the scanned family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma2Scan {
    pub c3: f64,
    pub c4: f64,
    pub cells: Vec<Lemma2Cell>,
}

/// Monte Carlo scan of E[prod (1+|phi_w|) prod (1+|phi_x|)^3] over
/// (r, n) <= (max_r, max_n); absolute moments have no closed form.
pub fn lemma2_constant_scan(
    params: &KernelParams,
    externals: &[Vec<f64>],
    config: &PointConfiguration,
    t: &[f64],
    max_r: usize,
    max_n: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Lemma2Scan> {
    if max_r > 6 || max_n > 4 {
        return Err(Error::Capability("scan capped at r <= 6, n <= 4".into()));
    }
    if externals.len() < max_r || config.len() < max_n {
        return Err(Error::Domain("not enough points for the requested scan".into()));
    }
    let mut cells = Vec::new();
    for n in 0..=max_n {
        // point set: externals followed by the first n configuration points
        let mut pts: Vec<Vec<f64>> = externals.to_vec();
        pts.extend(config.points()[..n].iter().cloned());
        let adhoc = Grid::new(params.dimension, 1.0, pts.clone())?;
        let base = CovarianceMatrix::on_grid(&adhoc, params)?;
        let state =
            InterpolationState::new(t[..n].to_vec(), config.prefix(n))?;
        let cov = interpolate(&base, &adhoc, &state)?;
        let sampler = GaussianSampler::new(&cov)?;
        let mut phi = vec![0.0; pts.len()];
        // accumulate all r-moments from the same sample stream
        let mut sums = vec![0.0f64; max_r + 1];
        let mut sq = vec![0.0f64; max_r + 1];
        for _ in 0..samples {
            sampler.sample_into(rng, &mut phi);
            let mut config_part = 1.0;
            for j in 0..n {
                let v = 1.0 + phi[externals.len() + j].abs();
                config_part *= v * v * v;
            }
            let mut ext = 1.0;
            for r in 0..=max_r {
                if r > 0 {
                    ext *= 1.0 + phi[r - 1].abs();
                }
                let val = ext * config_part;
                sums[r] += val;
                sq[r] += val * val;
            }
        }
        for r in 0..=max_r {
            let mean = sums[r] / samples as f64;
            let var = (sq[r] / samples as f64 - mean * mean).max(0.0);
            cells.push(Lemma2Cell {
                r,
                n,
                lhs: mean,
                std_err: (var / samples as f64).sqrt(),
            });
        }
    }
    // fit the smallest constants >= 1
    let mut c4: f64 = 1.0;
    for cell in cells.iter().filter(|c| c.r == 0 && c.n > 0) {
        c4 = c4.max(cell.lhs.powf(1.0 / cell.n as f64));
    }
    let mut c3: f64 = 1.0;
    for cell in cells.iter().filter(|c| c.r > 0) {
        let rfact: f64 = (1..=cell.r).product::<usize>() as f64;
        let needed = cell.lhs / (c4.powi(cell.n as i32) * rfact.sqrt());
        if needed > 1.0 {
            c3 = c3.max(needed.powf(1.0 / cell.r as f64));
        }
    }
    Ok(Lemma2Scan { c3, c4, cells })
}

/// Smallest constant c with |<prod phi^{s_j}>| <= c^s prod (s_j!)^{1/2}
/// over all even monomials of total degree <= max_degree on the point set.
pub fn moment_envelope_constant(c: &CovarianceMatrix, max_degree: u32) -> Result<f64> {
    if max_degree > 12 {
        return Err(Error::Capability("degree cap is 12".into()));
    }
    let dim = c.dim();
    if dim > 4 {
        return Err(Error::Capability("envelope scan capped at 4 points".into()));
    }
    let mut best: f64 = 0.0;
    let mut exps = vec![0u32; dim];
    scan_exponents(&mut exps, 0, max_degree, &mut |e: &[u32]| {
        let total: u32 = e.iter().sum();
        if total == 0 || total % 2 == 1 {
            return Ok(());
        }
        let m: Monomial = e
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (i, v))
            .collect();
        let moment = wick_moment(c, &m)?;
        let denom: f64 = e
            .iter()
            .map(|&v| ((1..=v as usize).product::<usize>() as f64).sqrt())
            .product();
        let s = (total / 2) as f64;
        let ratio = (moment.abs() / denom).powf(1.0 / s);
        if ratio > best {
            best = ratio;
        }
        Ok(())
    })?;
    Ok(best.max(1e-300))
}

fn scan_exponents(
    exps: &mut Vec<u32>,
    idx: usize,
    budget: u32,
    f: &mut impl FnMut(&[u32]) -> Result<()>,
) -> Result<()> {
    if idx == exps.len() {
        return f(exps);
    }
    for v in 0..=budget {
        exps[idx] = v;
        scan_exponents(exps, idx + 1, budget - v, f)?;
    }
    exps[idx] = 0;
    Ok(())
}

/// Stationary point of xi -> (1+xi)^4 - 2 xi^4 on [0, inf).
pub fn lemma1_stationary_point() -> f64 {
    1.0 / (2.0f64.powf(1.0 / 3.0) - 1.0)
}

/// The constant sup_{xi >= 0} ((1+xi)^4 - 2 xi^4) in closed form.
pub fn lemma1_constant() -> f64 {
    let xi = lemma1_stationary_point();
    xi.powi(4) * (2.0f64.powf(4.0 / 3.0) - 2.0)
}
