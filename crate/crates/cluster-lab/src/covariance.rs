//! Regularized and full covariance kernels with decay certificates.
//!
//! The regularized kernel is the proper-time integral of the heat kernel
//! restricted to alpha in [1/2, 1]; the full kernel extends the integral to
//! (0, infinity) and is the Green's function of (-Laplacian + 1).

use crate::quadrature::{composite_legendre, gauss_legendre_on, Rule};
use crate::{dist, Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Lower end of the proper-time window.
pub const ALPHA_LO: f64 = 0.5;
/// Upper end of the proper-time window.
pub const ALPHA_HI: f64 = 1.0;

/// Parameters of the regularized kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelParams {
    pub dimension: usize,
    pub quadrature_order: usize,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl KernelParams {
    pub fn new(dimension: usize, quadrature_order: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::Capability(format!(
                "dimension {dimension} not supported (1 or 2)"
            )));
        }
        if quadrature_order < 8 {
            return Err(Error::Domain(format!(
                "quadrature order {quadrature_order} below minimum 8"
            )));
        }
        Ok(KernelParams {
            dimension,
            quadrature_order,
            alpha_lo: ALPHA_LO,
            alpha_hi: ALPHA_HI,
        })
    }

    /// Default 1-d kernel at order 32.
    pub fn d1() -> Self {
        KernelParams::new(1, 32).unwrap()
    }

    /// Default 2-d kernel at order 32.
    pub fn d2() -> Self {
        KernelParams::new(2, 32).unwrap()
    }

    fn rule(&self) -> Rule {
        gauss_legendre_on(self.alpha_lo, self.alpha_hi, self.quadrature_order)
    }
}

/// Certificate that 0 <= C(r) <= c1 exp(-2r) holds on a sampled grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub c1: f64,
    pub rate: f64,
    pub r_max: f64,
    pub n_samples: usize,
    /// Maximum of C(r) - c1 exp(-2r) over the grid; <= 0 when the bound holds.
    pub max_violation: f64,
}

/// Regularized covariance as a function of the separation r >= 0.
pub fn covariance_r(r: f64, p: &KernelParams) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Domain(format!("separation {r} not finite")));
    }
    let d = p.dimension as f64;
    let pref = (4.0 * std::f64::consts::PI).powf(-d / 2.0);
    let val = p
        .rule()
        .integrate(|a| a.powf(-d / 2.0) * (-a - r * r / (4.0 * a)).exp());
    Ok(pref * val)
}

/// Regularized covariance between two points.
pub fn covariance(x: &[f64], y: &[f64], p: &KernelParams) -> Result<f64> {
    if x.len() != p.dimension || y.len() != p.dimension {
        return Err(Error::Dimension(format!(
            "points of dimension {}/{} with kernel dimension {}",
            x.len(),
            y.len(),
            p.dimension
        )));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::Domain("non-finite coordinate".into()));
    }
    covariance_r(dist(x, y), p)
}

/// Full covariance as a function of separation; the Green's function of
/// (-Laplacian + 1). Refuses r = 0 for d >= 2 where the kernel diverges.
pub fn full_covariance_r(r: f64, d: usize) -> Result<f64> {
    if !(1..=2).contains(&d) {
        return Err(Error::Capability(format!("dimension {d} not supported")));
    }
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Domain(format!("separation {r} not finite")));
    }
    if d >= 2 && r == 0.0 {
        return Err(Error::Singular(
            "full covariance diverges at coincident points for d >= 2".into(),
        ));
    }
    // Substitute alpha = e^u; the integrand decays at both ends
    // (double-exponentially for u -> +inf, and for u -> -inf either through
    // the r^2/(4 alpha) factor or, at r = 0 in d = 1, through e^{u/2}).
    let df = d as f64;
    let pref = (4.0 * std::f64::consts::PI).powf(-df / 2.0);
    let rule = composite_legendre(-60.0, 6.0, 33, 12);
    let val = rule.integrate(|u| {
        let a = u.exp();
        let log_term = u * (1.0 - df / 2.0) - a - r * r / (4.0 * a);
        if log_term < -700.0 {
            0.0
        } else {
            log_term.exp()
        }
    });
    Ok(pref * val)
}

/// Full covariance between two points.
pub fn full_covariance(x: &[f64], y: &[f64], d: usize) -> Result<f64> {
    if x.len() != d || y.len() != d {
        return Err(Error::Dimension("point dimension mismatch".into()));
    }
    full_covariance_r(dist(x, y), d)
}

/// Smallest c1 on a sample grid such that 0 <= C(r) <= c1 exp(-2r) for
/// r in [0, r_max].
pub fn decay_constant(p: &KernelParams, r_max: f64, n_samples: usize) -> Result<DecayCertificate> {
    if r_max < 10.0 {
        return Err(Error::Domain(format!("r_max {r_max} below minimum 10")));
    }
    if n_samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let mut c1 = f64::NEG_INFINITY;
    for i in 0..n_samples {
        let r = r_max * i as f64 / (n_samples - 1) as f64;
        let c = covariance_r(r, p)?;
        if c < 0.0 {
            return Err(Error::Domain(format!("negative covariance at r = {r}")));
        }
        c1 = c1.max(c * (2.0 * r).exp());
    }
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..n_samples {
        let r = r_max * i as f64 / (n_samples - 1) as f64;
        let c = covariance_r(r, p)?;
        max_violation = max_violation.max(c - c1 * (-2.0 * r).exp());
    }
    Ok(DecayCertificate {
        c1,
        rate: 2.0,
        r_max,
        n_samples,
        max_violation,
    })
}

/// Minimum eigenvalue of the covariance matrix over a point set.
pub fn psd_check(points: &[Vec<f64>], p: &KernelParams) -> Result<f64> {
    if points.len() > 200 {
        return Err(Error::Capability(format!(
            "{} points exceed the 200-point cap",
            points.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::Domain("empty point set".into()));
    }
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = covariance(&points[i], &points[j], p)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}
