//! Gaussian quadrature rules built via Golub-Welsch.
//!
//! Nodes and weights come from the symmetric eigenproblem of the Jacobi
//! matrix of the orthogonal-polynomial recurrence, which is accurate and
//! dependency-free at the orders used here (<= 64).

use nalgebra::{DMatrix, SymmetricEigen};

/// One-dimensional quadrature rule: paired nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn golub_welsch(off_diag: &[f64], moment0: f64) -> Rule {
    let n = off_diag.len() + 1;
    let mut jac = DMatrix::zeros(n, n);
    for (k, &b) in off_diag.iter().enumerate() {
        jac[(k, k + 1)] = b;
        jac[(k + 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], moment0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(order: usize) -> Rule {
    assert!(order >= 1, "quadrature order must be positive");
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Rule {
        nodes: base.nodes.iter().map(|&x| mid + half * x).collect(),
        weights: base.weights.iter().map(|&w| w * half).collect(),
    }
}

/// Probabilists' Gauss-Hermite rule normalized to the standard normal:
/// sum w_i f(x_i) approximates E[f(X)] for X ~ N(0, 1).
pub fn gauss_hermite_norm(order: usize) -> Rule {
    assert!(order >= 1, "quadrature order must be positive");
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&off, 1.0)
}

/// Composite Gauss-Legendre over equally sized panels.
pub fn composite_legendre(a: f64, b: f64, panels: usize, order: usize) -> Rule {
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let rule = gauss_legendre_on(a + p as f64 * step, a + (p + 1) as f64 * step, order);
        nodes.extend(rule.nodes);
        weights.extend(rule.weights);
    }
    Rule { nodes, weights }
}

/// Iterator over the points of a tensor-product grid of `dims` copies of a
/// 1-d rule, yielding (node vector, weight) without materializing the grid.
pub struct TensorGrid<'a> {
    rule: &'a Rule,
    dims: usize,
    index: Vec<usize>,
    done: bool,
}

impl<'a> TensorGrid<'a> {
    pub fn new(rule: &'a Rule, dims: usize) -> Self {
        TensorGrid {
            rule,
            dims,
            index: vec![0; dims],
            done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rule.nodes.len().pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write the current node into `out`, return its weight, and advance.
    /// Returns `None` once the grid is exhausted.
    pub fn next_into(&mut self, out: &mut [f64]) -> Option<f64> {
        if self.done {
            return None;
        }
        let mut w = 1.0;
        for (d, &i) in self.index.iter().enumerate() {
            out[d] = self.rule.nodes[i];
            w *= self.rule.weights[i];
        }
        // odometer advance
        let mut d = 0;
        loop {
            if d == self.dims {
                self.done = true;
                break;
            }
            self.index[d] += 1;
            if self.index[d] < self.rule.nodes.len() {
                break;
            }
            self.index[d] = 0;
            d += 1;
        }
        if self.dims == 0 {
            self.done = true;
        }
        Some(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        // degree 15 is exact for order 8
        let val = rule.integrate(|x| x.powi(14));
        assert_relative_eq!(val, 2.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn legendre_on_interval() {
        let rule = gauss_legendre_on(0.5, 1.0, 16);
        let val = rule.integrate(|x| (-x).exp());
        let exact = (-0.5f64).exp() - (-1.0f64).exp();
        assert_relative_eq!(val, exact, epsilon = 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite_norm(12);
        assert_relative_eq!(rule.integrate(|_| 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rule.integrate(|x| x * x), 1.0, epsilon = 1e-11);
        assert_relative_eq!(rule.integrate(|x| x.powi(4)), 3.0, epsilon = 1e-10);
        assert_relative_eq!(rule.integrate(|x| x.powi(6)), 15.0, epsilon = 1e-9);
    }

    #[test]
    fn tensor_grid_sums_weights_to_one() {
        let rule = gauss_hermite_norm(5);
        let mut grid = TensorGrid::new(&rule, 3);
        let mut buf = [0.0; 3];
        let mut total = 0.0;
        while let Some(w) = grid.next_into(&mut buf) {
            total += w;
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_grid_zero_dims_yields_single_unit_point() {
        let rule = gauss_hermite_norm(5);
        let mut grid = TensorGrid::new(&rule, 0);
        let mut buf: [f64; 0] = [];
        assert_eq!(grid.next_into(&mut buf), Some(1.0));
        assert_eq!(grid.next_into(&mut buf), None);
    }
}
