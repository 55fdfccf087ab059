//! Ordered trees, exact Speer weights and the Catalan identity.
//!
//! All identity checks run in exact rational arithmetic; no floating point
//! enters the combinatorics.

use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use serde::{Deserialize, Serialize};

/// An ordered tree on n >= 2 vertices: a parent map eta with eta(j) < j for
/// j = 2..n. `parent[j-2]` stores eta(j) (1-based values).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedTree {
    parent: Vec<usize>,
}

impl OrderedTree {
    pub fn new(parent: Vec<usize>) -> Result<Self> {
        for (idx, &p) in parent.iter().enumerate() {
            let j = idx + 2;
            if p == 0 || p >= j {
                return Err(Error::Domain(format!(
                    "parent of vertex {j} must lie in 1..{}, got {p}",
                    j - 1
                )));
            }
        }
        Ok(OrderedTree { parent })
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.parent.len() + 1
    }

    /// eta(j) for j in 2..=n.
    pub fn parent_of(&self, j: usize) -> usize {
        self.parent[j - 2]
    }

    /// Parent array [eta(2), ..., eta(n)].
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Degree counts d_eta(j) = |eta^{-1}({j})| for j = 1..n-1.
    pub fn degree_counts(&self) -> Vec<usize> {
        let n = self.n();
        let mut d = vec![0usize; n - 1];
        for &p in &self.parent {
            d[p - 1] += 1;
        }
        d
    }
}

/// Streaming enumeration of all (n-1)! ordered trees on n vertices.
pub struct TreeIter {
    state: Vec<usize>,
    done: bool,
}

impl Iterator for TreeIter {
    type Item = OrderedTree;

    fn next(&mut self) -> Option<OrderedTree> {
        if self.done {
            return None;
        }
        let tree = OrderedTree {
            parent: self.state.clone(),
        };
        // mixed-radix odometer: digit for vertex j runs over 1..j-1
        let mut idx = 0;
        loop {
            if idx == self.state.len() {
                self.done = true;
                break;
            }
            let j = idx + 2;
            self.state[idx] += 1;
            if self.state[idx] <= j - 1 {
                break;
            }
            self.state[idx] = 1;
            idx += 1;
        }
        Some(tree)
    }
}

/// Enumerate all ordered trees for 2 <= n <= 10.
pub fn enumerate_trees(n: usize) -> Result<TreeIter> {
    if !(2..=10).contains(&n) {
        return Err(Error::Capability(format!(
            "tree enumeration supports 2 <= n <= 10, got {n}"
        )));
    }
    Ok(TreeIter {
        state: vec![1; n - 1],
        done: false,
    })
}

/// Exponent vector of the t-monomial attached to a tree:
/// e_l = |{ j : eta(j) <= l <= j-2 }| for l = 1..n-1.
pub fn t_exponents(tree: &OrderedTree) -> Vec<u32> {
    let n = tree.n();
    let mut e = vec![0u32; n - 1];
    for j in 2..=n {
        let p = tree.parent_of(j);
        for l in p..=j.saturating_sub(2) {
            e[l - 1] += 1;
        }
    }
    e
}

/// Speer weight of an ordered tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeerWeight {
    /// Exact value (prod_j d_eta(j)!) * prod_l 1/(e_l + 1).
    pub value: BigRational,
    pub t_exponents: Vec<u32>,
}

fn factorial(k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 2..=k {
        acc *= BigInt::from(i);
    }
    acc
}

/// Exact Speer weight: the degree factorials times the t-monomial integral.
pub fn speer_weight(tree: &OrderedTree) -> SpeerWeight {
    let exps = t_exponents(tree);
    let mut num = BigInt::one();
    for d in tree.degree_counts() {
        num *= factorial(d);
    }
    let mut den = BigInt::one();
    for &e in &exps {
        den *= BigInt::from(e + 1);
    }
    SpeerWeight {
        value: BigRational::new(num, den),
        t_exponents: exps,
    }
}

/// Sum of Speer weights over all ordered trees on n vertices. Equals the
/// Catalan number (1/n) * binom(2n-2, n-1) exactly.
pub fn lemma3_sum(n: usize) -> Result<BigRational> {
    let mut total = BigRational::zero();
    for tree in enumerate_trees(n)? {
        total += speer_weight(&tree).value;
    }
    Ok(total)
}

/// Closed-form Catalan value (1/n) * binom(2n-2, n-1).
pub fn catalan_closed_form(n: usize) -> BigRational {
    let num = factorial(2 * n - 2);
    let den = factorial(n - 1).pow(2) * BigInt::from(n);
    BigRational::new(num, den)
}

/// Verify the power-series coefficients of (1 - sqrt(1 - 4x))/2 against the
/// tree sums for 2 <= n <= order, in exact rationals.
pub fn generating_function_check(order: usize) -> Result<bool> {
    if order > 10 {
        return Err(Error::Capability(format!("order {order} exceeds 10")));
    }
    // omega = x + omega^2 gives the coefficient recurrence
    // a_1 = 1, a_n = sum_{i+j=n} a_i a_j.
    let mut coeffs: Vec<BigRational> = vec![BigRational::zero(); order + 1];
    if order >= 1 {
        coeffs[1] = BigRational::one();
    }
    for n in 2..=order {
        let mut acc = BigRational::zero();
        for i in 1..n {
            acc += &coeffs[i] * &coeffs[n - i];
        }
        coeffs[n] = acc;
    }
    for n in 2..=order {
        if coeffs[n] != lemma3_sum(n)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::ToPrimitive;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rational(n: i64) -> BigRational {
        BigRational::from(BigInt::from(n))
    }

    #[test]
    fn enumeration_small_cases() {
        let trees: Vec<_> = enumerate_trees(2).unwrap().collect();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].parents(), &[1]);

        let trees: Vec<_> = enumerate_trees(3).unwrap().collect();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].parents(), &[1, 1]);
        assert_eq!(trees[1].parents(), &[1, 2]);
    }

    #[test]
    fn enumeration_counts_are_factorials() {
        // brute-force oracle: (n-1)! distinct trees, no duplicates
        for n in 2..=7 {
            let trees: Vec<_> = enumerate_trees(n).unwrap().collect();
            let expected: usize = (1..n).product();
            assert_eq!(trees.len(), expected);
            let mut seen: std::collections::HashSet<Vec<usize>> =
                std::collections::HashSet::new();
            for t in &trees {
                assert!(seen.insert(t.parents().to_vec()));
                for j in 2..=n {
                    assert!(t.parent_of(j) < j);
                }
            }
        }
    }

    #[test]
    fn enumeration_range_checks() {
        assert!(enumerate_trees(1).is_err());
        assert!(enumerate_trees(11).is_err());
    }

    #[test]
    fn t_exponent_examples() {
        // n=2: single empty product
        let t2 = OrderedTree::new(vec![1]).unwrap();
        assert_eq!(t_exponents(&t2), vec![0]);
        // n=3, eta(3)=2: empty l-range
        let t3a = OrderedTree::new(vec![1, 2]).unwrap();
        assert_eq!(t_exponents(&t3a), vec![0, 0]);
        // n=3, eta(3)=1: t_1 appears once
        let t3b = OrderedTree::new(vec![1, 1]).unwrap();
        assert_eq!(t_exponents(&t3b), vec![1, 0]);
    }

    #[test]
    fn exponent_degree_identity() {
        // sum_l e_l = sum_j (j - 1 - eta(j)) for every tree
        for n in 2..=7 {
            for tree in enumerate_trees(n).unwrap() {
                let lhs: u32 = t_exponents(&tree).iter().sum();
                let rhs: usize = (2..=n).map(|j| j - 1 - tree.parent_of(j)).sum();
                assert_eq!(lhs as usize, rhs);
            }
        }
    }

    #[test]
    fn speer_weight_examples() {
        let t2 = OrderedTree::new(vec![1]).unwrap();
        assert_eq!(speer_weight(&t2).value, rational(1));
        let t3a = OrderedTree::new(vec![1, 2]).unwrap();
        assert_eq!(speer_weight(&t3a).value, rational(1));
        let t3b = OrderedTree::new(vec![1, 1]).unwrap();
        // 2! * 1/2
        assert_eq!(speer_weight(&t3b).value, rational(1));
        // weights are positive rationals
        for tree in enumerate_trees(6).unwrap() {
            assert!(speer_weight(&tree).value > BigRational::zero());
        }
    }

    #[test]
    fn lemma3_identity_small() {
        assert_eq!(lemma3_sum(2).unwrap(), rational(1));
        assert_eq!(lemma3_sum(3).unwrap(), rational(2));
        assert_eq!(lemma3_sum(6).unwrap(), rational(42));
    }

    #[test]
    fn lemma3_identity_and_bound_through_10() {
        let catalan = [1i64, 2, 5, 14, 42, 132, 429, 1430, 4862];
        for (i, &c) in catalan.iter().enumerate() {
            let n = i + 2;
            let sum = lemma3_sum(n).unwrap();
            assert_eq!(sum, rational(c), "n = {n}");
            assert_eq!(sum, catalan_closed_form(n), "closed form, n = {n}");
            assert!(sum <= rational(4i64.pow((n - 1) as u32)));
        }
    }

    #[test]
    fn generating_function_matches() {
        assert!(generating_function_check(10).unwrap());
        assert!(generating_function_check(2).unwrap());
        assert!(generating_function_check(11).is_err());
    }

    #[test]
    fn weight_matches_monte_carlo_t_integration() {
        // cross-validate the exact integral against MC integration of the
        // t-monomial
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        'outer: for n in (3..=7).cycle() {
            let trees: Vec<_> = enumerate_trees(n).unwrap().collect();
            let tree = trees[rng.gen_range(0..trees.len())].clone();
            let exps = t_exponents(&tree);
            let samples = 400_000;
            let mut acc = 0.0f64;
            for _ in 0..samples {
                let mut prod = 1.0;
                for &e in &exps {
                    if e > 0 {
                        let t: f64 = rng.gen();
                        prod *= t.powi(e as i32);
                    }
                }
                acc += prod;
            }
            let mc = acc / samples as f64;
            let dfact: f64 = tree
                .degree_counts()
                .iter()
                .map(|&d| (1..=d).product::<usize>() as f64)
                .product();
            let exact = speer_weight(&tree).value.to_f64().unwrap();
            let mc_weight = dfact * mc;
            assert!(
                (mc_weight - exact).abs() / exact < 2e-2,
                "tree {:?}: mc {} vs exact {}",
                tree.parents(),
                mc_weight,
                exact
            );
            checked += 1;
            if checked >= 20 {
                break 'outer;
            }
        }
    }
}
