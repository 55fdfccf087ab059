//! Sparse multivariate polynomials in the field variables at grid sites.
//!
//! Used to push functional-derivative operators through `P(phi) e^{V(phi)}`
//! factors: derivatives map the polynomial prefactor to another polynomial.

use std::collections::BTreeMap;

/// A monomial: site index -> exponent. Empty map is the constant 1.
pub type Monomial = BTreeMap<usize, u32>;

/// Sparse polynomial with deterministic term order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn one() -> Self {
        Polynomial::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Polynomial::default();
        if c != 0.0 {
            p.terms.insert(Monomial::new(), c);
        }
        p
    }

    /// phi_site^power with unit coefficient.
    pub fn variable(site: usize, power: u32) -> Self {
        let mut m = Monomial::new();
        if power > 0 {
            m.insert(site, power);
        }
        let mut p = Polynomial::default();
        p.terms.insert(m, 1.0);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            let key: Vec<Monomial> = self
                .terms
                .iter()
                .filter(|(_, &v)| v == 0.0)
                .map(|(k, _)| k.clone())
                .collect();
            for k in key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn add(&mut self, other: &Polynomial) {
        for (m, c) in other.terms() {
            self.add_term(m.clone(), c);
        }
    }

    pub fn scaled(&self, factor: f64) -> Polynomial {
        let mut out = Polynomial::default();
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * factor);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::default();
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                let mut m = ma.clone();
                for (&s, &e) in mb {
                    *m.entry(s).or_insert(0) += e;
                }
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to phi at `site`.
    pub fn derivative(&self, site: usize) -> Polynomial {
        let mut out = Polynomial::default();
        for (m, c) in self.terms() {
            if let Some(&e) = m.get(&site) {
                let mut dm = m.clone();
                if e == 1 {
                    dm.remove(&site);
                } else {
                    dm.insert(site, e - 1);
                }
                out.add_term(dm, c * e as f64);
            }
        }
        out
    }

    /// Evaluate at a field vector indexed by site.
    pub fn eval(&self, phi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in self.terms() {
            let mut prod = c;
            for (&s, &e) in m {
                prod *= phi[s].powi(e as i32);
            }
            acc += prod;
        }
        acc
    }

    /// Some(0) if every term has even total degree, Some(1) if every term
    /// is odd, None for mixed parity. The zero polynomial counts as even.
    pub fn parity(&self) -> Option<u8> {
        let mut parity = None;
        for m in self.terms.keys() {
            let p = (m.values().sum::<u32>() % 2) as u8;
            match parity {
                None => parity = Some(p),
                Some(q) if q != p => return None,
                _ => {}
            }
        }
        parity.or(Some(0))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.values().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// All sites appearing in any term.
    pub fn support(&self) -> Vec<usize> {
        let mut sites: Vec<usize> = self
            .terms
            .keys()
            .flat_map(|m| m.keys().copied())
            .collect();
        sites.sort_unstable();
        sites.dedup();
        sites
    }

    /// Rewrite site indices through a map (old site -> new site).
    pub fn remap(&self, map: &BTreeMap<usize, usize>) -> Polynomial {
        let mut out = Polynomial::default();
        for (m, c) in self.terms() {
            let remapped: Monomial = m.iter().map(|(&s, &e)| (map[&s], e)).collect();
            out.add_term(remapped, c);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_and_eval() {
        // p = 2 phi_0^2 phi_1 + 3
        let mut p = Polynomial::constant(3.0);
        let mut m = Monomial::new();
        m.insert(0, 2);
        m.insert(1, 1);
        p.add_term(m, 2.0);
        assert_relative_eq!(p.eval(&[2.0, 5.0]), 2.0 * 4.0 * 5.0 + 3.0);
        assert_eq!(p.total_degree(), 3);
        assert_eq!(p.support(), vec![0, 1]);
    }

    #[test]
    fn derivative_product_rule_spot_check() {
        let p = Polynomial::variable(0, 3); // phi_0^3
        let d = p.derivative(0);
        assert_relative_eq!(d.eval(&[2.0]), 12.0);
        assert!(p.derivative(1).is_zero());
        let q = p.mul(&Polynomial::variable(1, 2));
        let dq = q.derivative(1);
        assert_relative_eq!(dq.eval(&[2.0, 3.0]), 8.0 * 2.0 * 3.0);
    }

    #[test]
    fn cancellation_removes_terms() {
        let mut p = Polynomial::variable(0, 1);
        p.add(&Polynomial::variable(0, 1).scaled(-1.0));
        assert!(p.is_zero());
    }
}
