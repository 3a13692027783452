//! Truncated multivariate Taylor polynomials.
//!
//! A jet stores the Taylor coefficients `c_α` of a function at a point for all
//! multi-indices with `|α| ≤ order`; the derivative `∂^α` equals `α!·c_α`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial layout and multiplication table for a given variable count and order.
#[derive(Debug)]
pub(crate) struct JetSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// (a, b, c) with monomial a · monomial b = monomial c
    products: Vec<(u16, u16, u16)>,
    factorials: Vec<f64>,
}

impl JetSpace {
    pub(crate) fn get(nvars: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, order)))
            .clone()
    }

    fn build(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u8; nvars];
            push_degree(&mut monomials, &mut current, 0, degree);
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        for (a, ma) in monomials.iter().enumerate() {
            for (b, mb) in monomials.iter().enumerate() {
                let sum: Vec<u8> = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
                if let Some(&c) = index.get(&sum) {
                    products.push((a as u16, b as u16, c as u16));
                }
            }
        }
        let factorials = monomials
            .iter()
            .map(|m| m.iter().map(|&e| factorial(e as usize)).product())
            .collect();
        Self {
            nvars,
            order,
            monomials,
            index,
            products,
            factorials,
        }
    }

    pub(crate) fn nvars(&self) -> usize {
        self.nvars
    }

    pub(crate) fn order(&self) -> usize {
        self.order
    }

    pub(crate) fn len(&self) -> usize {
        self.monomials.len()
    }

    pub(crate) fn monomials(&self) -> &[Vec<u8>] {
        &self.monomials
    }

    pub(crate) fn index_of(&self, alpha: &[usize]) -> Option<usize> {
        let key: Vec<u8> = alpha.iter().map(|&a| a as u8).collect();
        self.index.get(&key).copied()
    }

    /// Index of the monomial `x_i`.
    pub(crate) fn linear(&self, i: usize) -> usize {
        let mut alpha = vec![0usize; self.nvars];
        alpha[i] = 1;
        self.index_of(&alpha).expect("order >= 1")
    }

    /// `α!` for monomial `i`.
    pub(crate) fn factorial(&self, i: usize) -> f64 {
        self.factorials[i]
    }

    pub(crate) fn mul(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for &(i, k, c) in &self.products {
            out[c as usize] += a[i as usize] * b[k as usize];
        }
        out
    }

    /// `g(a)` where `series[n] = g^(n)(a_0)/n!` are the Taylor coefficients of
    /// a univariate `g` at the constant term of `a`.
    pub(crate) fn compose(&self, a: &[f64], series: &[f64]) -> Vec<f64> {
        let mut h = a.to_vec();
        h[0] = 0.0;
        let top = series.len().min(self.order + 1);
        let mut out = vec![0.0; self.len()];
        if top == 0 {
            return out;
        }
        out[0] = series[top - 1];
        for n in (0..top - 1).rev() {
            out = self.mul(&out, &h);
            out[0] += series[n];
        }
        out
    }

    pub(crate) fn recip(&self, a: &[f64]) -> Vec<f64> {
        let a0 = a[0];
        let inv = 1.0 / a0;
        let mut series = Vec::with_capacity(self.order + 1);
        let mut term = inv;
        for _ in 0..=self.order {
            series.push(term);
            term *= -inv;
        }
        self.compose(a, &series)
    }

    pub(crate) fn exp(&self, a: &[f64]) -> Vec<f64> {
        let e = a[0].exp();
        let series: Vec<f64> = (0..=self.order).map(|n| e / factorial(n)).collect();
        self.compose(a, &series)
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn layout_counts() {
        assert_eq!(JetSpace::get(2, 3).len(), 10);
        assert_eq!(JetSpace::get(1, 4).len(), 5);
        assert_eq!(JetSpace::get(3, 0).len(), 1);
        assert_eq!(JetSpace::get(0, 3).len(), 1);
    }

    #[test]
    fn exp_of_linear_matches_closed_form() {
        // exp(2 + 3x) at order 4: derivatives 3^n e^2
        let s = JetSpace::get(1, 4);
        let mut a = vec![0.0; s.len()];
        a[0] = 2.0;
        a[s.linear(0)] = 3.0;
        let e = s.exp(&a);
        for n in 0..=4 {
            let i = s.index_of(&[n]).unwrap();
            assert_relative_eq!(e[i] * s.factorial(i), 3f64.powi(n as i32) * 2f64.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn recip_times_value_is_one() {
        let s = JetSpace::get(2, 3);
        let mut a = vec![0.0; s.len()];
        a[0] = 1.5;
        a[s.linear(0)] = 0.2;
        a[s.linear(1)] = -0.7;
        a[s.index_of(&[1, 1]).unwrap()] = 0.3;
        let r = s.recip(&a);
        let p = s.mul(&a, &r);
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-14);
        for c in &p[1..] {
            assert!(c.abs() < 1e-14);
        }
    }
}
