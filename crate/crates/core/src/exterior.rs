//! Exterior algebra on flat coordinate spaces.
//!
//! k-vectors and k-forms are stored densely over the C(m, k) strictly
//! increasing index tuples ("blades"), in lexicographic order. The pairing
//! convention is `dx_I(e_J) = δ_IJ`, so `dx1∧dx2` evaluates to 1 on `e1∧e2`.
//!
//! Metrics are diagonal ([`BlockMetric`]); every metric used by the
//! laboratory is diagonal in the coordinate frame, including the conformally
//! rescaled block metrics.

use std::collections::HashMap;
use std::fmt;
use std::marker::PhantomData;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Default singular-value threshold for [`intersection_dimension`].
pub const INTERSECTION_TOL: f64 = 1e-8;

/// Relative threshold below which a Gram–Schmidt residual counts as dependent.
const RANK_TOL: f64 = 1e-12;

/// Lexicographically ordered k-subsets of `0..m`.
#[derive(Debug)]
pub struct Basis {
    dim: usize,
    degree: usize,
    blades: Vec<Vec<usize>>,
}

impl Basis {
    /// Shared basis for `(dim, degree)`; built once per process.
    pub fn get(dim: usize, degree: usize) -> Arc<Basis> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("basis cache poisoned");
        guard
            .entry((dim, degree))
            .or_insert_with(|| Arc::new(Basis::build(dim, degree)))
            .clone()
    }

    fn build(dim: usize, degree: usize) -> Basis {
        let mut blades = Vec::new();
        if degree <= dim {
            let mut current: Vec<usize> = (0..degree).collect();
            loop {
                blades.push(current.clone());
                // advance to the next combination in lexicographic order
                let mut i = degree;
                loop {
                    if i == 0 {
                        return Basis { dim, degree, blades };
                    }
                    i -= 1;
                    if current[i] < dim - degree + i {
                        current[i] += 1;
                        for l in i + 1..degree {
                            current[l] = current[l - 1] + 1;
                        }
                        break;
                    }
                }
            }
        }
        Basis { dim, degree, blades }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.blades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blades.is_empty()
    }

    pub fn blade(&self, i: usize) -> &[usize] {
        &self.blades[i]
    }

    pub fn blades(&self) -> impl Iterator<Item = &[usize]> {
        self.blades.iter().map(|b| b.as_slice())
    }

    /// Position of a strictly increasing tuple.
    pub fn rank(&self, blade: &[usize]) -> Option<usize> {
        self.blades
            .binary_search_by(|b| b.as_slice().cmp(blade))
            .ok()
    }
}

/// Sorts `indices` in place and returns the permutation sign, or 0 when an
/// index repeats.
pub fn sort_with_sign(indices: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 1..indices.len() {
        let mut l = i;
        while l > 0 && indices[l - 1] > indices[l] {
            indices.swap(l - 1, l);
            sign = -sign;
            l -= 1;
        }
    }
    if indices.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

/// Marker for contravariant tensors (k-vectors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vector;
/// Marker for covariant tensors (k-forms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Covector;

/// An alternating tensor of fixed degree on an m-dimensional coordinate space.
pub struct Alternating<V> {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
    _kind: PhantomData<V>,
}

/// A k-vector.
pub type Multivector = Alternating<Vector>;
/// A k-form.
pub type Form = Alternating<Covector>;

impl<V> Clone for Alternating<V> {
    fn clone(&self) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.clone(),
            _kind: PhantomData,
        }
    }
}

impl<V> PartialEq for Alternating<V> {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.degree() == other.degree() && self.coeffs == other.coeffs
    }
}

impl<V> fmt::Debug for Alternating<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_map();
        for (blade, c) in self.terms() {
            if c != 0.0 {
                list.entry(&blade, &c);
            }
        }
        list.finish()
    }
}

impl<V> Alternating<V> {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        let basis = Basis::get(dim, degree);
        let coeffs = vec![0.0; basis.len()];
        Self {
            basis,
            coeffs,
            _kind: PhantomData,
        }
    }

    /// Builds from coefficients listed in [`Basis`] order.
    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = Basis::get(dim, degree);
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            basis,
            coeffs,
            _kind: PhantomData,
        })
    }

    /// `e_{i1} ∧ ... ∧ e_{ik}` (or `dx_{i1} ∧ ...`), indices in any order.
    pub fn basis_blade(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut t = Self::zeros(dim, indices.len());
        t.add_term(indices, 1.0)?;
        Ok(t)
    }

    /// A degree-1 tensor from its components.
    pub fn from_components(components: &[f64]) -> Self {
        Self::from_coeffs(components.len(), 1, components.to_vec()).expect("degree-1 layout")
    }

    /// Adds `value` times the blade on `indices` (any order; sign applied).
    pub fn add_term(&mut self, indices: &[usize], value: f64) -> Result<()> {
        if indices.len() != self.degree() {
            return Err(Error::DegreeMismatch {
                expected: self.degree(),
                found: indices.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.dim()) {
            return Err(invalid(format!("index {bad} outside ambient dimension {}", self.dim())));
        }
        let mut sorted = indices.to_vec();
        let sign = sort_with_sign(&mut sorted);
        if sign != 0 {
            let r = self.basis.rank(&sorted).expect("sorted blade is in basis");
            self.coeffs[r] += sign as f64 * value;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of the blade on `indices` (any order; sign applied).
    pub fn coeff(&self, indices: &[usize]) -> f64 {
        let mut sorted = indices.to_vec();
        let sign = sort_with_sign(&mut sorted);
        if sign == 0 || sorted.len() != self.degree() {
            return 0.0;
        }
        self.basis
            .rank(&sorted)
            .map_or(0.0, |r| sign as f64 * self.coeffs[r])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.basis.blades().zip(self.coeffs.iter().copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            _kind: PhantomData,
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if self.degree() != other.degree() {
            return Err(Error::DegreeMismatch {
                expected: self.degree(),
                found: other.degree(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            basis: self.basis.clone(),
            coeffs,
            _kind: PhantomData,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// Exterior product.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let degree = self.degree() + other.degree();
        if degree > self.dim() {
            return Err(invalid(format!(
                "wedge degree {degree} exceeds ambient dimension {}",
                self.dim()
            )));
        }
        let mut out = Self::zeros(self.dim(), degree);
        let mut merged = Vec::with_capacity(degree);
        let mask = |blade: &[usize]| blade.iter().fold(0u128, |m, &i| m | 1 << i);
        // (output rank, split key, term); a fixed summation order makes a∧b
        // and ±b∧a agree bit for bit
        let mut terms = Vec::new();
        for (a, &ca) in self.basis.blades().zip(&self.coeffs) {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in other.basis.blades().zip(&other.coeffs) {
                if cb == 0.0 {
                    continue;
                }
                if let Some(sign) = merge_sign(a, b, &mut merged) {
                    let r = out.basis.rank(&merged).expect("merged blade is sorted");
                    terms.push((r, mask(a).min(mask(b)), sign * (ca * cb)));
                }
            }
        }
        // complementary splits share a key; their magnitudes break the tie
        terms.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.abs().total_cmp(&y.2.abs())));
        for (r, _, v) in terms {
            out.coeffs[r] += v;
        }
        Ok(out)
    }

    /// Places this tensor into a larger coordinate space, shifting every
    /// index by `offset`.
    pub fn embed(&self, offset: usize, dim: usize) -> Result<Self> {
        if offset + self.dim() > dim {
            return Err(invalid(format!(
                "cannot embed dimension {} at offset {offset} into {dim}",
                self.dim()
            )));
        }
        let mut out = Self::zeros(dim, self.degree());
        let mut shifted = vec![0; self.degree()];
        for (blade, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            for (s, &i) in shifted.iter_mut().zip(blade) {
                *s = i + offset;
            }
            let r = out.basis.rank(&shifted).expect("shift preserves order");
            out.coeffs[r] = c;
        }
        Ok(out)
    }
}

/// Merges two sorted blades into `out`; returns the sign of the shuffle or
/// `None` if they share an index.
fn merge_sign(a: &[usize], b: &[usize], out: &mut Vec<usize>) -> Option<f64> {
    out.clear();
    let (mut i, mut j) = (0, 0);
    let mut inversions = 0usize;
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            return None;
        }
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            // b[j] jumps over the remaining elements of a
            inversions += a.len() - i;
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some(if inversions.is_multiple_of(2) { 1.0 } else { -1.0 })
}

impl Multivector {
    /// `v_1 ∧ ... ∧ v_k` for raw component vectors.
    pub fn wedge_vectors(dim: usize, vectors: &[Vec<f64>]) -> Result<Multivector> {
        let mut acc = Multivector::from_coeffs(dim, 0, vec![1.0])?;
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            acc = acc.wedge(&Multivector::from_components(v))?;
        }
        Ok(acc)
    }

    /// Norm induced by the metric on k-vectors.
    pub fn norm(&self, g: &BlockMetric) -> f64 {
        self.norm_sq(g).sqrt()
    }

    pub fn norm_sq(&self, g: &BlockMetric) -> f64 {
        self.terms()
            .map(|(blade, c)| c * c * blade.iter().map(|&i| g.weights[i]).product::<f64>())
            .sum()
    }
}

impl Form {
    /// Dual norm on k-forms.
    pub fn norm(&self, g: &BlockMetric) -> f64 {
        self.terms()
            .map(|(blade, c)| c * c / blade.iter().map(|&i| g.weights[i]).product::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Coefficients in the g-orthonormal coframe `sqrt(w_i) dx_i`.
    pub fn orthonormal_coeffs(&self, g: &BlockMetric) -> Vec<f64> {
        self.terms()
            .map(|(blade, c)| c / blade.iter().map(|&i| g.weights[i].sqrt()).product::<f64>())
            .collect()
    }

    /// The 1-form `v ↦ φ(η ∧ v)` for a basis (k-1)-blade `η`.
    pub fn contract_blade(&self, eta: &[usize]) -> Form {
        let mut out = Form::zeros(self.dim(), 1);
        let mut buf = Vec::with_capacity(eta.len() + 1);
        for r in 0..self.dim() {
            buf.clear();
            buf.extend_from_slice(eta);
            buf.push(r);
            out.coeffs[r] = self.coeff(&buf);
        }
        out
    }

    /// Largest coefficient of `(ι_η φ) ∧ φ` over basis (k-1)-blades `η`;
    /// zero exactly when the form is decomposable.
    pub fn plucker_residual(&self) -> f64 {
        let k = self.degree();
        if k <= 1 || k + 1 > self.dim() {
            return 0.0;
        }
        let lower = Basis::get(self.dim(), k - 1);
        lower
            .blades()
            .map(|eta| {
                self.contract_blade(eta)
                    .wedge(self)
                    .map(|w| w.max_abs())
                    .unwrap_or(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Pairing `φ(ξ)`.
pub fn evaluate(form: &Form, xi: &Multivector) -> Result<f64> {
    if form.dim() != xi.dim() {
        return Err(Error::DimensionMismatch {
            expected: form.dim(),
            found: xi.dim(),
        });
    }
    if form.degree() != xi.degree() {
        return Err(Error::DegreeMismatch {
            expected: form.degree(),
            found: xi.degree(),
        });
    }
    Ok(form.coeffs.iter().zip(&xi.coeffs).map(|(a, b)| a * b).sum())
}

/// Musical isomorphism: the form `⟨v, ·⟩_g` extended to k-vectors.
pub fn dual_form(v: &Multivector, g: &BlockMetric) -> Result<Form> {
    g.check_dim(v.dim())?;
    let coeffs = v
        .terms()
        .map(|(blade, c)| c * blade.iter().map(|&i| g.weights[i]).product::<f64>())
        .collect();
    Form::from_coeffs(v.dim(), v.degree(), coeffs)
}

/// Diagonal metric `Σ w_i dx_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMetric {
    weights: Vec<f64>,
}

impl BlockMetric {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(invalid(format!("metric weight {i} must be positive, got {w}")));
        }
        Ok(Self { weights })
    }

    pub fn flat(dim: usize) -> Self {
        Self {
            weights: vec![1.0; dim],
        }
    }

    /// Multiplies the weights of a contiguous block by `lambda^(2/k)`, the
    /// conformal factor under which k-form comass on that block scales by
    /// `1/lambda`.
    pub fn with_conformal_block(mut self, block: Range<usize>, lambda: f64, k: usize) -> Result<Self> {
        if block.end > self.weights.len() || block.is_empty() {
            return Err(invalid(format!("bad conformal block {block:?}")));
        }
        if !(lambda > 0.0) || k == 0 {
            return Err(invalid("conformal factor needs lambda > 0 and k >= 1"));
        }
        let factor = lambda.powf(2.0 / k as f64);
        for w in &mut self.weights[block] {
            *w *= factor;
        }
        Ok(self)
    }

    /// The same metric multiplied by a constant.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * lambda).collect())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).sqrt()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }
}

/// An ordered list of vectors spanning an oriented plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        Ok(Self { dim, vectors })
    }

    /// Frame of coordinate axes `e_i` for the listed indices.
    pub fn axes(dim: usize, indices: &[usize]) -> Result<Self> {
        let vectors = indices
            .iter()
            .map(|&i| {
                if i >= dim {
                    return Err(invalid(format!("axis {i} outside dimension {dim}")));
                }
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Modified Gram–Schmidt under `g`, applied twice. Orientation is kept.
    pub fn orthonormalize(&self, g: &BlockMetric) -> Result<Frame> {
        g.check_dim(self.dim)?;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.vectors.len());
        for (index, v) in self.vectors.iter().enumerate() {
            let scale = g.norm(v);
            let mut u = v.clone();
            for _ in 0..2 {
                for q in &out {
                    let c = g.inner(q, &u);
                    for (ui, qi) in u.iter_mut().zip(q) {
                        *ui -= c * qi;
                    }
                }
            }
            let n = g.norm(&u);
            if !(n > RANK_TOL * scale) || scale == 0.0 {
                return Err(Error::DegenerateFrame { index });
            }
            u.iter_mut().for_each(|x| *x /= n);
            out.push(u);
        }
        Ok(Frame {
            dim: self.dim,
            vectors: out,
        })
    }
}

/// Unit simple k-vector of the oriented plane spanned by `frame`, measured in `g`.
pub fn simple_from_frame(frame: &Frame, g: &BlockMetric) -> Result<Multivector> {
    let on = frame.orthonormalize(g)?;
    Multivector::wedge_vectors(frame.dim, &on.vectors)
}

/// Dimension of `span(a) ∩ span(b)`, read off the singular values of the
/// concatenated orthonormal bases.
pub fn intersection_dimension(a: &Frame, b: &Frame, tol: f64) -> Result<usize> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    let flat = BlockMetric::flat(a.dim);
    let qa = a.orthonormalize(&flat)?;
    let qb = b.orthonormalize(&flat)?;
    let cols: Vec<&Vec<f64>> = qa.vectors.iter().chain(&qb.vectors).collect();
    if cols.is_empty() {
        return Ok(0);
    }
    let m = DMatrix::from_fn(a.dim, cols.len(), |r, c| cols[c][r]);
    let rank = m
        .singular_values()
        .iter()
        .filter(|&&s| s > tol)
        .count();
    Ok(cols.len() - rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(dim: usize, i: usize) -> Multivector {
        Multivector::basis_blade(dim, &[i]).unwrap()
    }

    #[test]
    fn basis_is_lexicographic() {
        let b = Basis::get(4, 2);
        let blades: Vec<_> = b.blades().map(|s| s.to_vec()).collect();
        assert_eq!(
            blades,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(b.rank(&[1, 3]), Some(4));
        assert_eq!(Basis::get(3, 0).len(), 1);
        assert_eq!(Basis::get(3, 4).len(), 0);
    }

    #[test]
    fn wedge_coordinate_examples() {
        let e12 = e(3, 0).wedge(&e(3, 1)).unwrap();
        let dx12 = Form::basis_blade(3, &[0, 1]).unwrap();
        assert_eq!(evaluate(&dx12, &e12).unwrap(), 1.0);

        assert!(e(3, 0).wedge(&e(3, 0)).unwrap().is_zero());

        let lhs = e(3, 0).add(&e(3, 1)).unwrap().wedge(&e(3, 1)).unwrap();
        assert_eq!(lhs, e12);
    }

    #[test]
    fn wedge_rejects_mismatch() {
        assert!(matches!(
            e(3, 0).wedge(&e(4, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
        let top = Multivector::basis_blade(2, &[0, 1]).unwrap();
        assert!(top.wedge(&e(2, 0)).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let dx12 = Form::basis_blade(3, &[0, 1]).unwrap();
        let e13 = Multivector::basis_blade(3, &[0, 2]).unwrap();
        assert_eq!(evaluate(&dx12, &e13).unwrap(), 0.0);
        let e1 = e(3, 0);
        assert!(matches!(
            evaluate(&dx12, &e1),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn add_term_applies_permutation_sign() {
        let mut f = Form::zeros(4, 3);
        f.add_term(&[2, 0, 1], 1.0).unwrap();
        // (2,0,1) is an even permutation of (0,1,2)
        assert_eq!(f.coeff(&[0, 1, 2]), 1.0);
        f.add_term(&[1, 0, 3], 2.0).unwrap();
        assert_eq!(f.coeff(&[0, 1, 3]), -2.0);
        f.add_term(&[1, 1, 3], 5.0).unwrap();
        assert_eq!(f.coeff(&[1, 1, 3]), 0.0);
    }

    #[test]
    fn simple_from_frame_examples() {
        let flat = BlockMetric::flat(3);
        let e12 = Multivector::basis_blade(3, &[0, 1]).unwrap();
        let f = Frame::axes(3, &[0, 1]).unwrap();
        assert_eq!(simple_from_frame(&f, &flat).unwrap(), e12);

        let f2 = Frame::new(3, vec![vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let xi = simple_from_frame(&f2, &flat).unwrap();
        assert_abs_diff_eq!(xi.coeff(&[0, 1]), 1.0, epsilon = 1e-15);

        // Gram-determinant oracle: (e1∧e2)/sqrt(det G) with G = diag(4, 1).
        let g = BlockMetric::new(vec![4.0, 1.0, 1.0]).unwrap();
        let xi = simple_from_frame(&f, &g).unwrap();
        let gram_det: f64 = 4.0 * 1.0;
        assert_abs_diff_eq!(xi.coeff(&[0, 1]), 1.0 / gram_det.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(xi.norm(&g), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_frame_is_rejected() {
        let f = Frame::new(3, vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]]).unwrap();
        assert_eq!(
            simple_from_frame(&f, &BlockMetric::flat(3)),
            Err(Error::DegenerateFrame { index: 1 })
        );
    }

    #[test]
    fn dual_form_examples() {
        let flat = BlockMetric::flat(3);
        let e12 = Multivector::basis_blade(3, &[0, 1]).unwrap();
        assert_eq!(
            dual_form(&e12, &flat).unwrap(),
            Form::basis_blade(3, &[0, 1]).unwrap()
        );
        let g = BlockMetric::new(vec![7.0, 1.0, 1.0]).unwrap();
        let d = dual_form(&e(3, 0), &g).unwrap();
        assert_eq!(d.coeff(&[0]), 7.0);
    }

    #[test]
    fn metric_rejects_nonpositive_weights() {
        assert!(BlockMetric::new(vec![1.0, 0.0]).is_err());
        assert!(BlockMetric::new(vec![1.0, -2.0]).is_err());
        assert!(BlockMetric::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn conformal_block_scales_weights() {
        let g = BlockMetric::flat(4)
            .with_conformal_block(2..4, 4.0, 2)
            .unwrap();
        assert_eq!(g.weights(), &[1.0, 1.0, 4.0, 4.0]);
        // a 2-form living on the block has its norm divided by lambda
        let f = Form::basis_blade(4, &[2, 3]).unwrap();
        assert_abs_diff_eq!(f.norm(&g), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn intersection_dimension_examples() {
        let a = Frame::axes(6, &[0, 1]).unwrap();
        let b = Frame::axes(6, &[2, 3]).unwrap();
        assert_eq!(intersection_dimension(&a, &b, INTERSECTION_TOL).unwrap(), 0);
        let a = Frame::axes(6, &[0, 1, 4]).unwrap();
        let b = Frame::axes(6, &[2, 3, 4]).unwrap();
        assert_eq!(intersection_dimension(&a, &b, INTERSECTION_TOL).unwrap(), 1);
        // same plane, different basis
        let c = Frame::new(6, vec![
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let d = Frame::axes(6, &[0, 1]).unwrap();
        assert_eq!(intersection_dimension(&c, &d, INTERSECTION_TOL).unwrap(), 2);
    }

    #[test]
    fn plucker_residual_detects_simplicity() {
        let simple = Form::basis_blade(4, &[0, 1]).unwrap();
        assert_eq!(simple.plucker_residual(), 0.0);
        let sympl = simple.add(&Form::basis_blade(4, &[2, 3]).unwrap()).unwrap();
        assert!(sympl.plucker_residual() > 0.5);
    }

    #[test]
    fn embed_shifts_indices() {
        let f = Form::basis_blade(2, &[0, 1]).unwrap();
        let g = f.embed(3, 6).unwrap();
        assert_eq!(g.coeff(&[3, 4]), 1.0);
        assert!(f.embed(5, 6).is_err());
    }
}
