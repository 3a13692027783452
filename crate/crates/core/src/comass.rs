//! Comass of differential forms.
//!
//! Exact values are available for simple forms (the comass equals the dual
//! norm). For everything else [`comass_optimize`] maximizes `φ(ξ)` over unit
//! simple k-vectors by projected gradient ascent on orthonormal k-frames, with
//! random multi-start; its result is always a lower bound for the true comass.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::exterior::{
    dual_form, evaluate, simple_from_frame, sort_with_sign, Basis, BlockMetric, Form, Frame,
};

/// Iteration cap for a single ascent.
pub const MAX_ITERATIONS: usize = 2000;

/// Default number of random restarts for forms of degree `k`.
pub fn default_restarts(k: usize) -> usize {
    if k <= 3 {
        64
    } else {
        256
    }
}

/// How the simplicity of a form is established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Simplicity {
    /// The caller built the form as a multiple of a dual plane.
    Constructed,
    /// Check the Plücker relations numerically.
    Verify,
}

const PLUCKER_TOL: f64 = 1e-8;

/// Comass of a simple form, i.e. its dual norm under `g`.
pub fn comass_simple_form(form: &Form, g: &BlockMetric, simplicity: Simplicity) -> Result<f64> {
    if form.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: form.dim(),
        });
    }
    if simplicity == Simplicity::Verify {
        let scale = form.max_abs();
        if scale > 0.0 {
            let residual = form.scaled(1.0 / scale).plucker_residual();
            if residual > PLUCKER_TOL {
                return Err(Error::NotSimple { residual });
            }
        }
    }
    Ok(form.norm(g))
}

/// `lambda^(-k/2)`: the factor by which k-form comass changes when the
/// metric is multiplied by `lambda`.
pub fn conformal_comass_factor(k: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("conformal factor must be positive, got {lambda}")));
    }
    Ok(lambda.powf(-(k as f64) / 2.0))
}

/// Parameters of `λ dx_1∧…∧dx_c∧α* + μ dy_1∧…∧dy_c∧β*` on `R^{2c} × R^m`.
#[derive(Debug, Clone)]
pub struct TorusFormSpec {
    n_minus_j: usize,
    alpha: Frame,
    beta: Frame,
    lambda: f64,
    mu: f64,
}

impl TorusFormSpec {
    pub fn new(n_minus_j: usize, alpha: Frame, beta: Frame, lambda: f64, mu: f64) -> Result<Self> {
        if n_minus_j == 0 {
            return Err(invalid("n - j must be at least 1"));
        }
        if !(lambda.abs() <= 1.0) || !(mu.abs() <= 1.0) {
            return Err(invalid(format!(
                "lambda and mu must lie in [-1, 1], got {lambda}, {mu}"
            )));
        }
        if alpha.dim() != beta.dim() {
            return Err(Error::DimensionMismatch {
                expected: alpha.dim(),
                found: beta.dim(),
            });
        }
        if alpha.len() != beta.len() || alpha.is_empty() || alpha.len() > alpha.dim() {
            return Err(invalid("alpha and beta must be planes of equal dimension 1 <= l <= m"));
        }
        Ok(Self {
            n_minus_j,
            alpha,
            beta,
            lambda,
            mu,
        })
    }

    pub fn n_minus_j(&self) -> usize {
        self.n_minus_j
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Dimension `2(n-j) + m` of the ambient space.
    pub fn ambient_dim(&self) -> usize {
        2 * self.n_minus_j + self.alpha.dim()
    }

    pub fn degree(&self) -> usize {
        self.n_minus_j + self.alpha.len()
    }

    fn lift(&self, frame: &Frame) -> Vec<Vec<f64>> {
        let offset = 2 * self.n_minus_j;
        frame
            .vectors()
            .iter()
            .map(|v| {
                let mut w = vec![0.0; self.ambient_dim()];
                w[offset..].copy_from_slice(v);
                w
            })
            .collect()
    }

    fn plane(&self, first_axis: usize, frame: &Frame) -> Result<Frame> {
        let dim = self.ambient_dim();
        let mut vectors = Frame::axes(dim, &(first_axis..first_axis + self.n_minus_j).collect::<Vec<_>>())?
            .vectors()
            .to_vec();
        vectors.extend(self.lift(frame));
        Frame::new(dim, vectors)
    }

    /// The plane `∂x_1 ∧ … ∧ ∂x_{n-j} ∧ α`.
    pub fn x_plane(&self) -> Result<Frame> {
        self.plane(0, &self.alpha)
    }

    /// The plane `∂y_1 ∧ … ∧ ∂y_{n-j} ∧ β`.
    pub fn y_plane(&self) -> Result<Frame> {
        self.plane(self.n_minus_j, &self.beta)
    }
}

/// Builds the torus form described by `spec` (flat metric duals).
pub fn build_torus_form(spec: &TorusFormSpec) -> Result<Form> {
    let dim = spec.ambient_dim();
    let flat = BlockMetric::flat(dim);
    let c = spec.n_minus_j;
    let part = |first: usize, frame: &Frame| -> Result<Form> {
        let lifted = Frame::new(dim, spec.lift(frame))?;
        let star = dual_form(&simple_from_frame(&lifted, &flat)?, &flat)?;
        let axes: Vec<usize> = (first..first + c).collect();
        Form::basis_blade(dim, &axes)?.wedge(&star)
    };
    let x = part(0, &spec.alpha)?.scaled(spec.lambda);
    let y = part(c, &spec.beta)?.scaled(spec.mu);
    x.add(&y)
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ComassOptions {
    pub restarts: usize,
    /// Stop when the Frobenius norm of the projected gradient drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Initial step of each iteration, halved until the value improves.
    pub step: f64,
}

impl ComassOptions {
    pub fn for_degree(k: usize) -> Self {
        Self {
            restarts: default_restarts(k),
            tol: 1e-10,
            max_iterations: MAX_ITERATIONS,
            seed: 0,
            step: 0.5,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Best value found by [`comass_optimize`] together with its witness.
#[derive(Debug, Clone)]
pub struct ComassEstimate {
    pub lower_bound: f64,
    /// g-orthonormal frame attaining `lower_bound`.
    pub maximizer: Frame,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Maximizes `φ(ξ)` over g-unit simple k-vectors with `options.restarts`
/// random starts.
pub fn comass_optimize(form: &Form, g: &BlockMetric, options: &ComassOptions) -> Result<ComassEstimate> {
    comass_optimize_seeded(form, g, options, &[])
}

/// As [`comass_optimize`], additionally ascending from each seed frame.
pub fn comass_optimize_seeded(
    form: &Form,
    g: &BlockMetric,
    options: &ComassOptions,
    seeds: &[Frame],
) -> Result<ComassEstimate> {
    if form.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: form.dim(),
        });
    }
    if options.restarts == 0 && seeds.is_empty() {
        return Err(invalid("comass optimization needs at least one restart"));
    }
    let (m, k) = (form.dim(), form.degree());
    let sqrt_w: Vec<f64> = g.weights().iter().map(|w| w.sqrt()).collect();
    let to_original = |frame: &[Vec<f64>]| -> Result<Frame> {
        Frame::new(
            m,
            frame
                .iter()
                .map(|v| v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect())
                .collect(),
        )
    };

    if k == 0 {
        let value = form.coeffs()[0];
        return Ok(ComassEstimate {
            lower_bound: value.abs(),
            maximizer: Frame::new(m, vec![])?,
            restarts_used: 0,
            converged: true,
        });
    }

    let coeffs = form.orthonormal_coeffs(g);
    let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    if scale == 0.0 {
        let axes = Frame::axes(m, &(0..k).collect::<Vec<_>>())?;
        return Ok(ComassEstimate {
            lower_bound: 0.0,
            maximizer: to_original(axes.vectors())?,
            restarts_used: options.restarts,
            converged: true,
        });
    }
    let objective = Objective::new(m, k, coeffs.iter().map(|c| c / scale).collect());

    let mut starts: Vec<Vec<Vec<f64>>> = Vec::new();
    let flat = BlockMetric::flat(m);
    for seed in seeds {
        if seed.dim() != m || seed.len() != k {
            return Err(invalid("seed frame has the wrong shape"));
        }
        let lifted = Frame::new(
            m,
            seed.vectors()
                .iter()
                .map(|v| v.iter().zip(&sqrt_w).map(|(x, s)| x * s).collect())
                .collect(),
        )?;
        starts.push(lifted.orthonormalize(&flat)?.vectors().to_vec());
    }
    for r in 0..options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(r as u64);
        starts.push(random_orthonormal_frame(m, k, &mut rng));
    }

    let runs: Vec<Ascent> = starts
        .into_par_iter()
        .map(|start| objective.ascend(start, options))
        .collect();
    // ties resolve to the earliest start, independent of scheduling
    let best = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, run)| match acc {
            Some((_, v)) if v >= run.value => acc,
            _ => Some((i, run.value)),
        })
        .map(|(i, _)| i)
        .expect("at least one start");
    let run = &runs[best];
    Ok(ComassEstimate {
        lower_bound: run.value * scale,
        maximizer: to_original(&run.frame)?,
        restarts_used: options.restarts,
        converged: run.converged,
    })
}

/// Gaussian matrix, orthonormalized.
pub(crate) fn random_orthonormal_frame(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let flat = BlockMetric::flat(m);
    loop {
        let vectors: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        if let Ok(f) = Frame::new(m, vectors).and_then(|f| f.orthonormalize(&flat)) {
            return f.vectors().to_vec();
        }
    }
}

/// Index table for `ψ(e_r ∧ e_J)` with `J` a (k-1)-blade.
struct ContractionTable {
    /// (rank of J, r, rank of sorted r∪J, sign)
    entries: Vec<(usize, usize, usize, f64)>,
    lower: Arc<Basis>,
}

impl ContractionTable {
    fn get(m: usize, k: usize) -> Arc<ContractionTable> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<ContractionTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("contraction cache poisoned");
        guard
            .entry((m, k))
            .or_insert_with(|| {
                let lower = Basis::get(m, k - 1);
                let upper = Basis::get(m, k);
                let mut entries = Vec::new();
                let mut buf = Vec::with_capacity(k);
                for (jr, blade) in lower.blades().enumerate() {
                    for r in 0..m {
                        buf.clear();
                        buf.push(r);
                        buf.extend_from_slice(blade);
                        let sign = sort_with_sign(&mut buf);
                        if sign != 0 {
                            let ir = upper.rank(&buf).expect("blade");
                            entries.push((jr, r, ir, sign as f64));
                        }
                    }
                }
                Arc::new(ContractionTable { entries, lower })
            })
            .clone()
    }
}

struct Objective {
    m: usize,
    k: usize,
    coeffs: Vec<f64>,
    table: Arc<ContractionTable>,
}

struct Ascent {
    value: f64,
    frame: Vec<Vec<f64>>,
    converged: bool,
}

impl Objective {
    fn new(m: usize, k: usize, coeffs: Vec<f64>) -> Self {
        Self {
            m,
            k,
            coeffs,
            table: ContractionTable::get(m, k),
        }
    }

    /// Value `ψ(v_1∧…∧v_k)` and its Euclidean gradient with respect to each `v_c`.
    fn value_and_gradient(&self, frame: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let (m, k) = (self.m, self.k);
        let mut grad = vec![vec![0.0; m]; k];
        let mut minor = vec![0.0; self.table.lower.len()];
        let mut cols: Vec<&[f64]> = Vec::with_capacity(k);
        for (c, gc) in grad.iter_mut().enumerate() {
            cols.clear();
            cols.extend(frame.iter().enumerate().filter(|(d, _)| *d != c).map(|(_, v)| v.as_slice()));
            for (jr, blade) in self.table.lower.blades().enumerate() {
                minor[jr] = determinant_of_rows(&cols, blade);
            }
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            for &(jr, r, ir, s) in &self.table.entries {
                gc[r] += sign * s * minor[jr] * self.coeffs[ir];
            }
        }
        let value = frame[0].iter().zip(&grad[0]).map(|(a, b)| a * b).sum();
        (value, grad)
    }

    fn ascend(&self, mut frame: Vec<Vec<f64>>, options: &ComassOptions) -> Ascent {
        let (mut value, mut grad) = self.value_and_gradient(&frame);
        if value < 0.0 {
            frame[0].iter_mut().for_each(|x| *x = -*x);
            let (v, g) = self.value_and_gradient(&frame);
            value = v;
            grad = g;
        }
        let mut converged = false;
        for _ in 0..options.max_iterations {
            let projected = project_tangent(&frame, &grad);
            let norm = projected.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            if norm < options.tol {
                converged = true;
                break;
            }
            let mut step = options.step;
            let mut improved = false;
            for _ in 0..60 {
                let trial: Vec<Vec<f64>> = frame
                    .iter()
                    .zip(&projected)
                    .map(|(v, p)| v.iter().zip(p).map(|(a, b)| a + step * b).collect())
                    .collect();
                if let Some(trial) = gram_schmidt(trial) {
                    let (v, g) = self.value_and_gradient(&trial);
                    if v > value {
                        frame = trial;
                        value = v;
                        grad = g;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                // no representable ascent direction left
                converged = norm < 1e-7;
                break;
            }
        }
        Ascent {
            value,
            frame,
            converged,
        }
    }
}

/// `G - V (Vᵀ G)` with the frame vectors as rows of `V`.
fn project_tangent(frame: &[Vec<f64>], grad: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grad.iter()
        .map(|gc| {
            let mut p = gc.clone();
            for v in frame {
                let c: f64 = v.iter().zip(gc).map(|(a, b)| a * b).sum();
                for (pi, vi) in p.iter_mut().zip(v) {
                    *pi -= c * vi;
                }
            }
            p
        })
        .collect()
}

fn gram_schmidt(mut vectors: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    for i in 0..vectors.len() {
        for _ in 0..2 {
            for l in 0..i {
                let c: f64 = vectors[l].iter().zip(&vectors[i]).map(|(a, b)| a * b).sum();
                let (head, tail) = vectors.split_at_mut(i);
                for (x, q) in tail[0].iter_mut().zip(&head[l]) {
                    *x -= c * q;
                }
            }
        }
        let n = vectors[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 1e-12) {
            return None;
        }
        vectors[i].iter_mut().for_each(|x| *x /= n);
    }
    Some(vectors)
}

/// Determinant of the square matrix `M[a][b] = cols[b][rows[a]]`.
fn determinant_of_rows(cols: &[&[f64]], rows: &[usize]) -> f64 {
    let n = rows.len();
    let at = |a: usize, b: usize| cols[b][rows[a]];
    match n {
        0 => 1.0,
        1 => at(0, 0),
        2 => at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0),
        3 => {
            at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1))
                - at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0))
                + at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0))
        }
        _ => {
            let mut a: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| at(r, c)).collect()).collect();
            let mut det = 1.0;
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                    .expect("nonempty");
                if a[pivot][col] == 0.0 {
                    return 0.0;
                }
                if pivot != col {
                    a.swap(pivot, col);
                    det = -det;
                }
                det *= a[col][col];
                for r in col + 1..n {
                    let f = a[r][col] / a[col][col];
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
            det
        }
    }
}

/// Outcome of [`is_calibrated`].
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// `φ` on the unit simple vector of the plane.
    pub plane_value: f64,
    /// Optimizer lower bound for the comass.
    pub comass_lower_bound: f64,
    pub calibrated: bool,
}

/// True when `φ` evaluates to 1 on `plane` and no plane found by the
/// optimizer exceeds 1 (both within `tol`).
pub fn is_calibrated(
    form: &Form,
    plane: &Frame,
    g: &BlockMetric,
    tol: f64,
    options: &ComassOptions,
) -> Result<CalibrationReport> {
    let xi = simple_from_frame(plane, g)?;
    let plane_value = evaluate(form, &xi)?;
    let estimate = comass_optimize_seeded(form, g, options, std::slice::from_ref(plane))?;
    Ok(CalibrationReport {
        plane_value,
        comass_lower_bound: estimate.lower_bound,
        calibrated: plane_value >= 1.0 - tol && estimate.lower_bound <= 1.0 + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{Multivector, Vector};
    use approx::assert_abs_diff_eq;

    fn opts(restarts: usize) -> ComassOptions {
        ComassOptions::for_degree(2).with_restarts(restarts).with_seed(11)
    }

    fn xy_spec(lambda: f64, mu: f64) -> TorusFormSpec {
        // n - j = 2, alpha = beta = the a1a2-plane in R^3
        let alpha = Frame::axes(3, &[0, 1]).unwrap();
        TorusFormSpec::new(2, alpha.clone(), alpha, lambda, mu).unwrap()
    }

    #[test]
    fn simple_form_comass_examples() {
        let flat = BlockMetric::flat(4);
        let dx12 = Form::basis_blade(4, &[0, 1]).unwrap();
        assert_eq!(comass_simple_form(&dx12, &flat, Simplicity::Verify).unwrap(), 1.0);
        assert_eq!(
            comass_simple_form(&dx12.scaled(3.0), &flat, Simplicity::Verify).unwrap(),
            3.0
        );
        let sympl = dx12.add(&Form::basis_blade(4, &[2, 3]).unwrap()).unwrap();
        assert!(matches!(
            comass_simple_form(&sympl, &flat, Simplicity::Verify),
            Err(Error::NotSimple { .. })
        ));
    }

    #[test]
    fn dual_of_random_simple_vector_has_unit_comass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = BlockMetric::new(vec![1.0, 2.0, 0.5, 3.0, 1.5]).unwrap();
        let frame = Frame::new(5, random_orthonormal_frame(5, 3, &mut rng)).unwrap();
        let xi = simple_from_frame(&frame, &g).unwrap();
        let form = dual_form(&xi, &g).unwrap();
        let exact = comass_simple_form(&form, &g, Simplicity::Verify).unwrap();
        assert_abs_diff_eq!(exact, 1.0, epsilon = 1e-12);
        let est = comass_optimize(&form, &g, &ComassOptions::for_degree(3).with_restarts(16)).unwrap();
        assert!((est.lower_bound - exact).abs() < 1e-6, "{}", est.lower_bound);
    }

    #[test]
    fn conformal_factor_examples() {
        assert_abs_diff_eq!(conformal_comass_factor(2, 4.0).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(conformal_comass_factor(5, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(conformal_comass_factor(1, 9.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(conformal_comass_factor(2, 0.0).is_err());
        assert!(conformal_comass_factor(2, -1.0).is_err());
    }

    #[test]
    fn torus_form_spec_validates() {
        let a = Frame::axes(3, &[0, 1]).unwrap();
        let b = Frame::axes(3, &[0]).unwrap();
        assert!(TorusFormSpec::new(2, a.clone(), a.clone(), 1.5, 0.0).is_err());
        assert!(TorusFormSpec::new(2, a.clone(), b, 1.0, 1.0).is_err());
        assert!(TorusFormSpec::new(0, a.clone(), a, 1.0, 1.0).is_err());
    }

    #[test]
    fn torus_form_examples() {
        let spec = xy_spec(1.0, 0.0);
        let psi = build_torus_form(&spec).unwrap();
        assert_eq!(psi.degree(), 4);
        assert_eq!(psi.dim(), 7);
        // dx1∧dx2∧da1∧da2 with the R^3 factor starting at index 4
        assert_eq!(psi.coeff(&[0, 1, 4, 5]), 1.0);
        let flat = BlockMetric::flat(7);
        assert_eq!(comass_simple_form(&psi, &flat, Simplicity::Verify).unwrap(), 1.0);

        assert!(build_torus_form(&xy_spec(0.0, 0.0)).unwrap().is_zero());

        let both = build_torus_form(&xy_spec(1.0, 1.0)).unwrap();
        let xi_x = simple_from_frame(&spec.x_plane().unwrap(), &flat).unwrap();
        let xi_y = simple_from_frame(&spec.y_plane().unwrap(), &flat).unwrap();
        assert_abs_diff_eq!(evaluate(&both, &xi_x).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(evaluate(&both, &xi_y).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn optimizer_on_coordinate_form() {
        let form = Form::basis_blade(4, &[0, 1]).unwrap();
        let est = comass_optimize(&form, &BlockMetric::flat(4), &opts(8)).unwrap();
        assert!((est.lower_bound - 1.0).abs() < 1e-6);
        assert!(est.converged);
        let xi = simple_from_frame(&est.maximizer, &BlockMetric::flat(4)).unwrap();
        assert_abs_diff_eq!(evaluate(&form, &xi).unwrap(), est.lower_bound, epsilon = 1e-10);
    }

    #[test]
    fn optimizer_on_symplectic_form() {
        // comass of dx1∧dx2 + dx3∧dx4 is 1 (Wirtinger)
        let form = Form::basis_blade(4, &[0, 1])
            .unwrap()
            .add(&Form::basis_blade(4, &[2, 3]).unwrap())
            .unwrap();
        let est = comass_optimize(&form, &BlockMetric::flat(4), &opts(16)).unwrap();
        assert!((est.lower_bound - 1.0).abs() < 1e-8, "{}", est.lower_bound);
    }

    #[test]
    fn optimizer_respects_metric() {
        let g = BlockMetric::new(vec![4.0, 1.0, 1.0]).unwrap();
        let form = Form::basis_blade(3, &[0, 1]).unwrap();
        let est = comass_optimize(&form, &g, &opts(8)).unwrap();
        assert_abs_diff_eq!(est.lower_bound, 0.5, epsilon = 1e-9);
        let xi = simple_from_frame(&est.maximizer, &g).unwrap();
        assert_abs_diff_eq!(xi.norm(&g), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(evaluate(&form, &xi).unwrap(), est.lower_bound, epsilon = 1e-10);
    }

    #[test]
    fn zero_form_has_zero_comass() {
        let est = comass_optimize(&Form::zeros(5, 2), &BlockMetric::flat(5), &opts(4)).unwrap();
        assert_eq!(est.lower_bound, 0.0);
    }

    #[test]
    fn zero_restarts_rejected() {
        let form = Form::basis_blade(3, &[0, 1]).unwrap();
        assert!(comass_optimize(&form, &BlockMetric::flat(3), &opts(0)).is_err());
    }

    #[test]
    fn calibration_examples() {
        let flat = BlockMetric::flat(7);
        let options = ComassOptions::for_degree(4).with_restarts(24).with_seed(3);
        let spec = xy_spec(1.0, 0.0);
        let psi = build_torus_form(&spec).unwrap();
        let report = is_calibrated(&psi, &spec.x_plane().unwrap(), &flat, 1e-6, &options).unwrap();
        assert!(report.calibrated, "{report:?}");

        // lambda = -1 calibrates the reversed plane
        let spec = xy_spec(-1.0, 0.0);
        let psi = build_torus_form(&spec).unwrap();
        let plane = spec.x_plane().unwrap();
        let mut reversed = plane.vectors().to_vec();
        reversed.swap(0, 1);
        let reversed = Frame::new(7, reversed).unwrap();
        let report = is_calibrated(&psi, &reversed, &flat, 1e-6, &options).unwrap();
        assert!(report.calibrated, "{report:?}");

        let spec = xy_spec(0.5, 0.5);
        let psi = build_torus_form(&spec).unwrap();
        for plane in [spec.x_plane().unwrap(), spec.y_plane().unwrap()] {
            let report = is_calibrated(&psi, &plane, &flat, 1e-6, &options).unwrap();
            assert!(!report.calibrated);
        }
    }

    #[test]
    fn seeded_start_is_never_lost() {
        let form = Form::basis_blade(5, &[0, 1, 2]).unwrap();
        let g = BlockMetric::flat(5);
        let seed = Frame::axes(5, &[0, 1, 2]).unwrap();
        let est = comass_optimize_seeded(&form, &g, &opts(1), &[seed]).unwrap();
        assert_abs_diff_eq!(est.lower_bound, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn determinant_fallback_matches_laplace() {
        let cols: Vec<Vec<f64>> = vec![
            vec![2.0, 1.0, 0.0, 3.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![0.0, 4.0, 1.0, 2.0],
            vec![1.0, 1.0, 1.0, 0.0],
        ];
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        // wedge of the four columns in R^4 gives the determinant
        let wedge = Multivector::wedge_vectors(4, &cols).unwrap();
        let det = determinant_of_rows(&refs, &[0, 1, 2, 3]);
        assert_abs_diff_eq!(det, wedge.coeffs()[0], epsilon = 1e-12);
        let _ = std::marker::PhantomData::<Vector>;
    }
}
