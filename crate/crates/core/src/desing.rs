//! The two-sheet model on `C^{n-j}/Z^{2(n-j)} × N_j × S^1` with its
//! calibration and rescaled metric.
//!
//! Coordinates are ordered `x_1..x_c, y_1..y_c, p_1..p_j, t` with `c = n - j`.
//! `N_j = R^j/ρZ^j` is flat and `S^1 = [-π, π]` with its endpoints identified.
//! Sheet X is `{y = 0, t = 0}`, sheet Y is `{x = 0, t = f(p)}`, and they meet
//! over the zero set of `f`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::comass::{comass_optimize_seeded, ComassOptions};
use crate::error::{invalid, Error, Result};
use crate::exterior::{
    evaluate, intersection_dimension, simple_from_frame, sort_with_sign, BlockMetric, Form, Frame,
    INTERSECTION_TOL,
};
use crate::whitney::{build_vanishing_function, wrap, DyadicCellSet, SmoothFunction};

/// Radius of the tubular neighborhood on which `π` is used.
pub const TUBE_RADIUS: f64 = 1.0;
/// Step of the central differences defining `dπ`.
pub const FD_STEP: f64 = 1e-4;
/// Step of the finite-difference exterior derivative.
pub const CLOSEDNESS_STEP: f64 = 1e-3;
/// Order of the Whitney function used by models.
pub const DEFAULT_ORDER: usize = 2;
/// Largest radius tested by the reach gate of [`build_ambient`].
pub const REACH_GATE_RADIUS: f64 = 1.25;
/// Spacing of radii in [`reach_estimate`].
pub const REACH_STEP: f64 = 0.05;

const CIRCLE: f64 = 2.0 * PI;
const NEWTON_ITERATIONS: usize = 60;

/// Which current is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `1 ≤ j ≤ n-2`, one calibration for both sheets.
    Minimizing,
    /// `j = n-1`, a separate calibration per sheet.
    StablePair,
}

/// Geometric parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub j: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub order: usize,
    pub mode: Mode,
    /// Graph points per side tested by the reach gate.
    pub reach_samples: usize,
}

impl ModelParams {
    pub fn new(n: usize, j: usize, rho: f64, epsilon: f64) -> Self {
        Self {
            n,
            j,
            rho,
            epsilon,
            order: DEFAULT_ORDER,
            mode: Mode::Minimizing,
            reach_samples: 64,
        }
    }

    pub fn stable_pair(n: usize, rho: f64, epsilon: f64) -> Self {
        Self {
            mode: Mode::StablePair,
            ..Self::new(n, n.saturating_sub(1), rho, epsilon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be at least 2, got {}", self.n)));
        }
        match self.mode {
            Mode::Minimizing if !(1..=self.n.saturating_sub(2)).contains(&self.j) => {
                return Err(invalid(format!("need 1 <= j <= n-2, got n={} j={}", self.n, self.j)))
            }
            Mode::StablePair if self.j + 1 != self.n => {
                return Err(invalid(format!("stable-pair mode needs j = n-1, got n={} j={}", self.n, self.j)))
            }
            _ => {}
        }
        if self.j > 3 {
            return Err(invalid("base dimensions above 3 are not supported"));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.order < 2 {
            return Err(invalid("the projection needs a function of order at least 2"));
        }
        if self.reach_samples == 0 {
            return Err(invalid("reach_samples must be positive"));
        }
        Ok(())
    }

    /// `c = n - j`, the complex dimension of the torus factor.
    pub fn codim(&self) -> usize {
        match self.mode {
            Mode::Minimizing => self.n - self.j,
            Mode::StablePair => 1,
        }
    }
}

/// The ambient space with its Whitney function.
#[derive(Debug, Clone)]
pub struct AmbientModel {
    params: ModelParams,
    zero_set: DyadicCellSet,
    f: SmoothFunction,
    reach: Option<f64>,
}

/// Builds the model and rejects it unless the sampled reach exceeds the tube radius.
pub fn build_ambient(params: &ModelParams, zero_set: DyadicCellSet) -> Result<AmbientModel> {
    let mut model = assemble_unchecked(params, zero_set)?;
    let reach = reach_estimate(&model, params.reach_samples, REACH_GATE_RADIUS);
    if reach <= TUBE_RADIUS {
        return Err(Error::ReachTooSmall {
            reach,
            radius: TUBE_RADIUS,
        });
    }
    model.reach = Some(reach);
    Ok(model)
}

/// Builds the model without the reach gate.
pub fn assemble_unchecked(params: &ModelParams, zero_set: DyadicCellSet) -> Result<AmbientModel> {
    params.validate()?;
    if zero_set.torus_dim() != params.j {
        return Err(Error::DimensionMismatch {
            expected: params.j,
            found: zero_set.torus_dim(),
        });
    }
    if (zero_set.side() - params.rho).abs() > 1e-12 * params.rho {
        return Err(invalid(format!(
            "zero set lives on a torus of side {}, model side is {}",
            zero_set.side(),
            params.rho
        )));
    }
    let f = build_vanishing_function(&zero_set, params.epsilon, params.order)?;
    Ok(AmbientModel {
        params: params.clone(),
        zero_set,
        f,
        reach: None,
    })
}

impl AmbientModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.codim() + self.params.j
    }

    pub fn j(&self) -> usize {
        self.params.j
    }

    pub fn codim(&self) -> usize {
        self.params.codim()
    }

    /// Total dimension `2c + j + 1`.
    pub fn dim(&self) -> usize {
        2 * self.codim() + self.params.j + 1
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    pub fn mode(&self) -> Mode {
        self.params.mode
    }

    pub fn zero_set(&self) -> &DyadicCellSet {
        &self.zero_set
    }

    pub fn function(&self) -> &SmoothFunction {
        &self.f
    }

    /// Reach verified when the model was built, if the gate ran.
    pub fn reach(&self) -> Option<f64> {
        self.reach
    }

    /// Index of `p_1`.
    pub fn base_offset(&self) -> usize {
        2 * self.codim()
    }

    /// Index of `t`.
    pub fn t_index(&self) -> usize {
        self.dim() - 1
    }

    /// The `(p, t)` part of an ambient point.
    pub fn fiber_part<'a>(&self, q: &'a [f64]) -> &'a [f64] {
        &q[self.base_offset()..]
    }

    /// Ambient point `(x, y, p, t)`.
    pub fn ambient_point(&self, x: &[f64], y: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.dim());
        q.extend_from_slice(x);
        q.extend_from_slice(y);
        q.extend_from_slice(p);
        q.push(t);
        q
    }

    /// Point of a sheet over the base point `p`, with the free coordinates zero.
    pub fn sheet_point(&self, sheet: Sheet, p: &[f64]) -> Result<Vec<f64>> {
        let zeros = vec![0.0; self.codim()];
        let t = match sheet {
            Sheet::X => 0.0,
            Sheet::Y => self.f.value(p)?,
        };
        Ok(self.ambient_point(&zeros, &zeros, p, t))
    }

    /// Oriented tangent frame of a sheet over `p`.
    pub fn sheet_frame(&self, sheet: Sheet, p: &[f64]) -> Result<Frame> {
        let m = self.dim();
        let c = self.codim();
        let b = self.base_offset();
        let mut vectors = Vec::with_capacity(self.n());
        let first = match sheet {
            Sheet::X => 0,
            Sheet::Y => c,
        };
        for a in 0..c {
            let mut v = vec![0.0; m];
            v[first + a] = 1.0;
            vectors.push(v);
        }
        let grad = match sheet {
            Sheet::X => vec![0.0; self.j()],
            Sheet::Y => self.f.derivatives(p)?.gradient(),
        };
        for (i, g) in grad.iter().enumerate() {
            let mut v = vec![0.0; m];
            v[b + i] = 1.0;
            v[self.t_index()] = *g;
            vectors.push(v);
        }
        Frame::new(m, vectors)
    }
}

/// The two smooth pieces of the current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sheet {
    X,
    Y,
}

/// Closest point of `graph(f)` to a point of `N_j × S^1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub base: Vec<f64>,
    pub height: f64,
    pub distance: f64,
    pub iterations: usize,
}

struct LocalMinimum {
    /// Displacement of the foot from the reference base point.
    v: Vec<f64>,
    distance: f64,
    iterations: usize,
}

/// Newton's method for `min ½|v-d|² + ½(f(p0+v) - t')²`.
fn newton_local(
    f: &SmoothFunction,
    p0: &[f64],
    d: &[f64],
    t_target: f64,
    start: &[f64],
) -> std::result::Result<LocalMinimum, Vec<f64>> {
    let j = p0.len();
    let point = |v: &[f64]| -> Vec<f64> { p0.iter().zip(v).map(|(a, b)| a + b).collect() };
    let objective = |v: &[f64], fv: f64| -> f64 {
        0.5 * (v.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + (fv - t_target).powi(2))
    };
    let mut v = start.to_vec();
    let mut trace = Vec::new();
    for it in 0..NEWTON_ITERATIONS {
        let der = match f.derivatives(&point(&v)) {
            Ok(der) => der,
            Err(_) => return Err(trace),
        };
        let fv = der.value();
        let grad_f = der.gradient();
        let hess_f = der.hessian();
        let r = fv - t_target;
        let g: Vec<f64> = (0..j).map(|i| v[i] - d[i] + r * grad_f[i]).collect();
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        trace.push(gnorm);
        let h = DMatrix::from_fn(j, j, |a, b| {
            (a == b) as u8 as f64 + grad_f[a] * grad_f[b] + r * hess_f[a][b]
        });
        let rhs = DVector::from_iterator(j, g.iter().map(|x| -x));
        let (step, newton): (Vec<f64>, bool) = match h.clone().cholesky() {
            Some(ch) => (ch.solve(&rhs).iter().copied().collect(), true),
            None => (rhs.iter().copied().collect(), false),
        };
        let snorm = step.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        // near the rounding floor the gradient stops shrinking
        let stalled = gnorm < 1e-13 && it > 0 && gnorm > 0.5 * trace[it - 1];
        if gnorm <= 1e-15 || snorm <= 4e-15 * scale || stalled {
            let distance = (2.0 * objective(&v, fv)).sqrt();
            return Ok(LocalMinimum {
                v,
                distance,
                iterations: it,
            });
        }
        if newton && gnorm < 1e-6 {
            // objective decreases fall below its rounding; trust the quadratic model
            v = v.iter().zip(&step).map(|(a, s)| a + s).collect();
            continue;
        }
        let current = objective(&v, fv);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            let ft = match f.value(&point(&trial)) {
                Ok(x) => x,
                Err(_) => return Err(trace),
            };
            if objective(&trial, ft) <= current {
                v = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no decrease representable: v is a minimizer to working precision
            if gnorm < 1e-12 {
                let distance = (2.0 * current).sqrt();
                return Ok(LocalMinimum {
                    v,
                    distance,
                    iterations: it,
                });
            }
            return Err(trace);
        }
    }
    Err(trace)
}

fn seed_spacing(j: usize) -> f64 {
    match j {
        1 => 0.025,
        2 => 0.1,
        _ => 0.2,
    }
}

/// All seeds of a cubic lattice inside the ball of the given radius.
fn ball_seeds(j: usize, radius: f64) -> Vec<Vec<f64>> {
    let h = seed_spacing(j);
    let n = (radius / h).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-n; j];
    loop {
        let v: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            out.push(v);
        }
        let mut a = 0;
        loop {
            if a == j {
                return out;
            }
            idx[a] += 1;
            if idx[a] <= n {
                break;
            }
            idx[a] = -n;
            a += 1;
        }
    }
}

/// Global minimization over a ball of displacements, by dense seeding
/// followed by Newton from the best seeds.
fn global_local(
    f: &SmoothFunction,
    p0: &[f64],
    d: &[f64],
    t_target: f64,
    radius: f64,
) -> Option<LocalMinimum> {
    let seeds = ball_seeds(p0.len(), radius);
    let mut scored: Vec<(f64, Vec<f64>)> = seeds
        .into_iter()
        .filter_map(|v| {
            let p: Vec<f64> = p0.iter().zip(&v).map(|(a, b)| a + b).collect();
            let fv = f.value(&p).ok()?;
            let obj = v.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + (fv - t_target).powi(2);
            Some((obj, v))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored
        .iter()
        .take(4)
        .filter_map(|(_, v)| newton_local(f, p0, d, t_target, v).ok())
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

fn unwrap_height(t: f64, reference: f64) -> f64 {
    reference + wrap(t - reference, CIRCLE)
}

/// Projection of `p0 + d` at height `t` expressed as a displacement from `p0`.
fn project_local(model: &AmbientModel, p0: &[f64], d: &[f64], t: f64) -> Result<LocalMinimum> {
    let f = &model.f;
    let start: Vec<f64> = d.to_vec();
    let q: Vec<f64> = p0.iter().zip(d).map(|(a, b)| a + b).collect();
    let t_target = unwrap_height(t, f.value(&q)?);
    let result = match newton_local(f, p0, d, t_target, &start) {
        Ok(r) => r,
        Err(trace) => match global_local(f, p0, d, t_target, TUBE_RADIUS) {
            Some(r) => r,
            None => {
                return Err(Error::ProjectionDiverged {
                    iterations: trace.len(),
                    trace,
                })
            }
        },
    };
    if result.distance >= TUBE_RADIUS {
        return Err(Error::OutsideTube {
            distance: result.distance,
            radius: TUBE_RADIUS,
        });
    }
    Ok(result)
}

/// Nearest point of `graph(f)` to `q = (p, t)`.
pub fn nearest_point_projection(model: &AmbientModel, q: &[f64]) -> Result<Projection> {
    let j = model.j();
    if q.len() != j + 1 {
        return Err(Error::DimensionMismatch {
            expected: j + 1,
            found: q.len(),
        });
    }
    let p0 = &q[..j];
    let local = project_local(model, p0, &vec![0.0; j], q[j])?;
    let base: Vec<f64> = p0
        .iter()
        .zip(&local.v)
        .map(|(a, b)| (a + b).rem_euclid(model.rho()))
        .collect();
    let height = model.f.value(&base)?;
    Ok(Projection {
        base,
        height,
        distance: local.distance,
        iterations: local.iterations,
    })
}

/// `π*ω` at a point of the tube together with its flat norm `w`.
#[derive(Debug, Clone)]
pub struct PullbackForm {
    /// j-form on `N_j × S^1`, coordinates `p_1..p_j, t`.
    pub form: Form,
    pub norm: f64,
    /// `∂u*_i/∂(p, t)_a` as rows.
    pub jacobian: Vec<Vec<f64>>,
}

fn projection_jacobian(model: &AmbientModel, q: &[f64], h: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let j = model.j();
    let p0 = &q[..j];
    let zero = vec![0.0; j];
    let center = project_local(model, p0, &zero, q[j])?;
    let mut jac = vec![vec![0.0; j + 1]; j];
    for a in 0..=j {
        let mut d_plus = zero.clone();
        let mut d_minus = zero.clone();
        let (mut t_plus, mut t_minus) = (q[j], q[j]);
        if a < j {
            d_plus[a] = h;
            d_minus[a] = -h;
        } else {
            t_plus += h;
            t_minus -= h;
        }
        let plus = project_local(model, p0, &d_plus, t_plus)?;
        let minus = project_local(model, p0, &d_minus, t_minus)?;
        for i in 0..j {
            jac[i][a] = (plus.v[i] - minus.v[i]) / (2.0 * h);
        }
    }
    let foot: Vec<f64> = p0.iter().zip(&center.v).map(|(a, b)| a + b).collect();
    Ok((jac, foot))
}

fn pullback_from_jacobian(model: &AmbientModel, jac: Vec<Vec<f64>>, foot: &[f64]) -> Result<PullbackForm> {
    let j = model.j();
    let grad = model.f.derivatives(foot)?.gradient();
    let area = (1.0 + grad.iter().map(|g| g * g).sum::<f64>()).sqrt();
    let mut form = Form::zeros(j + 1, j);
    for omit in (0..=j).rev() {
        let cols: Vec<usize> = (0..=j).filter(|&a| a != omit).collect();
        let minor = DMatrix::from_fn(j, j, |r, c| jac[r][cols[c]]).determinant();
        form.add_term(&cols, area * minor)?;
    }
    let norm = form.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(PullbackForm {
        form,
        norm,
        jacobian: jac,
    })
}

/// `π*ω_j` at `q = (p, t)` via central differences of the projection.
pub fn pullback_volume_form(model: &AmbientModel, q: &[f64]) -> Result<PullbackForm> {
    pullback_volume_form_with_step(model, q, FD_STEP)
}

pub fn pullback_volume_form_with_step(model: &AmbientModel, q: &[f64], h: f64) -> Result<PullbackForm> {
    if q.len() != model.j() + 1 {
        return Err(Error::DimensionMismatch {
            expected: model.j() + 1,
            found: q.len(),
        });
    }
    let (jac, foot) = projection_jacobian(model, q, h)?;
    pullback_from_jacobian(model, jac, &foot)
}

/// Relative gap between the step-`h` Jacobian of `π` and the Richardson
/// extrapolation from steps `h` and `h/2`.
pub fn jacobian_consistency(model: &AmbientModel, q: &[f64]) -> Result<f64> {
    let (coarse, _) = projection_jacobian(model, q, FD_STEP)?;
    let (fine, _) = projection_jacobian(model, q, FD_STEP / 2.0)?;
    let mut diff = 0.0;
    let mut scale = 0.0;
    for (rc, rf) in coarse.iter().zip(&fine) {
        for (c, f) in rc.iter().zip(rf) {
            let extrapolated = (4.0 * f - c) / 3.0;
            diff += (c - extrapolated).powi(2);
            scale += extrapolated.powi(2);
        }
    }
    Ok(diff.sqrt() / scale.sqrt().max(f64::MIN_POSITIVE))
}

/// Metric used with the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricChoice {
    #[default]
    Rescaled,
    /// The rescaled metric without the `w^{-2}` factor on `dx_1`.
    Corrupted,
}

/// Sign pattern of the two summands of `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignVariant {
    Plus,
    MinusX,
    MinusY,
}

impl SignVariant {
    pub const ALL: [SignVariant; 3] = [SignVariant::Plus, SignVariant::MinusX, SignVariant::MinusY];
}

/// `φ` and `g` at one ambient point.
#[derive(Debug, Clone)]
pub struct PointCalibration {
    /// `dx_1∧…∧dx_c∧ν_j`
    pub phi_x: Form,
    /// `dy_1∧…∧dy_c∧π*ω_j`
    pub phi_y: Form,
    pub metric: BlockMetric,
    pub w: f64,
    pub pullback: PullbackForm,
}

impl PointCalibration {
    pub fn phi(&self) -> Form {
        self.variant(SignVariant::Plus)
    }

    pub fn variant(&self, sign: SignVariant) -> Form {
        let (sx, sy) = match sign {
            SignVariant::Plus => (1.0, 1.0),
            SignVariant::MinusX => (-1.0, 1.0),
            SignVariant::MinusY => (1.0, -1.0),
        };
        self.phi_x
            .scaled(sx)
            .add(&self.phi_y.scaled(sy))
            .expect("summands share a shape")
    }
}

/// `φ = dx_1∧…∧dx_c∧ν_j + dy_1∧…∧dy_c∧π*ω_j` and
/// `g = w^{-2}dx_1² + dy_1² + Σ_{b≥2}(dx_b² + dy_b²) + w^{2/j}(h_j + dt²)` at `q`.
pub fn build_calibration_and_metric(model: &AmbientModel, q: &[f64]) -> Result<PointCalibration> {
    build_calibration_with(model, q, MetricChoice::Rescaled)
}

pub fn build_calibration_with(model: &AmbientModel, q: &[f64], metric: MetricChoice) -> Result<PointCalibration> {
    let m = model.dim();
    if q.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: q.len(),
        });
    }
    let c = model.codim();
    let j = model.j();
    let b = model.base_offset();
    let pullback = pullback_volume_form(model, model.fiber_part(q))?;
    let w = pullback.norm;
    if !(w > 1e-12) || !w.is_finite() {
        return Err(Error::SingularMetric { norm: w });
    }
    let x_axes: Vec<usize> = (0..c).chain(b..b + j).collect();
    let phi_x = Form::basis_blade(m, &x_axes)?;
    let phi_y = Form::basis_blade(m, &(c..2 * c).collect::<Vec<_>>())?.wedge(&pullback.form.embed(b, m)?)?;
    let mut weights = vec![1.0; m];
    if metric == MetricChoice::Rescaled {
        weights[0] = w.powi(-2);
    }
    let conformal = w.powf(2.0 / j as f64);
    for wt in &mut weights[b..] {
        *wt = conformal;
    }
    Ok(PointCalibration {
        phi_x,
        phi_y,
        metric: BlockMetric::new(weights)?,
        w,
        pullback,
    })
}

/// Largest radius `r` (on a grid of step [`REACH_STEP`], capped at
/// `max_radius`) such that every sampled normal segment of length `r` from
/// the graph projects back to its foot point and to nothing closer.
pub fn reach_estimate(model: &AmbientModel, samples: usize, max_radius: f64) -> f64 {
    let mut radii: Vec<f64> = (1..)
        .map(|i| i as f64 * REACH_STEP)
        .take_while(|r| *r <= max_radius + 1e-12)
        .collect();
    if radii.last().is_none_or(|r| max_radius - r > 1e-12) && max_radius > 0.0 {
        radii.push(max_radius);
    }
    let bases = base_grid(model.j(), model.rho(), samples.max(1));
    let passes = |r: f64| bases.par_iter().all(|u| round_trip(model, u, r));
    if radii.is_empty() {
        return 0.0;
    }
    if passes(radii[radii.len() - 1]) {
        return radii[radii.len() - 1];
    }
    // failure is monotone in the radius: bisect for the last passing index
    let (mut lo, mut hi) = (None::<usize>, radii.len() - 1);
    let mut left = 0usize;
    while left < hi {
        let mid = (left + hi) / 2;
        if passes(radii[mid]) {
            lo = Some(mid);
            left = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo.map_or(0.0, |i| radii[i])
}

fn round_trip(model: &AmbientModel, u: &[f64], r: f64) -> bool {
    let f = &model.f;
    let Ok(der) = f.derivatives(u) else { return false };
    let grad = der.gradient();
    let scale = (1.0 + grad.iter().map(|g| g * g).sum::<f64>()).sqrt();
    for sigma in [-1.0, 1.0] {
        // displacement of the base point and target height along the normal
        let d: Vec<f64> = grad.iter().map(|g| -sigma * r * g / scale).collect();
        let t = der.value() + sigma * r / scale;
        let t_target = unwrap_height(t, der.value());
        let Some(best) = global_local(f, u, &d, t_target, r + 0.05) else { return false };
        let moved = best.v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if moved > 1e-6 || best.distance < r * (1.0 - 1e-9) {
            return false;
        }
    }
    true
}

/// Uniform grid of at least `count` base points, truncated to `count`.
fn base_grid(j: usize, rho: f64, count: usize) -> Vec<Vec<f64>> {
    let per_axis = (count as f64).powf(1.0 / j as f64).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; j];
    'outer: while out.len() < count {
        out.push(idx.iter().map(|&i| (i as f64 + 0.5) * rho / per_axis as f64).collect());
        for a in 0..j {
            idx[a] += 1;
            if idx[a] < per_axis {
                continue 'outer;
            }
            idx[a] = 0;
        }
        break;
    }
    out
}

/// Tolerances of [`verify_calibration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub sheet: f64,
    pub comass: f64,
    pub closed: f64,
    pub jacobian: f64,
    pub graph_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sheet: 1e-6,
            comass: 1e-4,
            closed: 1e-4,
            jacobian: 1e-4,
            graph_norm: 1e-6,
        }
    }
}

/// Sample counts and seeds of a verification sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    /// Grid points per sheet.
    pub sheet: usize,
    /// Points at which the comass is maximized numerically.
    pub ambient: usize,
    /// Random (point, simple n-vector) pairs.
    pub pairs: usize,
    /// Points of the closedness check.
    pub closed: usize,
    /// Tube points of the Jacobian consistency check.
    pub projection: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Ambient samples stay within this fraction of the tube radius.
    pub tube_fraction: f64,
    pub tolerances: Tolerances,
    pub metric: MetricChoice,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            sheet: 1000,
            ambient: 100,
            pairs: 10_000,
            closed: 500,
            projection: 1000,
            restarts: 64,
            seed: 0,
            tube_fraction: 0.95,
            tolerances: Tolerances::default(),
            metric: MetricChoice::Rescaled,
        }
    }
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub point: Vec<f64>,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Plane attaining the value, for comass counterexamples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Vec<f64>>>,
    /// Set when the sample could not be evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregate of one check class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub samples: usize,
    pub max_value: f64,
    pub tolerance: f64,
    pub failures: usize,
    pub pass: bool,
}

/// Worst case and failures of every check.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub records: Vec<CheckRecord>,
    pub summaries: Vec<CheckSummary>,
}

/// Failure records kept per check beyond the worst one.
const MAX_FAILURE_RECORDS: usize = 20;

struct Sample {
    point: Vec<f64>,
    value: f64,
    witness: Option<Vec<Vec<f64>>>,
    error: Option<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summaries.iter().all(|s| s.pass)
    }

    pub fn summary(&self, check: &str) -> Option<&CheckSummary> {
        self.summaries.iter().find(|s| s.check == check)
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.records.extend(other.records);
        self.summaries.extend(other.summaries);
    }

    /// Adds `singular_set` (Hausdorff distance to the prescribed set, within
    /// one cell) and `spine_dimension` (deviation from `j`, exact) rows.
    pub fn add_singular_set(&mut self, singular: &SingularSetReport, j: usize) {
        let distance = measured(vec![], singular.hausdorff_cells);
        self.push("singular_set", 1.0, vec![distance]);
        let spines = singular
            .points
            .iter()
            .zip(&singular.spine_dimensions)
            .map(|(q, &d)| measured(q.clone(), d.abs_diff(j) as f64))
            .collect();
        self.push("spine_dimension", 0.0, spines);
    }

    fn push(&mut self, check: &str, tolerance: f64, samples: Vec<Sample>) {
        let passes = |v: f64| v <= tolerance;
        let failures = samples.iter().filter(|s| !passes(s.value)).count();
        let worst = samples
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let key = |s: &Sample| if s.value.is_nan() { f64::INFINITY } else { s.value };
                key(a.1).total_cmp(&key(b.1)).then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i);
        let max_value = samples
            .iter()
            .map(|s| s.value)
            .fold(f64::NEG_INFINITY, |a, v| if v.is_nan() { f64::INFINITY } else { a.max(v) });
        let mut keep: Vec<usize> = worst.into_iter().collect();
        keep.extend(
            samples
                .iter()
                .enumerate()
                .filter(|(i, s)| !passes(s.value) && Some(*i) != worst)
                .map(|(i, _)| i)
                .take(MAX_FAILURE_RECORDS),
        );
        for i in keep {
            let s = &samples[i];
            self.records.push(CheckRecord {
                check: check.to_string(),
                point: s.point.clone(),
                value: s.value,
                tolerance,
                pass: passes(s.value),
                witness: s.witness.clone(),
                error: s.error.clone(),
            });
        }
        self.summaries.push(CheckSummary {
            check: check.to_string(),
            samples: samples.len(),
            max_value: if samples.is_empty() { 0.0 } else { max_value },
            tolerance,
            failures,
            pass: failures == 0,
        });
    }
}

fn rng_for(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | index as u64);
    rng
}

/// Random point of the tube: `p` uniform, `t = f(p) + s` with `|s|` below
/// `fraction` of the tube radius, torus coordinates uniform.
fn tube_point(model: &AmbientModel, rng: &mut ChaCha8Rng, fraction: f64) -> Result<Vec<f64>> {
    let c = model.codim();
    let x: Vec<f64> = (0..c).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = (0..c).map(|_| rng.gen::<f64>()).collect();
    let p: Vec<f64> = (0..model.j()).map(|_| rng.gen::<f64>() * model.rho()).collect();
    let s = (2.0 * rng.gen::<f64>() - 1.0) * fraction * TUBE_RADIUS;
    let t = wrap(model.f.value(&p)? + s, CIRCLE);
    Ok(model.ambient_point(&x, &y, &p, t))
}

fn failed(point: Vec<f64>, err: &Error) -> Sample {
    Sample {
        point,
        value: f64::INFINITY,
        witness: None,
        error: Some(err.to_string()),
    }
}

fn measured(point: Vec<f64>, value: f64) -> Sample {
    Sample {
        point,
        value,
        witness: None,
        error: None,
    }
}

/// Runs every pointwise check of the calibration argument.
pub fn verify_calibration(model: &AmbientModel, plan: &SamplePlan) -> Result<VerificationReport> {
    if plan.restarts == 0 {
        return Err(invalid("restarts must be positive"));
    }
    if !(plan.tube_fraction > 0.0 && plan.tube_fraction < 1.0) {
        return Err(invalid("tube_fraction must lie in (0, 1)"));
    }
    let tol = &plan.tolerances;
    let mut report = VerificationReport::default();
    let bases = base_grid(model.j(), model.rho(), plan.sheet);

    for (name, sheet) in [("sheet_x_equality", Sheet::X), ("sheet_y_equality", Sheet::Y)] {
        let samples = bases
            .par_iter()
            .map(|p| sheet_sample(model, sheet, p, plan.metric))
            .collect();
        report.push(name, tol.sheet, samples);
    }

    let graph: Vec<Sample> = bases
        .par_iter()
        .map(|p| {
            let q = match model.f.value(p) {
                Ok(t) => [p.as_slice(), &[t]].concat(),
                Err(e) => return failed(p.clone(), &e),
            };
            let value = pullback_volume_form(model, &q).map(|pb| (pb.norm - 1.0).abs());
            evaluated(q, value)
        })
        .collect();
    report.push("graph_norm", tol.graph_norm, graph);

    let jac: Vec<Sample> = (0..plan.projection)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(plan.seed, 1, i);
            match tube_point(model, &mut rng, plan.tube_fraction) {
                Ok(q) => {
                    let value = jacobian_consistency(model, model.fiber_part(&q));
                    evaluated(q, value)
                }
                Err(e) => failed(vec![], &e),
            }
        })
        .collect();
    report.push("jacobian_consistency", tol.jacobian, jac);

    let names = form_names(model.mode());
    let pairs: Vec<Vec<Sample>> = (0..plan.pairs)
        .into_par_iter()
        .map(|i| pair_sample(model, &mut rng_for(plan.seed, 2, i), plan))
        .collect();
    for (k, samples) in transpose(pairs, names.len()).into_iter().enumerate() {
        report.push(&format!("pair_bound{}", names[k]), tol.comass, samples);
    }

    let comass: Vec<Vec<Sample>> = (0..plan.ambient)
        .into_par_iter()
        .map(|i| comass_sample(model, &mut rng_for(plan.seed, 3, i), plan, i))
        .collect();
    for (k, samples) in transpose(comass, names.len()).into_iter().enumerate() {
        report.push(&format!("comass_bound{}", names[k]), tol.comass, samples);
    }

    let closed: Vec<Sample> = (0..plan.closed)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(plan.seed, 4, i);
            // keep the difference stencil inside the tube
            match tube_point(model, &mut rng, plan.tube_fraction * 0.99) {
                Ok(q) => {
                    let value = exterior_derivative_max(model, &q, CLOSEDNESS_STEP);
                    evaluated(q, value)
                }
                Err(e) => failed(vec![], &e),
            }
        })
        .collect();
    report.push("closedness", tol.closed, closed);

    Ok(report)
}

fn evaluated(point: Vec<f64>, value: Result<f64>) -> Sample {
    match value {
        Ok(v) => measured(point, v),
        Err(e) => failed(point, &e),
    }
}

fn transpose(rows: Vec<Vec<Sample>>, width: usize) -> Vec<Vec<Sample>> {
    let mut cols: Vec<Vec<Sample>> = (0..width).map(|_| Vec::with_capacity(rows.len())).collect();
    for row in rows {
        for (col, s) in cols.iter_mut().zip(row) {
            col.push(s);
        }
    }
    cols
}

/// Check-name suffixes of the forms returned by [`forms_for`].
fn form_names(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Minimizing => &["", "_minus_x", "_minus_y"],
        Mode::StablePair => &["_x", "_y"],
    }
}

fn forms_for(model: &AmbientModel, cal: &PointCalibration) -> Vec<Form> {
    match model.mode() {
        Mode::Minimizing => SignVariant::ALL.iter().map(|&s| cal.variant(s)).collect(),
        Mode::StablePair => vec![cal.phi_x.clone(), cal.phi_y.clone()],
    }
}

fn sheet_sample(model: &AmbientModel, sheet: Sheet, p: &[f64], metric: MetricChoice) -> Sample {
    let run = || -> Result<(Vec<f64>, f64)> {
        let q = model.sheet_point(sheet, p)?;
        let cal = build_calibration_with(model, &q, metric)?;
        let form = match (model.mode(), sheet) {
            (Mode::Minimizing, _) => cal.phi(),
            (Mode::StablePair, Sheet::X) => cal.phi_x.clone(),
            (Mode::StablePair, Sheet::Y) => cal.phi_y.clone(),
        };
        let xi = simple_from_frame(&model.sheet_frame(sheet, p)?, &cal.metric)?;
        Ok((q, (evaluate(&form, &xi)? - 1.0).abs()))
    };
    match run() {
        Ok((point, value)) => measured(point, value),
        Err(e) => failed(p.to_vec(), &e),
    }
}

fn pair_sample(model: &AmbientModel, rng: &mut ChaCha8Rng, plan: &SamplePlan) -> Vec<Sample> {
    let width = form_names(model.mode()).len();
    let mut run = || -> Result<Vec<Sample>> {
        let q = tube_point(model, rng, plan.tube_fraction)?;
        let cal = build_calibration_with(model, &q, plan.metric)?;
        let m = model.dim();
        let (frame, xi) = loop {
            let vectors: Vec<Vec<f64>> = (0..model.n())
                .map(|_| (0..m).map(|_| StandardNormal.sample(rng)).collect())
                .collect();
            if let Ok(frame) = Frame::new(m, vectors) {
                if let Ok(xi) = simple_from_frame(&frame, &cal.metric) {
                    break (frame, xi);
                }
            }
        };
        forms_for(model, &cal)
            .iter()
            .map(|form| {
                Ok(Sample {
                    point: q.clone(),
                    value: evaluate(form, &xi)? - 1.0,
                    witness: Some(frame.vectors().to_vec()),
                    error: None,
                })
            })
            .collect()
    };
    run().unwrap_or_else(|e| (0..width).map(|_| failed(vec![], &e)).collect())
}

fn comass_sample(model: &AmbientModel, rng: &mut ChaCha8Rng, plan: &SamplePlan, index: usize) -> Vec<Sample> {
    let width = form_names(model.mode()).len();
    let mut run = || -> Result<Vec<Sample>> {
        let q = tube_point(model, rng, plan.tube_fraction)?;
        let cal = build_calibration_with(model, &q, plan.metric)?;
        let p = model.fiber_part(&q)[..model.j()].to_vec();
        let seeds = [model.sheet_frame(Sheet::X, &p)?, model.sheet_frame(Sheet::Y, &p)?];
        let options = ComassOptions::for_degree(model.n())
            .with_restarts(plan.restarts)
            .with_seed(plan.seed.wrapping_add(index as u64));
        forms_for(model, &cal)
            .iter()
            .map(|form| {
                let est = comass_optimize_seeded(form, &cal.metric, &options, &seeds)?;
                Ok(Sample {
                    point: q.clone(),
                    value: est.lower_bound - 1.0,
                    witness: Some(est.maximizer.vectors().to_vec()),
                    error: None,
                })
            })
            .collect()
    };
    run().unwrap_or_else(|e| (0..width).map(|_| failed(vec![], &e)).collect())
}

/// Largest coefficient of the central-difference exterior derivative of `φ`.
/// The coefficients of `φ` do not depend on `x, y`, so only `p, t` are differentiated.
pub fn exterior_derivative_max(model: &AmbientModel, q: &[f64], step: f64) -> Result<f64> {
    let m = model.dim();
    let n = model.n();
    let b = model.base_offset();
    let mut partials: Vec<(usize, Form)> = Vec::new();
    for a in b..m {
        let mut plus = q.to_vec();
        let mut minus = q.to_vec();
        plus[a] += step;
        minus[a] -= step;
        let fp = build_calibration_and_metric(model, &plus)?.phi();
        let fm = build_calibration_and_metric(model, &minus)?.phi();
        partials.push((a, fp.sub(&fm)?.scaled(0.5 / step)));
    }
    let mut d = Form::zeros(m, n + 1);
    for (a, partial) in &partials {
        for (idx, coeff) in partial.terms() {
            if coeff == 0.0 || idx.contains(a) {
                continue;
            }
            let mut full = vec![*a];
            full.extend_from_slice(idx);
            let sign = sort_with_sign(&mut full);
            d.add_term(&full, sign as f64 * coeff)?;
        }
    }
    Ok(d.max_abs())
}

/// Detected singular set against the prescribed zero set.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSetReport {
    pub detected: DyadicCellSet,
    pub expected: DyadicCellSet,
    /// Hausdorff distance in cell units (0 when cells touch).
    pub hausdorff_cells: f64,
    /// Ambient points `{0}^{2c} × p × {0}` of the detected cells.
    pub points: Vec<Vec<f64>>,
    /// Dimension of the intersection of the two sheet tangents, per detected cell.
    pub spine_dimensions: Vec<usize>,
}

impl SingularSetReport {
    pub fn spines_equal(&self, dim: usize) -> bool {
        self.spine_dimensions.iter().all(|&d| d == dim)
    }
}

/// Cells of the zero-set grid whose center satisfies `|f| ≤ tol`, with the
/// spine dimension of the two-sheet tangent cone at each.
pub fn extract_singular_set(model: &AmbientModel, tol: f64) -> Result<SingularSetReport> {
    let k = &model.zero_set;
    let j = model.j();
    let per_axis = 1u64 << k.depth();
    let total = per_axis
        .checked_pow(j as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| invalid("zero-set grid too fine to scan"))?;
    let detected_cells: Vec<Vec<u64>> = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let cell: Vec<u64> = (0..j).map(|a| (flat / per_axis.pow(a as u32)) % per_axis).collect();
            let v = model.f.value(&k.cell_center(&cell)).ok()?;
            (v.abs() <= tol).then_some(cell)
        })
        .collect();
    let detected = DyadicCellSet::new(j, k.side(), k.depth(), &detected_cells)?;
    let mut points = Vec::with_capacity(detected.len());
    let mut spine_dimensions = Vec::with_capacity(detected.len());
    for cell in detected.cells() {
        let p = k.cell_center(&cell);
        let tx = model.sheet_frame(Sheet::X, &p)?;
        let ty = model.sheet_frame(Sheet::Y, &p)?;
        spine_dimensions.push(intersection_dimension(&tx, &ty, INTERSECTION_TOL)?);
        points.push(model.sheet_point(Sheet::X, &p)?);
    }
    let hausdorff_cells = detected.hausdorff_cells(k)?;
    Ok(SingularSetReport {
        detected,
        expected: k.clone(),
        hausdorff_cells,
        points,
        spine_dimensions,
    })
}

/// Outcome of [`stable_pair_mode`].
#[derive(Debug, Clone)]
pub struct StablePairReport {
    pub verification: VerificationReport,
    pub intersection: SingularSetReport,
}

/// Builds the `j = n-1` model and checks each sheet against its own form.
pub fn stable_pair_mode(
    n: usize,
    rho: f64,
    zero_set: DyadicCellSet,
    epsilon: f64,
    plan: &SamplePlan,
    singular_tol: f64,
) -> Result<StablePairReport> {
    let params = ModelParams::stable_pair(n, rho, epsilon);
    let model = build_ambient(&params, zero_set)?;
    let verification = verify_calibration(&model, plan)?;
    let intersection = extract_singular_set(&model, singular_tol)?;
    Ok(StablePairReport {
        verification,
        intersection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comass::{build_torus_form, TorusFormSpec};
    use approx::assert_abs_diff_eq;

    fn flat_model(n: usize, j: usize) -> AmbientModel {
        let k = DyadicCellSet::full(j, 4.0, 3).unwrap();
        build_ambient(&ModelParams::new(n, j, 4.0, 1e-3), k).unwrap()
    }

    fn single_cell_model() -> AmbientModel {
        let k = DyadicCellSet::new(1, 4.0, 6, [[10u64]]).unwrap();
        build_ambient(&ModelParams::new(3, 1, 4.0, 1e-2), k).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(3, 2, 4.0, 1e-3).validate().is_err());
        assert!(ModelParams::new(3, 0, 4.0, 1e-3).validate().is_err());
        assert!(ModelParams::new(3, 1, -1.0, 1e-3).validate().is_err());
        assert!(ModelParams::new(3, 1, 4.0, 0.0).validate().is_err());
        assert!(ModelParams::stable_pair(3, 4.0, 1e-3).validate().is_ok());
        let k = DyadicCellSet::empty(2, 4.0, 3).unwrap();
        assert!(matches!(
            build_ambient(&ModelParams::new(3, 1, 4.0, 1e-3), k),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flat_projection_drops_height() {
        let model = flat_model(3, 1);
        let pr = nearest_point_projection(&model, &[1.3, 0.4]).unwrap();
        assert_eq!(pr.base, vec![1.3]);
        assert_eq!(pr.height, 0.0);
        assert_abs_diff_eq!(pr.distance, 0.4, epsilon = 1e-15);
        assert!(matches!(
            nearest_point_projection(&model, &[1.3, 1.5]),
            Err(Error::OutsideTube { .. })
        ));
    }

    #[test]
    fn projection_fixes_graph_points() {
        let model = single_cell_model();
        for p in [0.2, 0.9, 2.5, 3.7] {
            let t = model.function().value(&[p]).unwrap();
            let pr = nearest_point_projection(&model, &[p, t]).unwrap();
            assert_abs_diff_eq!(pr.base[0], p, epsilon = 1e-12);
            assert!(pr.distance < 1e-12);
        }
    }

    #[test]
    fn flat_model_reduces_to_torus_form() {
        let model = flat_model(4, 2);
        let q = model.ambient_point(&[0.1, 0.2], &[0.3, 0.4], &[1.1, 2.9], -0.6);
        let cal = build_calibration_and_metric(&model, &q).unwrap();
        assert_eq!(cal.w, 1.0);
        assert_eq!(cal.metric, BlockMetric::flat(7));
        let axes = Frame::axes(3, &[0, 1]).unwrap();
        let psi = build_torus_form(&TorusFormSpec::new(2, axes.clone(), axes, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(cal.phi(), psi);
    }

    #[test]
    fn flat_reach_is_half_circumference() {
        let model = flat_model(3, 1);
        let r = reach_estimate(&model, 8, PI - 0.01);
        assert_abs_diff_eq!(r, PI - 0.01, epsilon = 1e-12);
    }

    #[test]
    fn sheets_are_calibrated() {
        let model = single_cell_model();
        for p in [0.3, 0.66, 1.7] {
            for sheet in [Sheet::X, Sheet::Y] {
                let q = model.sheet_point(sheet, &[p]).unwrap();
                let cal = build_calibration_and_metric(&model, &q).unwrap();
                let xi = simple_from_frame(&model.sheet_frame(sheet, &[p]).unwrap(), &cal.metric).unwrap();
                assert_abs_diff_eq!(evaluate(&cal.phi(), &xi).unwrap(), 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn singular_set_of_single_cell() {
        let model = single_cell_model();
        let rep = extract_singular_set(&model, 0.0).unwrap();
        assert_eq!(rep.detected, *model.zero_set());
        assert_eq!(rep.hausdorff_cells, 0.0);
        assert!(rep.spines_equal(1));
        assert_eq!(rep.points[0].len(), 6);
    }

    #[test]
    fn empty_zero_set_has_no_singular_points() {
        let k = DyadicCellSet::empty(1, 4.0, 6).unwrap();
        let model = build_ambient(&ModelParams::new(3, 1, 4.0, 1e-3), k).unwrap();
        let rep = extract_singular_set(&model, 0.0).unwrap();
        assert!(rep.detected.is_empty());
        assert!(rep.points.is_empty());
    }

    #[test]
    fn large_epsilon_fails_reach_gate() {
        let k = DyadicCellSet::new(1, 4.0, 6, [[10u64]]).unwrap();
        assert!(matches!(
            build_ambient(&ModelParams::new(3, 1, 4.0, 10.0), k),
            Err(Error::ReachTooSmall { .. })
        ));
    }

    #[test]
    fn closedness_on_single_cell_model() {
        let model = single_cell_model();
        let q = model.ambient_point(&[0.0, 0.0], &[0.0, 0.0], &[0.9], 0.3);
        assert!(exterior_derivative_max(&model, &q, CLOSEDNESS_STEP).unwrap() < 1e-4);
    }
}
