//! Two-branch Cantor sets, products with intervals, and box-counting dimension.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::error::{invalid, Result};
use crate::whitney::{DyadicCellSet, MAX_TORUS_DIM};

/// Self-similar set in `[offset, offset + interval_length]` on a circle of
/// length `side`, kept with two sub-intervals of relative length `ratio` at
/// each of `depth` generations.
#[derive(Debug, Clone, PartialEq)]
pub struct CantorSpec {
    pub ratio: f64,
    pub depth: u32,
    pub interval_length: f64,
    pub offset: f64,
    pub side: f64,
    /// Resolution of the snapping grid; chosen so that a cell is no longer
    /// than a final interval when `None`.
    pub grid_depth: Option<u32>,
}

impl CantorSpec {
    /// The unit interval on a circle of the given length.
    pub fn new(ratio: f64, depth: u32, side: f64) -> Self {
        Self {
            ratio,
            depth,
            interval_length: 1.0,
            offset: 0.0,
            side,
            grid_depth: None,
        }
    }

    pub fn with_grid_depth(mut self, grid_depth: u32) -> Self {
        self.grid_depth = Some(grid_depth);
        self
    }

    /// `log 2 / log(1/r)`.
    pub fn analytic_dimension(&self) -> f64 {
        2f64.ln() / (1.0 / self.ratio).ln()
    }

    /// Length of each of the `2^depth` final intervals.
    pub fn final_length(&self) -> f64 {
        self.interval_length * self.ratio.powi(self.depth as i32)
    }

    pub fn resolved_grid_depth(&self) -> u32 {
        self.grid_depth
            .unwrap_or_else(|| (self.side / self.final_length()).log2().ceil().max(0.0) as u32)
    }

    fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 0.5) {
            return Err(invalid(format!("Cantor ratio must lie in (0, 1/2), got {}", self.ratio)));
        }
        if !(self.side > 0.0 && self.interval_length > 0.0 && self.offset >= 0.0) {
            return Err(invalid("Cantor interval and side must be positive"));
        }
        if self.offset + self.interval_length > self.side + 1e-12 {
            return Err(invalid("Cantor interval does not fit on the circle"));
        }
        Ok(())
    }
}

/// `2^{-1/α}`, the ratio whose Cantor set has dimension `α`.
pub fn ratio_for_dimension(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("target dimension must lie in (0, 1), got {alpha}")));
    }
    Ok(2f64.powf(-1.0 / alpha))
}

/// Depth-`d` approximation, snapped outward to the dyadic grid.
pub fn cantor_generate(spec: &CantorSpec) -> Result<DyadicCellSet> {
    spec.validate()?;
    let grid = spec.resolved_grid_depth();
    if grid > 60 {
        return Err(invalid(format!("grid depth {grid} too large")));
    }
    let h = spec.side / (1u64 << grid) as f64;
    let snap = |a: f64, b: f64| -> (u64, u64) {
        let lo = (a / h + 1e-9).floor().max(0.0) as u64;
        let hi = ((b / h - 1e-9).ceil() as u64).max(lo + 1);
        (lo, hi)
    };
    let (lo, hi) = snap(spec.offset, spec.offset + spec.interval_length);
    if spec.depth >= 63 || (1u64 << spec.depth) > hi - lo {
        return Err(invalid(format!(
            "depth {} needs more than the {} grid cells spanned at grid depth {grid}",
            spec.depth,
            hi - lo
        )));
    }
    let mut intervals = vec![spec.offset];
    let mut len = spec.interval_length;
    for _ in 0..spec.depth {
        let next = len * spec.ratio;
        intervals = intervals
            .iter()
            .flat_map(|&a| [a, a + len - next])
            .collect();
        len = next;
    }
    let n = 1u64 << grid;
    let mut cells = Vec::new();
    for a in intervals {
        let (lo, hi) = snap(a, a + len);
        cells.extend((lo..hi).map(|i| [i % n]));
    }
    DyadicCellSet::new(1, spec.side, grid, cells)
}

/// `s × [0,1]^extra_dims`, the new axes appended after the existing ones.
pub fn product_with_interval(s: &DyadicCellSet, extra_dims: usize) -> Result<DyadicCellSet> {
    let dim = s.torus_dim() + extra_dims;
    if dim > MAX_TORUS_DIM {
        return Err(invalid(format!("product dimension {dim} exceeds {MAX_TORUS_DIM}")));
    }
    let n = 1u64 << s.depth();
    let per_axis = ((n as f64 / s.side()).ceil() as u64).min(n);
    let bits = s.depth();
    let base_width = s.torus_dim() as u32 * bits;
    let mut extras = vec![0u64];
    for a in 0..extra_dims as u32 {
        extras = extras
            .iter()
            .flat_map(|&e| (0..per_axis).map(move |i| e | (i << (base_width + a * bits))))
            .collect();
    }
    let keys = s
        .keys()
        .iter()
        .flat_map(|&k| extras.iter().map(move |&e| k | e))
        .collect();
    DyadicCellSet::from_packed(dim, s.side(), s.depth(), keys)
}

/// Least-squares box-counting fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDimEstimate {
    pub depths: Vec<u32>,
    pub counts: Vec<usize>,
    pub log_inv_delta: Vec<f64>,
    pub log_count: Vec<f64>,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Set when the input was empty; the slope is then 0.
    pub empty: bool,
}

impl BoxDimEstimate {
    /// CSV with columns `depth,count,log_inv_delta,log_count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,count,log_inv_delta,log_count\n");
        for i in 0..self.depths.len() {
            let _ = writeln!(
                out,
                "{},{},{:.12},{:.12}",
                self.depths[i], self.counts[i], self.log_inv_delta[i], self.log_count[i]
            );
        }
        out
    }
}

/// Depths from two below the interval scale down to the final interval scale.
pub fn default_depth_range(spec: &CantorSpec) -> RangeInclusive<u32> {
    let start = (spec.side / spec.interval_length).log2().ceil().max(0.0) as u32 + 2;
    let end = (spec.side / spec.final_length()).log2().floor().max(0.0) as u32;
    start..=end.max(start)
}

/// Box-counting dimension of `s` from cell counts at the given depths.
pub fn box_dim(s: &DyadicCellSet, depths: RangeInclusive<u32>) -> Result<BoxDimEstimate> {
    let depths: Vec<u32> = depths.collect();
    if depths.len() < 3 {
        return Err(invalid("box counting needs at least three depths"));
    }
    if let Some(&d) = depths.iter().find(|&&d| d > s.depth()) {
        return Err(invalid(format!("depth {d} is finer than the set's depth {}", s.depth())));
    }
    let counts: Vec<usize> = depths
        .iter()
        .map(|&d| s.coarsen(d).map(|c| c.len()))
        .collect::<Result<_>>()?;
    let log_inv_delta: Vec<f64> = depths
        .iter()
        .map(|&d| d as f64 * 2f64.ln() - s.side().ln())
        .collect();
    if s.is_empty() {
        return Ok(BoxDimEstimate {
            log_count: vec![f64::NEG_INFINITY; depths.len()],
            depths,
            counts,
            log_inv_delta,
            slope: 0.0,
            residual: 0.0,
            empty: true,
        });
    }
    let log_count: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = depths.len() as f64;
    let mx = log_inv_delta.iter().sum::<f64>() / n;
    let my = log_count.iter().sum::<f64>() / n;
    let sxy: f64 = log_inv_delta
        .iter()
        .zip(&log_count)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = log_inv_delta.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (log_inv_delta
        .iter()
        .zip(&log_count)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(BoxDimEstimate {
        depths,
        counts,
        log_inv_delta,
        log_count,
        slope,
        residual,
        empty: false,
    })
}
