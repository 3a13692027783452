//! Smooth functions on flat tori `R^j/ρZ^j` vanishing exactly on a union of
//! dyadic cells.
//!
//! The complement of the zero set is covered by a Whitney family of dyadic
//! cubes; each cube carries a scaled copy of `exp(-1/(1-|u|²))` whose
//! coefficient decays with the cube size, and a global factor fixes the
//! `C^L` bound.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::jet::JetSpace;

/// Coarsest level of the Whitney subdivision (cubes of side `ρ/4`).
pub const FIRST_LEVEL: u32 = 2;
/// Levels of subdivision below the resolution of the zero set.
pub const EXTRA_LEVELS: u32 = 3;
/// Ratio of a bump's support radius to the half-diagonal of its cube.
pub const BALL_DILATION: f64 = 1.5;
/// Largest supported torus dimension.
pub const MAX_TORUS_DIM: usize = 4;

/// Minimum-image representative of `d` in `[-side/2, side/2]`.
pub fn wrap(d: f64, side: f64) -> f64 {
    d - side * (d / side).round()
}

/// A closed union of dyadic cells of side `ρ·2^{-depth}` on `R^j/ρZ^j`.
#[derive(Debug, Clone)]
pub struct DyadicCellSet {
    torus_dim: usize,
    side: f64,
    depth: u32,
    keys: Vec<u64>,
    pyramid: OnceLock<Arc<Vec<HashSet<u64>>>>,
}

impl PartialEq for DyadicCellSet {
    fn eq(&self, other: &Self) -> bool {
        self.torus_dim == other.torus_dim
            && self.side == other.side
            && self.depth == other.depth
            && self.keys == other.keys
    }
}

fn pack(indices: &[u64], bits: u32) -> u64 {
    indices
        .iter()
        .enumerate()
        .fold(0u64, |acc, (a, &i)| acc | (i << (a as u32 * bits)))
}

fn unpack(key: u64, dim: usize, bits: u32) -> Vec<u64> {
    let mask = if bits == 0 { 0 } else { (1u64 << bits) - 1 };
    (0..dim).map(|a| (key >> (a as u32 * bits)) & mask).collect()
}

impl DyadicCellSet {
    fn check_shape(torus_dim: usize, side: f64, depth: u32) -> Result<()> {
        if torus_dim > MAX_TORUS_DIM {
            return Err(invalid(format!("torus dimension {torus_dim} exceeds {MAX_TORUS_DIM}")));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(invalid(format!("torus side must be positive, got {side}")));
        }
        if torus_dim as u32 * depth > 60 {
            return Err(invalid(format!(
                "depth {depth} too large for a {torus_dim}-dimensional cell index"
            )));
        }
        Ok(())
    }

    /// Builds a set from per-axis cell indices, each in `0..2^depth`.
    pub fn new<I>(torus_dim: usize, side: f64, depth: u32, cells: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: AsRef<[u64]>,
    {
        Self::check_shape(torus_dim, side, depth)?;
        let n = 1u64 << depth;
        let mut keys = Vec::new();
        for cell in cells {
            let cell = cell.as_ref();
            if cell.len() != torus_dim {
                return Err(Error::DimensionMismatch {
                    expected: torus_dim,
                    found: cell.len(),
                });
            }
            if let Some(&bad) = cell.iter().find(|&&i| i >= n) {
                return Err(invalid(format!("cell index {bad} outside 0..{n}")));
            }
            keys.push(pack(cell, depth));
        }
        Ok(Self::from_keys(torus_dim, side, depth, keys))
    }

    /// Builds from packed keys after validating the shape.
    pub(crate) fn from_packed(torus_dim: usize, side: f64, depth: u32, keys: Vec<u64>) -> Result<Self> {
        Self::check_shape(torus_dim, side, depth)?;
        Ok(Self::from_keys(torus_dim, side, depth, keys))
    }

    pub(crate) fn from_keys(torus_dim: usize, side: f64, depth: u32, mut keys: Vec<u64>) -> Self {
        keys.sort_unstable();
        keys.dedup();
        Self {
            torus_dim,
            side,
            depth,
            keys,
            pyramid: OnceLock::new(),
        }
    }

    pub fn empty(torus_dim: usize, side: f64, depth: u32) -> Result<Self> {
        Self::check_shape(torus_dim, side, depth)?;
        Ok(Self::from_keys(torus_dim, side, depth, Vec::new()))
    }

    /// Every cell of the torus.
    pub fn full(torus_dim: usize, side: f64, depth: u32) -> Result<Self> {
        Self::check_shape(torus_dim, side, depth)?;
        let count = 1u64 << (depth as usize * torus_dim);
        if count > 1 << 24 {
            return Err(invalid("full cell set too large to enumerate"));
        }
        Ok(Self::from_keys(torus_dim, side, depth, (0..count).collect()))
    }

    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Side length of one cell.
    pub fn cell_side(&self) -> f64 {
        self.side / (1u64 << self.depth) as f64
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.keys.len() as u128 == 1u128 << (self.depth as usize * self.torus_dim)
    }

    pub(crate) fn keys(&self) -> &[u64] {
        &self.keys
    }

    /// Per-axis indices of every cell, in key order.
    pub fn cells(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        self.keys
            .iter()
            .map(move |&k| unpack(k, self.torus_dim, self.depth))
    }

    pub fn contains_cell(&self, indices: &[u64]) -> bool {
        indices.len() == self.torus_dim
            && indices.iter().all(|&i| i < 1u64 << self.depth)
            && self.keys.binary_search(&pack(indices, self.depth)).is_ok()
    }

    pub fn cell_center(&self, indices: &[u64]) -> Vec<f64> {
        let h = self.cell_side();
        indices.iter().map(|&i| (i as f64 + 0.5) * h).collect()
    }

    /// Whether `p` lies in the closed union of the cells.
    pub fn contains_point(&self, p: &[f64]) -> bool {
        if p.len() != self.torus_dim || self.is_empty() {
            return false;
        }
        let n = 1i64 << self.depth;
        let h = self.cell_side();
        let candidates: Vec<Vec<u64>> = p
            .iter()
            .map(|&x| {
                let t = x.rem_euclid(self.side) / h;
                let i = t.floor() as i64;
                let mut c = vec![i.rem_euclid(n) as u64];
                if t - (i as f64) < 1e-9 {
                    c.push((i - 1).rem_euclid(n) as u64);
                }
                if (i + 1) as f64 - t < 1e-9 {
                    c.push((i + 1).rem_euclid(n) as u64);
                }
                c
            })
            .collect();
        let mut idx = vec![0u64; self.torus_dim];
        any_product(&candidates, 0, &mut idx, &mut |cell| self.contains_cell(cell))
    }

    /// The set of parent cells at a coarser depth.
    pub fn coarsen(&self, depth: u32) -> Result<Self> {
        if depth > self.depth {
            return Err(invalid(format!("cannot coarsen depth {} to {depth}", self.depth)));
        }
        let shift = self.depth - depth;
        let mask = if self.depth == 0 { 0 } else { (1u64 << self.depth) - 1 };
        let keys = self
            .keys
            .iter()
            .map(|&k| {
                (0..self.torus_dim as u32).fold(0u64, |acc, a| {
                    acc | (((k >> (a * self.depth)) & mask) >> shift) << (a * depth)
                })
            })
            .collect();
        Ok(Self::from_keys(self.torus_dim, self.side, depth, keys))
    }

    /// The same closed set represented at a finer depth.
    pub fn refine(&self, depth: u32) -> Result<Self> {
        if depth < self.depth {
            return Err(invalid(format!("cannot refine depth {} to {depth}", self.depth)));
        }
        Self::check_shape(self.torus_dim, self.side, depth)?;
        let shift = depth - self.depth;
        let per_axis = 1u64 << shift;
        let mut keys = Vec::new();
        for cell in self.cells() {
            let base: Vec<u64> = cell.iter().map(|i| i << shift).collect();
            let mut offset = vec![0u64; self.torus_dim];
            loop {
                let child: Vec<u64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
                keys.push(pack(&child, depth));
                if !increment(&mut offset, per_axis) {
                    break;
                }
            }
        }
        Ok(Self::from_keys(self.torus_dim, self.side, depth, keys))
    }

    fn pyramid(&self) -> &Arc<Vec<HashSet<u64>>> {
        self.pyramid.get_or_init(|| {
            let mut levels = vec![HashSet::new(); self.depth as usize + 1];
            for cell in self.cells() {
                for level in 0..=self.depth {
                    let shift = self.depth - level;
                    let parent: Vec<u64> = cell.iter().map(|i| i >> shift).collect();
                    levels[level as usize].insert(pack(&parent, level));
                }
            }
            Arc::new(levels)
        })
    }

    /// Euclidean distance on the torus between the axis-aligned box
    /// `center ± half_width` and the closed union of cells; infinite when empty.
    pub fn distance_to_box(&self, center: &[f64], half_width: f64) -> f64 {
        self.distance_to_box_until(center, half_width, 0.0)
    }

    /// Like [`distance_to_box`](Self::distance_to_box), but may stop early
    /// with any value below `stop_below` once one is found.
    pub fn distance_to_box_until(&self, center: &[f64], half_width: f64, stop_below: f64) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let pyramid = self.pyramid();
        let mut best = f64::INFINITY;
        self.search(pyramid, 0, 0, center, half_width, stop_below, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        pyramid: &[HashSet<u64>],
        level: u32,
        key: u64,
        center: &[f64],
        half_width: f64,
        stop_below: f64,
        best: &mut f64,
    ) {
        if *best < stop_below {
            return;
        }
        let d = self.box_gap(level, key, center, half_width);
        if d >= *best {
            return;
        }
        if level == self.depth {
            *best = d;
            return;
        }
        let parent = unpack(key, self.torus_dim, level);
        let mut children: Vec<(f64, u64)> = Vec::with_capacity(1 << self.torus_dim);
        for mask in 0..(1u64 << self.torus_dim) {
            let child: Vec<u64> = parent
                .iter()
                .enumerate()
                .map(|(a, i)| 2 * i + ((mask >> a) & 1))
                .collect();
            let ck = pack(&child, level + 1);
            if pyramid[level as usize + 1].contains(&ck) {
                children.push((self.box_gap(level + 1, ck, center, half_width), ck));
            }
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, ck) in children {
            self.search(pyramid, level + 1, ck, center, half_width, stop_below, best);
        }
    }

    fn box_gap(&self, level: u32, key: u64, center: &[f64], half_width: f64) -> f64 {
        let s = self.side / (1u64 << level) as f64;
        unpack(key, self.torus_dim, level)
            .iter()
            .zip(center)
            .map(|(&i, &c)| {
                let d = wrap(c - (i as f64 + 0.5) * s, self.side).abs();
                let gap = (d - half_width - 0.5 * s).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance_to_point(&self, p: &[f64]) -> f64 {
        self.distance_to_box(p, 0.0)
    }

    /// Hausdorff distance between the two closed unions, in units of the
    /// cell side, with adjacent cells at distance zero.
    pub fn hausdorff_cells(&self, other: &Self) -> Result<f64> {
        if self.torus_dim != other.torus_dim || self.depth != other.depth || self.side != other.side {
            return Err(invalid("cell sets live on different grids"));
        }
        match (self.is_empty(), other.is_empty()) {
            (true, true) => return Ok(0.0),
            (true, false) | (false, true) => return Ok(f64::INFINITY),
            _ => {}
        }
        let h = self.cell_side();
        let directed = |a: &Self, b: &Self| {
            a.cells()
                .map(|c| {
                    if b.contains_cell(&c) {
                        0.0
                    } else {
                        b.distance_to_box(&a.cell_center(&c), 0.5 * h)
                    }
                })
                .fold(0.0_f64, f64::max)
        };
        Ok(directed(self, other).max(directed(other, self)) / h)
    }

    /// One line `depth i1 … ij` per cell, after a `#` header line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# torus_dim={} side={} depth={}\n",
            self.torus_dim, self.side, self.depth
        );
        for cell in self.cells() {
            out.push_str(&self.depth.to_string());
            for i in cell {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. The header supplies the
    /// torus shape; without it `side` must be given and the shape is taken
    /// from the first cell line.
    pub fn from_text(text: &str, side: Option<f64>) -> Result<Self> {
        let mut torus_dim = None;
        let mut depth = None;
        let mut side = side;
        let mut cells = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    let Some((k, v)) = field.split_once('=') else { continue };
                    let parse_err = |e: String| Error::Parse { line: line_no, message: e };
                    match k {
                        "torus_dim" => torus_dim = Some(v.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                        "side" => side = Some(v.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
                        "depth" => depth = Some(v.parse::<u32>().map_err(|e| parse_err(e.to_string()))?),
                        _ => {}
                    }
                }
                continue;
            }
            let numbers: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let (&d, idx) = numbers.split_first().ok_or_else(|| Error::Parse {
                line: line_no,
                message: "empty cell line".into(),
            })?;
            let d = d as u32;
            if *depth.get_or_insert(d) != d {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("mixed depths {d} and {}", depth.unwrap_or(d)),
                });
            }
            if *torus_dim.get_or_insert(idx.len()) != idx.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} indices", torus_dim.unwrap_or(0)),
                });
            }
            cells.push(idx.to_vec());
        }
        let side = side.ok_or_else(|| invalid("cell set text has no side"))?;
        let torus_dim = torus_dim.ok_or_else(|| invalid("cell set text has no cells and no header"))?;
        Self::new(torus_dim, side, depth.unwrap_or(0), cells)
    }
}

fn any_product(
    candidates: &[Vec<u64>],
    axis: usize,
    idx: &mut Vec<u64>,
    test: &mut impl FnMut(&[u64]) -> bool,
) -> bool {
    if axis == candidates.len() {
        return test(idx);
    }
    for &c in &candidates[axis] {
        idx[axis] = c;
        if any_product(candidates, axis + 1, idx, test) {
            return true;
        }
    }
    false
}

/// Odometer increment over `0..base` per digit; false after the last value.
fn increment(digits: &mut [u64], base: u64) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// A cube of the Whitney cover.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitneyCube {
    pub level: u32,
    pub index: Vec<u64>,
    pub center: Vec<f64>,
    pub side: f64,
    /// Distance from the closed cube to the zero set (infinite when empty).
    pub distance: f64,
}

impl WhitneyCube {
    /// Radius of the bump supported around this cube.
    pub fn support_radius(&self) -> f64 {
        support_radius(self.side, self.center.len())
    }
}

fn support_radius(side: f64, dim: usize) -> f64 {
    0.5 * BALL_DILATION * side * (dim as f64).sqrt()
}

/// Whitney decomposition of the complement of a cell set.
#[derive(Debug, Clone)]
pub struct WhitneyCover {
    pub torus_dim: usize,
    pub side: f64,
    pub cubes: Vec<WhitneyCube>,
    /// No point lies in more than this many support balls.
    pub overlap_bound: usize,
    pub max_level: u32,
}

/// Comparability constants `(c1, c2)` with `c1·dist ≤ side ≤ c2·dist`.
pub fn comparability_constants(torus_dim: usize) -> (f64, f64) {
    (1.0 / (4.0 + (torus_dim as f64).sqrt()), 0.5)
}

/// Number of consecutive levels whose support balls can share a point.
fn level_window(torus_dim: usize) -> usize {
    let r = (torus_dim as f64).sqrt();
    let ratio = (4.0 + 2.25 * r) / (2.0 - 0.75 * r);
    ratio.log2().floor() as usize + 1
}

fn per_level_overlap(torus_dim: usize) -> usize {
    let per_axis = (BALL_DILATION * (torus_dim as f64).sqrt()).floor() as usize + 1;
    per_axis.pow(torus_dim as u32)
}

/// Decomposes the complement of `k` into dyadic cubes with side comparable
/// to their distance from `k`.
pub fn whitney_cover(k: &DyadicCellSet) -> Result<WhitneyCover> {
    let j = k.torus_dim();
    if j == 0 {
        return Err(invalid("Whitney cover needs a torus of dimension at least 1"));
    }
    let max_level = k.depth().max(FIRST_LEVEL) + EXTRA_LEVELS;
    if j as u32 * max_level > 60 {
        return Err(invalid("zero set too fine for the Whitney index"));
    }
    let mut cubes = Vec::new();
    if !k.is_full() {
        let n0 = 1u64 << FIRST_LEVEL;
        let mut stack: Vec<(u32, Vec<u64>)> = Vec::new();
        let mut idx = vec![0u64; j];
        loop {
            stack.push((FIRST_LEVEL, idx.clone()));
            if !increment(&mut idx, n0) {
                break;
            }
        }
        stack.reverse();
        while let Some((level, index)) = stack.pop() {
            let s = k.side() / (1u64 << level) as f64;
            let center: Vec<f64> = index.iter().map(|&i| (i as f64 + 0.5) * s).collect();
            let distance = k.distance_to_box_until(&center, 0.5 * s, 2.0 * s);
            if distance >= 2.0 * s {
                cubes.push(WhitneyCube {
                    level,
                    index,
                    center,
                    side: s,
                    distance,
                });
            } else if level < max_level {
                let mut bits = vec![0u64; j];
                let mut children = Vec::with_capacity(1 << j);
                loop {
                    children.push((level + 1, index.iter().zip(&bits).map(|(i, b)| 2 * i + b).collect()));
                    if !increment(&mut bits, 2) {
                        break;
                    }
                }
                stack.extend(children.into_iter().rev());
            }
        }
    }
    let levels: HashSet<u32> = cubes.iter().map(|c| c.level).collect();
    let overlap_bound = levels.len().min(level_window(j)) * per_level_overlap(j);
    Ok(WhitneyCover {
        torus_dim: j,
        side: k.side(),
        cubes,
        overlap_bound: if levels.is_empty() { 0 } else { overlap_bound },
        max_level,
    })
}

/// One term `coeff · exp(-1/(1-|p-center|²/radius²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub coeff: f64,
}

/// Derivatives of a [`SmoothFunction`] at a point, up to its order.
#[derive(Debug, Clone)]
pub struct Derivatives {
    space: Arc<JetSpace>,
    taylor: Vec<f64>,
}

impl Derivatives {
    /// `∂^α f`; zero for orders beyond the jet.
    pub fn get(&self, alpha: &[usize]) -> f64 {
        match self.space.index_of(alpha) {
            Some(i) => self.taylor[i] * self.space.factorial(i),
            None => 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.taylor[0]
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.space.nvars())
            .map(|i| {
                if self.space.order() >= 1 {
                    self.taylor[self.space.linear(i)]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Hessian matrix as rows; zero when the order is below 2.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.space.nvars();
        let mut h = vec![vec![0.0; n]; n];
        for (a, row) in h.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                let mut alpha = vec![0usize; n];
                alpha[a] += 1;
                alpha[b] += 1;
                *entry = self.get(&alpha);
            }
        }
        h
    }

    /// Largest `|∂^α f|` over `|α| ≤ order`.
    pub fn max_abs(&self, order: usize) -> f64 {
        self.space
            .monomials()
            .iter()
            .enumerate()
            .filter(|(_, m)| m.iter().map(|&e| e as usize).sum::<usize>() <= order)
            .map(|(i, _)| (self.taylor[i] * self.space.factorial(i)).abs())
            .fold(0.0, f64::max)
    }
}

/// A finite sum of scaled bumps on `R^j/ρZ^j` with derivatives to order `L`.
#[derive(Debug, Clone)]
pub struct SmoothFunction {
    torus_dim: usize,
    side: f64,
    order: usize,
    bumps: Vec<Bump>,
    /// bucket level -> cell key -> bump ids
    buckets: Vec<(u32, HashMap<u64, Vec<usize>>)>,
}

impl SmoothFunction {
    /// Builds a function from explicit bumps; every radius must stay below
    /// a quarter of the torus side.
    pub fn from_bumps(torus_dim: usize, side: f64, order: usize, bumps: Vec<Bump>) -> Result<Self> {
        if torus_dim == 0 || torus_dim > MAX_TORUS_DIM {
            return Err(invalid(format!("unsupported torus dimension {torus_dim}")));
        }
        if !(side > 0.0) {
            return Err(invalid("torus side must be positive"));
        }
        for b in &bumps {
            if b.center.len() != torus_dim {
                return Err(Error::DimensionMismatch {
                    expected: torus_dim,
                    found: b.center.len(),
                });
            }
            if !(b.radius > 0.0 && b.radius <= 0.5 * side) {
                return Err(invalid(format!("bump radius {} outside (0, side/2]", b.radius)));
            }
        }
        let mut by_level: HashMap<u32, HashMap<u64, Vec<usize>>> = HashMap::new();
        for (id, b) in bumps.iter().enumerate() {
            // cells of the bucket level are at least as large as the radius
            let level = ((side / b.radius).log2().floor().max(0.0) as u32).min(60 / torus_dim as u32);
            let s = side / (1u64 << level) as f64;
            let n = 1i64 << level;
            let cell: Vec<u64> = b
                .center
                .iter()
                .map(|&c| ((c.rem_euclid(side) / s).floor() as i64).rem_euclid(n) as u64)
                .collect();
            by_level
                .entry(level)
                .or_default()
                .entry(pack(&cell, level))
                .or_default()
                .push(id);
        }
        let mut buckets: Vec<_> = by_level.into_iter().collect();
        buckets.sort_by_key(|(l, _)| *l);
        Ok(Self {
            torus_dim,
            side,
            order,
            bumps,
            buckets,
        })
    }

    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    /// The same function with every coefficient multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bumps {
            b.coeff *= factor;
        }
        out
    }

    /// Ids of the bumps whose open support contains `p`.
    fn active(&self, p: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offsets = vec![0u64; self.torus_dim];
        for (level, cells) in &self.buckets {
            let n = 1i64 << level;
            let s = self.side / n as f64;
            let base: Vec<i64> = p
                .iter()
                .map(|&x| (x.rem_euclid(self.side) / s).floor() as i64)
                .collect();
            let mut seen = HashSet::new();
            offsets.iter_mut().for_each(|o| *o = 0);
            loop {
                let cell: Vec<u64> = base
                    .iter()
                    .zip(&offsets)
                    .map(|(&b, &o)| (b + o as i64 - 1).rem_euclid(n) as u64)
                    .collect();
                let key = pack(&cell, *level);
                if seen.insert(key) {
                    if let Some(ids) = cells.get(&key) {
                        for &id in ids {
                            let b = &self.bumps[id];
                            let r2: f64 = b
                                .center
                                .iter()
                                .zip(p)
                                .map(|(c, x)| wrap(x - c, self.side).powi(2))
                                .sum();
                            if r2 < b.radius * b.radius {
                                out.push(id);
                            }
                        }
                    }
                }
                if !increment(&mut offsets, 3) {
                    break;
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// All derivatives up to the order of `f` at `p`.
    pub fn derivatives(&self, p: &[f64]) -> Result<Derivatives> {
        self.derivatives_to(p, self.order)
    }

    fn derivatives_to(&self, p: &[f64], order: usize) -> Result<Derivatives> {
        if p.len() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                found: p.len(),
            });
        }
        let space = JetSpace::get(self.torus_dim, order);
        let mut taylor = vec![0.0; space.len()];
        for id in self.active(p) {
            let b = &self.bumps[id];
            let d: Vec<f64> = b.center.iter().zip(p).map(|(c, x)| wrap(x - c, self.side)).collect();
            let jet = bump_jet(&space, &d, b.radius);
            for (t, v) in taylor.iter_mut().zip(jet) {
                *t += b.coeff * v;
            }
        }
        Ok(Derivatives { space, taylor })
    }

    /// `∂^α f(p)`, exact up to rounding.
    pub fn eval(&self, p: &[f64], alpha: &[usize]) -> Result<f64> {
        if alpha.len() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                found: alpha.len(),
            });
        }
        let total: usize = alpha.iter().sum();
        if total > self.order {
            return Err(invalid(format!(
                "derivative of order {total} exceeds the function's order {}",
                self.order
            )));
        }
        Ok(self.derivatives_to(p, total)?.get(alpha))
    }

    pub fn value(&self, p: &[f64]) -> Result<f64> {
        Ok(self.derivatives_to(p, 0)?.value())
    }

    /// Sampled `C^order` norm: the largest `|∂^α f|`, `|α| ≤ order`, over the
    /// vertices of the uniform grid with `2^grid_depth` points per axis.
    pub fn ck_norm(&self, order: usize, grid_depth: u32) -> Result<f64> {
        if order > self.order {
            return Err(invalid(format!(
                "order {order} exceeds the function's order {}",
                self.order
            )));
        }
        let n = 1u64 << grid_depth;
        let total = n.checked_pow(self.torus_dim as u32).filter(|&t| t <= 1 << 26)
            .ok_or_else(|| invalid("sample grid too large"))?;
        let h = self.side / n as f64;
        let j = self.torus_dim;
        (0..total)
            .into_par_iter()
            .map(|flat| {
                let p: Vec<f64> = (0..j)
                    .map(|a| ((flat / n.pow(a as u32)) % n) as f64 * h)
                    .collect();
                self.derivatives_to(&p, order).map(|d| d.max_abs(order))
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

/// Taylor coefficients in the displacement of `exp(-1/(1-|d|²/R²))`.
fn bump_jet(space: &JetSpace, d: &[f64], radius: f64) -> Vec<f64> {
    let r2 = radius * radius;
    let mut s = vec![0.0; space.len()];
    s[0] = 1.0 - d.iter().map(|x| x * x).sum::<f64>() / r2;
    if s[0] <= 0.0 {
        return vec![0.0; space.len()];
    }
    if space.order() >= 1 {
        for (i, &x) in d.iter().enumerate() {
            s[space.linear(i)] = -2.0 * x / r2;
        }
    }
    if space.order() >= 2 {
        for i in 0..d.len() {
            let mut alpha = vec![0usize; d.len()];
            alpha[i] = 2;
            s[space.index_of(&alpha).expect("order >= 2")] = -1.0 / r2;
        }
    }
    let inv = space.recip(&s);
    if inv[0] > 600.0 {
        return vec![0.0; space.len()];
    }
    let neg: Vec<f64> = inv.iter().map(|x| -x).collect();
    space.exp(&neg)
}

/// Upper estimates of `max_{|u|≤1} max_{|α|=k} |∂^α ψ(u)|` for the unit
/// profile, `k = 0..=order`, with a small safety margin.
pub fn profile_derivative_bounds(torus_dim: usize, order: usize) -> Vec<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Vec<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("profile cache poisoned").get(&(torus_dim, order)) {
        return v.clone();
    }
    let v = compute_profile_bounds(torus_dim, order);
    cache
        .lock()
        .expect("profile cache poisoned")
        .insert((torus_dim, order), v.clone());
    v
}

fn compute_profile_bounds(j: usize, order: usize) -> Vec<f64> {
    let space = JetSpace::get(j, order);
    let by_order = |u: &[f64]| -> Vec<f64> {
        let jet = bump_jet(&space, u, 1.0);
        let mut m = vec![0.0_f64; order + 1];
        for (i, mono) in space.monomials().iter().enumerate() {
            let k: usize = mono.iter().map(|&e| e as usize).sum();
            m[k] = m[k].max((jet[i] * space.factorial(i)).abs());
        }
        m
    };
    // the per-order maxima are invariant under coordinate permutations and
    // reflections, so the sector 1 >= u_1 >= ... >= u_j >= 0 suffices
    let steps = [0usize, 4000, 800, 120, 40][j.min(4)];
    let mut best = vec![(0.0_f64, vec![0.0; j]); order + 1];
    let mut u = vec![0usize; j];
    loop {
        if u.windows(2).all(|w| w[0] >= w[1]) {
            let point: Vec<f64> = u.iter().map(|&i| i as f64 / steps as f64).collect();
            if point.iter().map(|x| x * x).sum::<f64>() < 1.0 {
                for (k, v) in by_order(&point).into_iter().enumerate() {
                    if v > best[k].0 {
                        best[k] = (v, point.clone());
                    }
                }
            }
        }
        if !increment_usize(&mut u, steps + 1) {
            break;
        }
    }
    // local pattern search around each grid maximum
    for (k, entry) in best.iter_mut().enumerate() {
        let mut step = 1.0 / steps as f64;
        while step > 1e-7 {
            let mut moved = false;
            for axis in 0..j {
                for dir in [-1.0, 1.0] {
                    let mut q = entry.1.clone();
                    q[axis] += dir * step;
                    let v = by_order(&q)[k];
                    if v > entry.0 {
                        *entry = (v, q);
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
    }
    best.into_iter().map(|(v, _)| v * 1.02).collect()
}

fn increment_usize(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// A Whitney-type function with zero set `k` and sampled `C^order` norm at most `epsilon`.
pub fn build_vanishing_function(k: &DyadicCellSet, epsilon: f64, order: usize) -> Result<SmoothFunction> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let cover = whitney_cover(k)?;
    let j = cover.torus_dim;
    let profile = profile_derivative_bounds(j, order);
    let weight = |c: &WhitneyCube| c.side.powi(order as i32 + 1) * 4f64.powi(-(c.level as i32));
    // per-level bound on weight · max_k |∂^k bump|
    let mut per_level: HashMap<u32, f64> = HashMap::new();
    for c in &cover.cubes {
        let r = c.support_radius();
        let b = profile
            .iter()
            .enumerate()
            .map(|(kk, m)| m * r.powi(-(kk as i32)))
            .fold(0.0, f64::max);
        let e = per_level.entry(c.level).or_insert(0.0);
        *e = e.max(weight(c) * b);
    }
    // a point meets at most `window` consecutive levels, each contributing
    // at most `per_level_overlap` bumps
    let window = level_window(j) as u32;
    let bound = per_level
        .keys()
        .map(|&l| {
            (l..l + window)
                .filter_map(|m| per_level.get(&m))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        * per_level_overlap(j) as f64;
    let eps0 = if bound > 0.0 { epsilon / bound } else { 0.0 };
    let bumps = cover
        .cubes
        .iter()
        .map(|c| Bump {
            center: c.center.clone(),
            radius: c.support_radius(),
            coeff: eps0 * weight(c),
        })
        .collect();
    SmoothFunction::from_bumps(j, k.side(), order, bumps)
}
