//! Adaptive important-token selection by interquartile-range fences, the
//! spatially uniform supplement, and the sequential / spatial-grid sampling
//! baselines.
//!
//! Everything here is deterministic. Index lists are always strictly
//! ascending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fence multiplier on the interquartile range.
pub const FENCE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fences {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Iqr,
    IqrPlusUniform,
    Sequential,
    Spatial,
    FloorFallback,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Iqr => "iqr",
            SelectionMethod::IqrPlusUniform => "iqr_plus_uniform",
            SelectionMethod::Sequential => "sequential",
            SelectionMethod::Spatial => "spatial",
            SelectionMethod::FloorFallback => "floor_fallback",
        }
    }
}

/// Which side(s) of the fences count as outliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FenceSides {
    #[default]
    Upper,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub fences: Option<Fences>,
    pub method: SelectionMethod,
}

impl SelectionResult {
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Checks ascending/distinct/in-range and `1 <= m <= n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.indices.is_empty() || self.indices.len() > n {
            return Err(Error::invalid(format!(
                "selection size {} outside [1, {n}]",
                self.indices.len()
            )));
        }
        check_indices(&self.indices, n)
    }
}

pub(crate) fn check_indices(indices: &[usize], n: usize) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("indices must be strictly ascending"));
    }
    Ok(())
}

/// First and third quartiles, linearly interpolated between closest ranks at
/// positions `0.25 * (n - 1)` and `0.75 * (n - 1)` of the sorted sample.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quartiles"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quartiles of non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((interpolate(&sorted, 0.25), interpolate(&sorted, 0.75)))
}

fn interpolate(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn iqr_fences(values: &[f64]) -> Result<Fences> {
    let (q1, q3) = quartiles(values)?;
    let iqr = q3 - q1;
    Ok(Fences {
        q1,
        q3,
        iqr,
        lower: q1 - FENCE_FACTOR * iqr,
        upper: q3 + FENCE_FACTOR * iqr,
    })
}

/// Indices of the `count` largest scores, ties to the lower index, returned ascending.
pub fn top_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Selects tokens whose attention lies strictly above the upper fence (or
/// strictly outside either fence with [`FenceSides::Both`]).
///
/// When fewer than `floor` tokens qualify, the `floor` highest-attention
/// tokens are taken instead and the result is marked
/// [`SelectionMethod::FloorFallback`]. `scores` need not be normalized.
pub fn select_outliers(scores: &[f64], floor: usize, sides: FenceSides) -> Result<SelectionResult> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::EmptyInput("attention"));
    }
    if floor == 0 || floor > n {
        return Err(Error::invalid(format!("floor {floor} outside [1, {n}]")));
    }
    let fences = iqr_fences(scores)?;
    let indices: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a > fences.upper || (sides == FenceSides::Both && a < fences.lower))
        .map(|(i, _)| i)
        .collect();
    if indices.len() < floor {
        return Ok(SelectionResult {
            indices: top_indices(scores, floor),
            fences: Some(fences),
            method: SelectionMethod::FloorFallback,
        });
    }
    Ok(SelectionResult {
        indices,
        fences: Some(fences),
        method: SelectionMethod::Iqr,
    })
}

/// Token indices of an `rows x cols` lattice of cell centres over an `h x w` grid.
///
/// Point `(i, j)` maps to row `floor((i + 0.5) * h / rows)` and column
/// `floor((j + 0.5) * w / cols)`. Points are distinct while `rows <= h` and
/// `cols <= w`.
pub fn centered_lattice(grid: (usize, usize), rows: usize, cols: usize) -> Vec<usize> {
    let (h, w) = grid;
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let r = ((2 * i + 1) * h) / (2 * rows);
        for j in 0..cols {
            let c = ((2 * j + 1) * w) / (2 * cols);
            out.push(r * w + c);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Lattice shape used to spread `target` points over an `h x w` grid.
pub fn supplement_lattice_shape(grid: (usize, usize), target: usize) -> (usize, usize) {
    let (h, w) = grid;
    let rows = ((target as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let cols = target.div_ceil(rows).clamp(1, w);
    (rows, cols)
}

/// Unions `base` with `round(ratio * n)` spatially uniform points.
///
/// An empty `base` is accepted here.
pub fn uniform_spatial_supplement(
    base: &SelectionResult,
    grid: (usize, usize),
    ratio: f64,
) -> Result<SelectionResult> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "supplement ratio {ratio} outside (0, 1]"
        )));
    }
    let (h, w) = grid;
    if h == 0 || w == 0 {
        return Err(Error::invalid("empty grid"));
    }
    let n = h * w;
    check_indices(&base.indices, n)?;
    let target = (ratio * n as f64).round() as usize;
    let (rows, cols) = supplement_lattice_shape(grid, target);
    let mut indices = base.indices.clone();
    indices.extend(centered_lattice(grid, rows, cols));
    indices.sort_unstable();
    indices.dedup();
    Ok(SelectionResult {
        indices,
        fences: base.fences,
        method: SelectionMethod::IqrPlusUniform,
    })
}

/// The first `budget` tokens in raster order.
pub fn sequential_baseline(n: usize, budget: usize) -> Result<SelectionResult> {
    if budget > n {
        return Err(Error::BudgetExceedsTokenCount { budget, n });
    }
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    Ok(SelectionResult {
        indices: (0..budget).collect(),
        fences: None,
        method: SelectionMethod::Sequential,
    })
}

/// An evenly spread `rows x cols` lattice over the grid.
pub fn spatial_grid_baseline(
    grid: (usize, usize),
    rows: usize,
    cols: usize,
) -> Result<SelectionResult> {
    let (h, w) = grid;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("lattice rows and cols must be at least 1"));
    }
    if rows > h || cols > w {
        return Err(Error::invalid(format!(
            "lattice {rows}x{cols} does not fit grid {h}x{w}"
        )));
    }
    Ok(SelectionResult {
        indices: centered_lattice(grid, rows, cols),
        fences: None,
        method: SelectionMethod::Spatial,
    })
}
