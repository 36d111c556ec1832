//! End-to-end reduction: attention, selection, optional uniform supplement,
//! clustering and merging, plus corpus-level compression statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merging::{token_supplement, Cluster, ClusterMode, MergeOptions};
use crate::selection::{
    select_outliers, sequential_baseline, spatial_grid_baseline, uniform_spatial_supplement,
    FenceSides, SelectionMethod, SelectionResult,
};
use crate::tokens::{class_attention, TokenSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Prumerge,
    PrumergePlus,
    Sequential,
    Spatial,
}

/// Cluster size: fixed, or `ceil(n / m)` recomputed per image after selection.
/// Baseline modes treat `Auto` as 1 (pure sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterSize {
    #[default]
    Auto,
    Fixed(usize),
}

/// Uniform supplement ratio. `Auto` uses the outlier ratio `m / n`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SupplementRatio {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub k: ClusterSize,
    pub floor: usize,
    pub supplement_ratio: SupplementRatio,
    pub budget: Option<usize>,
    pub grid_rows: Option<usize>,
    pub grid_cols: Option<usize>,
    pub normalize_weights: bool,
    pub fence_sides: FenceSides,
    pub cluster_mode: ClusterMode,
}

impl PipelineConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            k: ClusterSize::Auto,
            floor: 1,
            supplement_ratio: SupplementRatio::Auto,
            budget: None,
            grid_rows: None,
            grid_cols: None,
            normalize_weights: true,
            fence_sides: FenceSides::Upper,
            cluster_mode: ClusterMode::Knn,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = ClusterSize::Fixed(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.floor == 0 {
            return Err(Error::invalid("floor must be at least 1"));
        }
        if self.k == ClusterSize::Fixed(0) {
            return Err(Error::invalid("k must be at least 1"));
        }
        if let SupplementRatio::Fixed(r) = self.supplement_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid(format!(
                    "supplement ratio {r} outside (0, 1]"
                )));
            }
        }
        match self.mode {
            Mode::Sequential if self.budget.is_none() => {
                Err(Error::invalid("sequential mode needs a budget"))
            }
            Mode::Spatial if self.grid_rows.is_none() || self.grid_cols.is_none() => {
                Err(Error::invalid("spatial mode needs grid rows and cols"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub n: usize,
    pub m: usize,
    pub kept_fraction: f64,
    pub method: SelectionMethod,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTokenSet {
    /// `m x d`, row-major.
    pub tokens: Vec<f64>,
    pub d: usize,
    pub source_indices: Vec<usize>,
    pub selection: SelectionResult,
    pub clusters: Vec<Cluster>,
    pub stats: ImageStats,
}

impl ReducedTokenSet {
    pub fn m(&self) -> usize {
        self.source_indices.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.tokens[i * self.d..(i + 1) * self.d]
    }

    /// Packs the reduced tokens as a `1 x m` token set: the original class
    /// query, the keys of the kept tokens and the merged rows as `Y`.
    pub fn to_token_set(&self, original: &TokenSet) -> Result<TokenSet> {
        let m = self.m();
        let mut keys = Vec::with_capacity(original.n_heads() * m * original.d_k());
        for head in 0..original.n_heads() {
            for &i in &self.source_indices {
                keys.extend_from_slice(original.key(head, i));
            }
        }
        TokenSet::new(
            (1, m),
            self.d,
            original.d_k(),
            original.n_heads(),
            original.q_cls().to_vec(),
            keys,
            self.tokens.iter().map(|&v| v as f32).collect(),
        )
    }
}

/// Runs whichever mode `config` names.
pub fn reduce(tokens: &TokenSet, config: &PipelineConfig) -> Result<ReducedTokenSet> {
    config.validate()?;
    let n = tokens.n();
    if config.floor > n {
        return Err(Error::invalid(format!(
            "floor {} exceeds {n} tokens",
            config.floor
        )));
    }
    let attention = class_attention(tokens)?;
    let selection = match config.mode {
        Mode::Prumerge => select_outliers(&attention, config.floor, config.fence_sides)?,
        Mode::PrumergePlus => {
            let base = select_outliers(&attention, config.floor, config.fence_sides)?;
            let ratio = match config.supplement_ratio {
                SupplementRatio::Fixed(r) => r,
                SupplementRatio::Auto => base.m() as f64 / n as f64,
            };
            uniform_spatial_supplement(&base, tokens.grid(), ratio)?
        }
        Mode::Sequential => sequential_baseline(n, config.budget.unwrap_or(0))?,
        Mode::Spatial => spatial_grid_baseline(
            tokens.grid(),
            config.grid_rows.unwrap_or(0),
            config.grid_cols.unwrap_or(0),
        )?,
    };
    selection.validate(n)?;

    let m = selection.m();
    let k = match (config.k, config.mode) {
        (ClusterSize::Fixed(k), _) => k,
        (ClusterSize::Auto, Mode::Prumerge | Mode::PrumergePlus) => n.div_ceil(m),
        (ClusterSize::Auto, Mode::Sequential | Mode::Spatial) => 1,
    };
    let options = MergeOptions {
        k,
        normalize_weights: config.normalize_weights,
        mode: config.cluster_mode,
    };
    let merged = token_supplement(&selection.indices, tokens, &attention, options)?;

    Ok(ReducedTokenSet {
        tokens: merged.tokens,
        d: merged.d,
        source_indices: selection.indices.clone(),
        stats: ImageStats {
            n,
            m,
            kept_fraction: m as f64 / n as f64,
            method: selection.method,
            k,
        },
        selection,
        clusters: merged.clusters,
    })
}

/// Select, then cluster and merge.
pub fn run_prumerge(tokens: &TokenSet, config: &PipelineConfig) -> Result<ReducedTokenSet> {
    if config.mode != Mode::Prumerge {
        return Err(Error::invalid("run_prumerge requires mode prumerge"));
    }
    reduce(tokens, config)
}

/// Select, add a spatially uniform sample, then cluster and merge.
pub fn run_prumerge_plus(tokens: &TokenSet, config: &PipelineConfig) -> Result<ReducedTokenSet> {
    if config.mode != Mode::PrumergePlus {
        return Err(Error::invalid(
            "run_prumerge_plus requires mode prumerge_plus",
        ));
    }
    reduce(tokens, config)
}

/// Reduces many images in parallel. Results keep input order.
pub fn reduce_corpus(corpus: &[TokenSet], config: &PipelineConfig) -> Result<Vec<ReducedTokenSet>> {
    corpus.par_iter().map(|t| reduce(t, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub images: usize,
    pub mean_n: f64,
    pub mean_m: f64,
    pub min_m: usize,
    pub max_m: usize,
    pub mean_kept_fraction: f64,
    pub min_kept_fraction: f64,
    pub max_kept_fraction: f64,
    /// Total original tokens over total kept tokens.
    pub mean_compression_ratio: f64,
}

pub fn corpus_stats<'a, I>(stats: I) -> Result<CorpusSummary>
where
    I: IntoIterator<Item = &'a ImageStats>,
{
    let stats: Vec<&ImageStats> = stats.into_iter().collect();
    if stats.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    if stats.iter().any(|s| s.m == 0 || s.n == 0) {
        return Err(Error::invalid("image with zero tokens"));
    }
    let count = stats.len() as f64;
    let total_n: usize = stats.iter().map(|s| s.n).sum();
    let total_m: usize = stats.iter().map(|s| s.m).sum();
    let fractions = stats.iter().map(|s| s.m as f64 / s.n as f64);
    Ok(CorpusSummary {
        images: stats.len(),
        mean_n: total_n as f64 / count,
        mean_m: total_m as f64 / count,
        min_m: stats.iter().map(|s| s.m).min().unwrap_or(0),
        max_m: stats.iter().map(|s| s.m).max().unwrap_or(0),
        mean_kept_fraction: fractions.clone().sum::<f64>() / count,
        min_kept_fraction: fractions.clone().fold(f64::INFINITY, f64::min),
        max_kept_fraction: fractions.fold(f64::NEG_INFINITY, f64::max),
        mean_compression_ratio: total_n as f64 / total_m as f64,
    })
}
