//! Token supplement: each kept token absorbs its most key-similar neighbours
//! through a class-attention weighted average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::check_indices;
use crate::tokens::{key_similarity, SimilarityMatrix, TokenSet};

/// How pruned tokens are grouped around the kept centres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Independent k-nearest-neighbour search per centre. Clusters may overlap.
    #[default]
    Knn,
    /// Every token joins the single centre it is most similar to.
    Partition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeOptions {
    /// Members per cluster, centre included. Ignored by [`ClusterMode::Partition`].
    pub k: usize,
    /// Renormalize attention within each cluster. When off, raw attention
    /// values weight the sum and the result shrinks toward zero.
    pub normalize_weights: bool,
    pub mode: ClusterMode,
}

impl MergeOptions {
    pub fn knn(k: usize) -> Self {
        Self {
            k,
            normalize_weights: true,
            mode: ClusterMode::Knn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: usize,
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    /// `m x d`, row-major, one row per centre in ascending centre order.
    pub tokens: Vec<f64>,
    pub d: usize,
    pub clusters: Vec<Cluster>,
}

impl MergeResult {
    pub fn m(&self) -> usize {
        self.clusters.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.tokens[i * self.d..(i + 1) * self.d]
    }
}

/// The `k` most similar tokens to `center`, most similar first, ties to the lower index.
pub fn knn_members(center: usize, similarity: &SimilarityMatrix, k: usize) -> Result<Vec<usize>> {
    let n = similarity.n();
    if center >= n {
        return Err(Error::IndexOutOfRange { index: center, n });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let row = similarity.row(center);
    let mut order: Vec<usize> = (0..n).collect();
    let by_rank = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
    if k < n {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_by(by_rank);
    Ok(order)
}

/// Cluster weights from attention. All-zero attention falls back to uniform
/// weights when normalizing.
pub fn cluster_weights(members: &[usize], attention: &[f64], normalize: bool) -> Vec<f64> {
    let raw: Vec<f64> = members.iter().map(|&j| attention[j]).collect();
    if !normalize {
        return raw;
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|a| a / total).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    }
}

/// Weighted average of the members' output embeddings.
pub fn merge_cluster(
    members: &[usize],
    attention: &[f64],
    tokens: &TokenSet,
    normalize: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if members.is_empty() {
        return Err(Error::EmptyInput("cluster members"));
    }
    let n = tokens.n();
    if attention.len() != n {
        return Err(Error::DimensionMismatch {
            field: "attention",
            expected: n,
            found: attention.len(),
        });
    }
    if let Some(&bad) = members.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate cluster member"));
    }
    let weights = cluster_weights(members, attention, normalize);
    let mut out = vec![0.0f64; tokens.d()];
    for (&j, &w) in members.iter().zip(&weights) {
        for (o, &y) in out.iter_mut().zip(tokens.y_row(j)) {
            *o += w * y as f64;
        }
    }
    Ok((out, weights))
}

fn partition_members(centers: &[usize], similarity: &SimilarityMatrix) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = centers.iter().map(|&c| vec![c]).collect();
    for j in 0..similarity.n() {
        if centers.binary_search(&j).is_ok() {
            continue;
        }
        let row = similarity.row(j);
        let mut best = 0;
        for (slot, &c) in centers.iter().enumerate().skip(1) {
            if row[c] > row[centers[best]] {
                best = slot;
            }
        }
        groups[best].push(j);
    }
    groups
}

/// Merges every selected centre with its neighbourhood.
///
/// `selected` must be strictly ascending. Output rows follow `selected`.
pub fn token_supplement(
    selected: &[usize],
    tokens: &TokenSet,
    attention: &[f64],
    options: MergeOptions,
) -> Result<MergeResult> {
    let n = tokens.n();
    if selected.is_empty() {
        return Err(Error::EmptyInput("selection"));
    }
    check_indices(selected, n)?;
    if options.mode == ClusterMode::Knn && (options.k == 0 || options.k > n) {
        return Err(Error::invalid(format!(
            "k = {} outside [1, {n}]",
            options.k
        )));
    }
    if attention.len() != n {
        return Err(Error::DimensionMismatch {
            field: "attention",
            expected: n,
            found: attention.len(),
        });
    }

    let member_lists: Vec<Vec<usize>> = if options.mode == ClusterMode::Knn && options.k == 1 {
        selected.iter().map(|&c| vec![c]).collect()
    } else {
        let similarity = key_similarity(tokens);
        match options.mode {
            ClusterMode::Knn => selected
                .par_iter()
                .map(|&c| knn_members(c, &similarity, options.k))
                .collect::<Result<_>>()?,
            ClusterMode::Partition => partition_members(selected, &similarity),
        }
    };

    let merged: Vec<(Vec<f64>, Cluster)> = selected
        .par_iter()
        .zip(member_lists)
        .map(|(&center, members)| {
            let (row, weights) =
                merge_cluster(&members, attention, tokens, options.normalize_weights)?;
            Ok((
                row,
                Cluster {
                    center,
                    members,
                    weights,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(selected.len() * tokens.d());
    let mut clusters = Vec::with_capacity(selected.len());
    for (row, cluster) in merged {
        out.extend(row);
        clusters.push(cluster);
    }
    Ok(MergeResult {
        tokens: out,
        d: tokens.d(),
        clusters,
    })
}
