//! Deterministic synthetic token sets with planted attention spikes and key clusters.
//!
//! Randomness comes from `rand_chacha::ChaCha8Rng` (rand_chacha 0.3) seeded
//! with `seed_from_u64`, drawing `f64` uniforms through `rand` 0.8's
//! `Standard` distribution. Output is bit-stable for a given seed.
//!
//! Construction, for every head:
//!
//! * the class query is the unit vector along key dimension 0;
//! * background keys are zero in dimension 0, so every background logit is
//!   exactly 0 and background attention is exactly flat;
//! * spike keys carry `spike_gain * sqrt(d_k)` in dimension 0, which gives a
//!   scaled logit of `spike_gain`;
//! * dimensions `1..d_k` hold the token's cluster centroid plus small noise.
//!
//! Tokens are split into `cluster_count` equal runs in raster order (horizontal
//! bands when the count divides the height). Output rows `Y` are the
//! cluster's mean vector plus small noise. Spikes sit at raster
//! positions `floor((i + 0.5) * n / n_spikes)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokens::TokenSet;

const KEY_NOISE: f64 = 0.05;
const Y_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub grid: (usize, usize),
    pub d: usize,
    pub d_k: usize,
    pub n_heads: usize,
    pub n_spikes: usize,
    pub spike_gain: f64,
    pub cluster_count: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(grid: (usize, usize), d: usize, d_k: usize, n_spikes: usize, seed: u64) -> Self {
        Self {
            grid,
            d,
            d_k,
            n_heads: 1,
            n_spikes,
            spike_gain: 6.0,
            cluster_count: 4.min(grid.0 * grid.1).max(1),
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.grid;
        if [h, w, self.d, self.d_k, self.n_heads].contains(&0) {
            return Err(Error::invalid("grid, d, d_k and heads must be at least 1"));
        }
        if self.n_spikes > self.n() {
            return Err(Error::invalid(format!(
                "{} spikes exceed {} tokens",
                self.n_spikes,
                self.n()
            )));
        }
        if self.cluster_count == 0 || self.cluster_count > self.n() {
            return Err(Error::invalid(format!(
                "cluster count {} outside [1, {}]",
                self.cluster_count,
                self.n()
            )));
        }
        if !self.spike_gain.is_finite() {
            return Err(Error::invalid("spike gain must be finite"));
        }
        Ok(())
    }
}

/// Raster positions of the planted spikes, ascending.
pub fn spike_positions(n: usize, n_spikes: usize) -> Vec<usize> {
    (0..n_spikes)
        .map(|i| ((2 * i + 1) * n) / (2 * n_spikes))
        .collect()
}

/// Cluster of every token: `cluster_count` equal runs in raster order.
pub fn cluster_assignment(n: usize, cluster_count: usize) -> Vec<usize> {
    (0..n).map(|i| i * cluster_count / n).collect()
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>() * 2.0 - 1.0
}

pub fn synth_generate(spec: &SynthSpec) -> Result<TokenSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n();
    let (d, d_k, heads) = (spec.d, spec.d_k, spec.n_heads);
    let bands = cluster_assignment(n, spec.cluster_count);
    let spikes = spike_positions(n, spec.n_spikes);

    let mut q_cls = vec![0.0f32; heads * d_k];
    for head in 0..heads {
        q_cls[head * d_k] = 1.0;
    }

    let spike_logit = (spec.spike_gain * (d_k as f64).sqrt()) as f32;
    let mut keys = vec![0.0f32; heads * n * d_k];
    for head in 0..heads {
        let centroids: Vec<Vec<f64>> = (0..spec.cluster_count)
            .map(|_| (1..d_k).map(|_| uniform(&mut rng)).collect())
            .collect();
        for (i, &band) in bands.iter().enumerate() {
            let key = &mut keys[(head * n + i) * d_k..(head * n + i + 1) * d_k];
            for (slot, c) in key[1..].iter_mut().zip(&centroids[band]) {
                *slot = (c + KEY_NOISE * uniform(&mut rng)) as f32;
            }
        }
        for &i in &spikes {
            keys[(head * n + i) * d_k] = spike_logit;
        }
    }

    let means: Vec<Vec<f64>> = (0..spec.cluster_count)
        .map(|_| (0..d).map(|_| uniform(&mut rng)).collect())
        .collect();
    let mut y = Vec::with_capacity(n * d);
    for &band in &bands {
        y.extend(
            means[band]
                .iter()
                .map(|m| (m + Y_NOISE * uniform(&mut rng)) as f32),
        );
    }

    TokenSet::new(spec.grid, d, d_k, heads, q_cls, keys, y)
}

/// Spike counts of the bundled evaluation corpus. Their mean is 32 on a 24x24 grid.
pub const REFERENCE_SPIKE_COUNTS: [usize; 7] = [16, 24, 28, 32, 36, 40, 48];

/// Bundled corpus: one 24x24 image per entry of [`REFERENCE_SPIKE_COUNTS`].
pub fn reference_corpus() -> Vec<SynthSpec> {
    REFERENCE_SPIKE_COUNTS
        .iter()
        .enumerate()
        .map(|(i, &spikes)| SynthSpec::new((24, 24), 32, 16, spikes, 1000 + i as u64))
        .collect()
}
