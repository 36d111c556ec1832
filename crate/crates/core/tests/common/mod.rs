//! Brute-force reference implementations shared by the integration suites.
//! They work straight from the raw arrays and avoid the library's code paths.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenreduce::TokenSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Insertion sort, then interpolate at `q * (n - 1)`.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let mut at = s.len();
        while at > 0 && s[at - 1] > v {
            at -= 1;
        }
        s.insert(at, v);
    }
    let pos = q * (s.len() - 1) as f64;
    let lo = pos as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        s[lo]
    } else {
        s[lo] + frac * (s[lo + 1] - s[lo])
    }
}

/// `(q1, q3, lower, upper)`.
pub fn fences_oracle(values: &[f64]) -> (f64, f64, f64, f64) {
    let q1 = quantile_oracle(values, 0.25);
    let q3 = quantile_oracle(values, 0.75);
    let iqr = q3 - q1;
    (q1, q3, q1 - 1.5 * iqr, q3 + 1.5 * iqr)
}

/// Upper-fence outliers, or the `floor` largest values (ties to lower index).
pub fn selection_oracle(values: &[f64], floor: usize) -> Vec<usize> {
    let (_, _, _, upper) = fences_oracle(values);
    let mut picked = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if v > upper {
            picked.push(i);
        }
    }
    if picked.len() >= floor {
        return picked;
    }
    let mut taken = vec![false; values.len()];
    for _ in 0..floor {
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if values[b] >= values[i] => {}
                _ => best = Some(i),
            }
        }
        taken[best.unwrap()] = true;
    }
    (0..values.len()).filter(|&i| taken[i]).collect()
}

/// Class attention straight from the definition, one head at a time.
pub fn attention_oracle(t: &TokenSet) -> Vec<f64> {
    let (n, dk, heads) = (t.n(), t.d_k(), t.n_heads());
    let mut mean = vec![0.0; n];
    for h in 0..heads {
        let mut logits = vec![0.0; n];
        for (i, l) in logits.iter_mut().enumerate() {
            for c in 0..dk {
                *l += t.q_cls()[h * dk + c] as f64 * t.keys()[(h * n + i) * dk + c] as f64;
            }
            *l /= (dk as f64).sqrt();
        }
        let exps: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
        let z: f64 = exps.iter().sum();
        for (m, e) in mean.iter_mut().zip(&exps) {
            *m += e / z / heads as f64;
        }
    }
    mean
}

pub fn similarity_oracle(t: &TokenSet, i: usize, j: usize) -> f64 {
    let (n, dk) = (t.n(), t.d_k());
    let mut s = 0.0;
    for h in 0..t.n_heads() {
        for c in 0..dk {
            s += t.keys()[(h * n + i) * dk + c] as f64 * t.keys()[(h * n + j) * dk + c] as f64;
        }
    }
    s
}

/// Quadratic-loop token supplement with normalized weights.
pub fn merge_oracle(t: &TokenSet, attention: &[f64], centers: &[usize], k: usize) -> Vec<Vec<f64>> {
    let (n, d) = (t.n(), t.d());
    let mut out = Vec::new();
    for &c in centers {
        let sims: Vec<f64> = (0..n).map(|j| similarity_oracle(t, c, j)).collect();
        let mut chosen: Vec<usize> = Vec::new();
        let mut used = vec![false; n];
        for _ in 0..k {
            let mut best: Option<usize> = None;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                match best {
                    Some(b) if sims[b] >= sims[j] => {}
                    _ => best = Some(j),
                }
            }
            let b = best.unwrap();
            used[b] = true;
            chosen.push(b);
        }
        let total: f64 = chosen.iter().map(|&j| attention[j]).sum();
        let mut row = vec![0.0; d];
        for &j in &chosen {
            let w = if total > 0.0 {
                attention[j] / total
            } else {
                1.0 / k as f64
            };
            for (x, r) in row.iter_mut().enumerate() {
                *r += w * t.y()[j * d + x] as f64;
            }
        }
        out.push(row);
    }
    out
}

/// Random token set with entries in [-1, 1).
pub fn random_tokens(
    rng: &mut ChaCha8Rng,
    grid: (usize, usize),
    d: usize,
    d_k: usize,
    heads: usize,
) -> TokenSet {
    let n = grid.0 * grid.1;
    let mut draw =
        |len: usize| -> Vec<f32> { (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect() };
    let q = draw(heads * d_k);
    let k = draw(heads * n * d_k);
    let y = draw(n * d);
    TokenSet::new(grid, d, d_k, heads, q, k, y).unwrap()
}

/// Near-flat attention with the given positions boosted by `gain`.
pub fn spiked_attention(n: usize, spikes: &[usize], gain: f64) -> Vec<f64> {
    let mut a = vec![1.0; n];
    for &i in spikes {
        a[i] = gain;
    }
    let z: f64 = a.iter().sum();
    a.iter().map(|v| v / z).collect()
}
