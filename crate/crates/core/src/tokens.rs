//! Token tensors from the encoder's penultimate layer, and the two attention
//! kernels computed over them: class-token attention and key similarity.
//!
//! Tensors are stored at single precision. Every reduction (softmax sums, dot
//! products) accumulates in `f64`.

use std::ops::Deref;

use crate::error::{Error, Result};

/// One image's worth of penultimate-layer tensors.
///
/// Layouts are row-major: `q_cls` is `[n_heads][d_k]`, `keys` is
/// `[n_heads][n][d_k]` and `y` is `[n][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    n: usize,
    d: usize,
    d_k: usize,
    n_heads: usize,
    grid: (usize, usize),
    q_cls: Vec<f32>,
    keys: Vec<f32>,
    y: Vec<f32>,
}

impl TokenSet {
    pub fn new(
        grid: (usize, usize),
        d: usize,
        d_k: usize,
        n_heads: usize,
        q_cls: Vec<f32>,
        keys: Vec<f32>,
        y: Vec<f32>,
    ) -> Result<Self> {
        let (h, w) = grid;
        let n = h
            .checked_mul(w)
            .ok_or_else(|| Error::InvalidTokenSet("grid size overflows".into()))?;
        for (name, v) in [
            ("n", n),
            ("d", d),
            ("d_k", d_k),
            ("n_heads", n_heads),
            ("h", h),
            ("w", w),
        ] {
            if v == 0 {
                return Err(Error::InvalidTokenSet(format!(
                    "`{name}` must be at least 1"
                )));
            }
        }
        check_len("q_cls", n_heads * d_k, q_cls.len())?;
        check_len("keys", n_heads * n * d_k, keys.len())?;
        check_len("y", n * d, y.len())?;
        for (name, data) in [("q_cls", &q_cls), ("keys", &keys), ("y", &y)] {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidTokenSet(format!(
                    "non-finite entry in `{name}` at flat index {i}"
                )));
            }
        }
        Ok(Self {
            n,
            d,
            d_k,
            n_heads,
            grid,
            q_cls,
            keys,
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_k(&self) -> usize {
        self.d_k
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    /// `(h, w)` with `h * w == n`.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn q_cls(&self) -> &[f32] {
        &self.q_cls
    }

    pub fn keys(&self) -> &[f32] {
        &self.keys
    }

    pub fn y(&self) -> &[f32] {
        &self.y
    }

    pub fn query(&self, head: usize) -> &[f32] {
        &self.q_cls[head * self.d_k..(head + 1) * self.d_k]
    }

    pub fn key(&self, head: usize, token: usize) -> &[f32] {
        let start = (head * self.n + token) * self.d_k;
        &self.keys[start..start + self.d_k]
    }

    pub fn y_row(&self, token: usize) -> &[f32] {
        &self.y[token * self.d..(token + 1) * self.d]
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            field,
            expected,
            found,
        });
    }
    Ok(())
}

/// Softmaxed class-to-spatial attention: nonnegative, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector(Vec<f64>);

impl AttentionVector {
    /// Wraps a distribution, rejecting negative/non-finite entries or a sum off by more than 1e-5.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("attention"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "attention entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::invalid(format!("attention sums to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AttentionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Dense `n x n` matrix of key dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    s: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(n: usize, s: Vec<f64>) -> Result<Self> {
        check_len("similarity", n * n, s.len())?;
        Ok(Self { n, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.s[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }
}

/// `softmax(logits / sqrt(scale_dim))` with max subtraction.
pub fn scaled_softmax(logits: &[f64], scale_dim: usize) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyLogits);
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogit(i));
    }
    if scale_dim == 0 {
        return Err(Error::invalid("scale_dim must be at least 1"));
    }
    let scale = (scale_dim as f64).sqrt();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| ((x - max) / scale).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Class-token attention over spatial tokens, averaged over heads after
/// the per-head softmax.
pub fn class_attention(tokens: &TokenSet) -> Result<AttentionVector> {
    let n = tokens.n();
    let mut mean = vec![0.0f64; n];
    let mut logits = vec![0.0f64; n];
    for head in 0..tokens.n_heads() {
        let q = tokens.query(head);
        for (i, l) in logits.iter_mut().enumerate() {
            *l = dot(q, tokens.key(head, i));
        }
        let probs = scaled_softmax(&logits, tokens.d_k())?;
        for (m, p) in mean.iter_mut().zip(probs) {
            *m += p;
        }
    }
    if tokens.n_heads() > 1 {
        let heads = tokens.n_heads() as f64;
        for m in &mut mean {
            *m /= heads;
        }
    }
    Ok(AttentionVector(mean))
}

/// Pairwise key dot products, with each token's keys concatenated across heads.
pub fn key_similarity(tokens: &TokenSet) -> SimilarityMatrix {
    let n = tokens.n();
    let width = tokens.n_heads() * tokens.d_k();
    let mut concat = Vec::with_capacity(n * width);
    for i in 0..n {
        for head in 0..tokens.n_heads() {
            concat.extend(tokens.key(head, i).iter().map(|&v| v as f64));
        }
    }
    let mut s = vec![0.0f64; n * n];
    for i in 0..n {
        let ki = &concat[i * width..(i + 1) * width];
        for j in i..n {
            let kj = &concat[j * width..(j + 1) * width];
            let v: f64 = ki.iter().zip(kj).map(|(a, b)| a * b).sum();
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    SimilarityMatrix { n, s }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_head(grid: (usize, usize), d_k: usize, q: Vec<f32>, keys: Vec<f32>) -> TokenSet {
        let n = grid.0 * grid.1;
        TokenSet::new(grid, 1, d_k, 1, q, keys, vec![0.0; n]).unwrap()
    }

    #[test]
    fn softmax_uniform_for_equal_logits() {
        let out = scaled_softmax(&[3.7; 4], 64).unwrap();
        for v in out {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_scaling_cancels() {
        let out = scaled_softmax(&[0.0, 3f64.ln() * 2.0], 4).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let logits = [1.0, 2.0, 3.0];
        let exps: Vec<f64> = logits.iter().map(|x: &f64| x.exp()).collect();
        let z: f64 = exps.iter().sum();
        let out = scaled_softmax(&logits, 1).unwrap();
        for (o, e) in out.iter().zip(&exps) {
            assert!((o - e / z).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_errors() {
        assert!(matches!(scaled_softmax(&[], 1), Err(Error::EmptyLogits)));
        assert!(matches!(
            scaled_softmax(&[0.0, f64::NAN], 1),
            Err(Error::NonFiniteLogit(1))
        ));
        assert_eq!(
            scaled_softmax(&[], 1).unwrap_err().to_string(),
            "empty logits"
        );
    }

    #[test]
    fn softmax_survives_large_logits() {
        let out = scaled_softmax(&[1000.0, 1000.0], 1).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        let keys = [0.3f32, -1.2].repeat(6);
        let t = single_head((2, 3), 2, vec![0.7, 0.1], keys);
        let a = class_attention(&t).unwrap();
        for v in a.iter() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_concentrates_on_aligned_key() {
        let keys = vec![10.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0];
        let t = single_head((2, 2), 2, vec![1.0, 0.0], keys);
        let a = class_attention(&t).unwrap();
        let s = 2f64.sqrt();
        let e = [(10.0 / s).exp(), 1.0, 1.0, 1.0];
        let z: f64 = e.iter().sum();
        for (got, want) in a.iter().zip(e.iter().map(|x| x / z)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(a[0] > 0.99);
    }

    #[test]
    fn heads_are_averaged_after_softmax() {
        // head 0 favours token 0, head 1 favours token 1
        let q = vec![1.0, 0.0, 0.0, 1.0];
        let keys = vec![
            100.0, 0.0, 0.0, 0.0, // head 0
            0.0, 0.0, 0.0, 100.0, // head 1
        ];
        let t = TokenSet::new((1, 2), 1, 2, 2, q, keys, vec![0.0; 2]).unwrap();
        let a = class_attention(&t).unwrap();
        let p = 1.0 / (1.0 + (-100.0 / 2f64.sqrt()).exp());
        let want = [(p + (1.0 - p)) / 2.0, ((1.0 - p) + p) / 2.0];
        assert!((a[0] - want[0]).abs() < 1e-12 && (a[1] - want[1]).abs() < 1e-12);
        assert!((a[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn similarity_of_orthonormal_keys_is_identity() {
        let keys = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let t = single_head((1, 3), 3, vec![0.0; 3], keys);
        let s = key_similarity(&t);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn similarity_of_equal_keys_is_constant() {
        let t = single_head((2, 2), 2, vec![0.0; 2], [3.0f32, 4.0].repeat(4));
        let s = key_similarity(&t);
        assert!(s.as_slice().iter().all(|&v| v == 25.0));
    }

    #[test]
    fn multi_head_similarity_sums_head_products() {
        let keys = vec![1.0, 2.0, 3.0, 4.0, /* head 1 */ 5.0, 6.0, 7.0, 8.0];
        let t = TokenSet::new((1, 2), 1, 2, 2, vec![0.0; 4], keys, vec![0.0; 2]).unwrap();
        let s = key_similarity(&t);
        assert_eq!(
            s.get(0, 1),
            (1.0 * 3.0 + 2.0 * 4.0) + (5.0 * 7.0 + 6.0 * 8.0)
        );
    }

    #[test]
    fn token_set_validation() {
        let err = TokenSet::new((2, 2), 1, 2, 1, vec![0.0; 3], vec![0.0; 8], vec![0.0; 4]);
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch { field: "q_cls", .. })
        ));
        let err = TokenSet::new((2, 2), 1, 1, 1, vec![0.0], vec![0.0; 4], vec![f32::NAN; 4]);
        assert!(matches!(err, Err(Error::InvalidTokenSet(_))));
        let err = TokenSet::new((0, 2), 1, 1, 1, vec![0.0], vec![], vec![]);
        assert!(err.is_err());
    }

    #[test]
    fn attention_vector_rejects_non_distributions() {
        assert!(AttentionVector::new(vec![0.5, 0.4]).is_err());
        assert!(AttentionVector::new(vec![1.5, -0.5]).is_err());
        assert!(AttentionVector::new(vec![]).is_err());
        assert!(AttentionVector::new(vec![0.5, 0.5]).is_ok());
    }
}
