//! Roofline estimate of LLM prefill cost for a given prompt length.
//!
//! FLOPs count one multiply-accumulate as two operations. Softmax and
//! normalization arithmetic is ignored. Per decoder layer:
//!
//! * attention projections (Q, K, V, output): `8 n d^2`
//! * attention scores and score-value product: `4 n^2 d`
//! * feed-forward: `4 n d d_ff` (two matrices) or `6 n d d_ff` (gated, three matrices)
//!
//! plus `2 n d vocab` for the output head.
//!
//! Memory is weights + KV cache + activation traffic. Activations are counted
//! per operator output over every layer, at 2 bytes per element, and each one
//! is charged twice: written by its producer, read back by its consumer. The
//! same byte count is the memory side of the roofline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per activation element (FP16) in every mode.
pub const ACTIVATION_BYTES: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    TwoMatrix,
    GatedThreeMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub n_layers: u64,
    pub d_model: u64,
    pub d_ff: u64,
    pub n_heads: u64,
    pub n_vocab: u64,
    pub n_params: f64,
    pub ffn_kind: FfnKind,
    pub bytes_per_param: f64,
}

impl ModelProfile {
    /// Vicuna-7B (LLaMA architecture), FP16 weights.
    pub fn vicuna_7b() -> Self {
        Self {
            name: "7b".into(),
            n_layers: 32,
            d_model: 4096,
            d_ff: 11008,
            n_heads: 32,
            n_vocab: 32000,
            n_params: 6.74e9,
            ffn_kind: FfnKind::GatedThreeMatrix,
            bytes_per_param: 2.0,
        }
    }

    /// Vicuna-13B (LLaMA architecture), FP16 weights.
    pub fn vicuna_13b() -> Self {
        Self {
            name: "13b".into(),
            n_layers: 40,
            d_model: 5120,
            d_ff: 13824,
            n_heads: 40,
            n_vocab: 32000,
            n_params: 13.02e9,
            ffn_kind: FfnKind::GatedThreeMatrix,
            bytes_per_param: 2.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "7b" => Some(Self::vicuna_7b()),
            "13b" => Some(Self::vicuna_13b()),
            _ => None,
        }
    }

    /// Same model with 4-bit weights. Activations stay FP16.
    pub fn int4(mut self) -> Self {
        self.bytes_per_param = 0.5;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_layers,
            self.d_model,
            self.d_ff,
            self.n_heads,
            self.n_vocab,
        ];
        if dims.contains(&0) || self.n_params.is_nan() || self.n_params <= 0.0 {
            return Err(Error::invalid(format!(
                "model `{}`: all sizes must be positive",
                self.name
            )));
        }
        if ![0.5, 1.0, 2.0, 4.0].contains(&self.bytes_per_param) {
            return Err(Error::invalid(format!(
                "model `{}`: bytes_per_param {} not in {{0.5, 1, 2, 4}}",
                self.name, self.bytes_per_param
            )));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let profile: Self = load_toml(path)?;
        profile.validate()?;
        Ok(profile)
    }

    fn ffn_matrices(&self) -> f64 {
        match self.ffn_kind {
            FfnKind::TwoMatrix => 2.0,
            FfnKind::GatedThreeMatrix => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    /// op/s
    pub peak_flops: f64,
    /// byte/s
    pub mem_bandwidth: f64,
}

impl HardwareProfile {
    /// Tesla V100: FP16 tensor-core peak and HBM2 bandwidth.
    pub fn v100() -> Self {
        Self {
            name: "v100".into(),
            peak_flops: 112e12,
            mem_bandwidth: 900e9,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        (name == "v100").then(Self::v100)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_flops > 0.0 && self.mem_bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "hardware `{}`: rates must be positive",
                self.name
            )));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let profile: Self = load_toml(path)?;
        profile.validate()?;
        Ok(profile)
    }
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Total prefill FLOPs for `n_tokens` prompt tokens.
pub fn prefill_flops(model: &ModelProfile, n_tokens: u64) -> f64 {
    let n = n_tokens as f64;
    let d = model.d_model as f64;
    let d_ff = model.d_ff as f64;
    let projections = 8.0 * n * d * d;
    let attention = 4.0 * n * n * d;
    let ffn = 2.0 * model.ffn_matrices() * n * d * d_ff;
    let head = 2.0 * n * d * model.n_vocab as f64;
    model.n_layers as f64 * (projections + attention + ffn) + head
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryFootprint {
    pub weight_bytes: f64,
    pub kv_bytes: f64,
    /// Operator outputs stored over all layers.
    pub activation_bytes: f64,
    pub total_bytes: f64,
}

/// Operator outputs of one decoder layer, in elements.
fn layer_activation_elements(model: &ModelProfile, n_tokens: u64) -> f64 {
    let n = n_tokens as f64;
    let d = model.d_model as f64;
    // q, k, v, o projections, score-value product, two norms, two residual adds
    let hidden = 10.0 * n * d;
    // pre-softmax scores and softmax output, per head
    let scores = 2.0 * model.n_heads as f64 * n * n;
    // up (+ gate) projections and the activation
    let ffn = model.ffn_matrices() * n * model.d_ff as f64;
    hidden + scores + ffn
}

pub fn memory_footprint(model: &ModelProfile, n_tokens: u64) -> MemoryFootprint {
    let weight_bytes = model.n_params * model.bytes_per_param;
    let kv_bytes =
        2.0 * model.n_layers as f64 * n_tokens as f64 * model.d_model as f64 * ACTIVATION_BYTES;
    let activation_bytes =
        model.n_layers as f64 * layer_activation_elements(model, n_tokens) * ACTIVATION_BYTES;
    MemoryFootprint {
        weight_bytes,
        kv_bytes,
        activation_bytes,
        total_bytes: weight_bytes + kv_bytes + 2.0 * activation_bytes,
    }
}

/// `max(flops / peak, bytes / bandwidth)` in seconds.
pub fn roofline_time(flops: f64, moved_bytes: f64, hw: &HardwareProfile) -> Result<f64> {
    if !(flops >= 0.0 && moved_bytes >= 0.0) {
        return Err(Error::invalid("flops and bytes must be nonnegative"));
    }
    hw.validate()?;
    Ok((flops / hw.peak_flops).max(moved_bytes / hw.mem_bandwidth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_tokens: u64,
    pub flops_total: f64,
    pub prefill_time_s: f64,
    pub compute_time_s: f64,
    pub memory_time_s: f64,
    pub total_memory_bytes: f64,
    pub weight_bytes: f64,
    pub kv_bytes: f64,
    pub activation_bytes: f64,
}

pub fn cost_report(
    model: &ModelProfile,
    hw: &HardwareProfile,
    n_tokens: u64,
) -> Result<CostReport> {
    model.validate()?;
    let flops = prefill_flops(model, n_tokens);
    let mem = memory_footprint(model, n_tokens);
    let prefill_time_s = roofline_time(flops, mem.total_bytes, hw)?;
    Ok(CostReport {
        n_tokens,
        flops_total: flops,
        prefill_time_s,
        compute_time_s: flops / hw.peak_flops,
        memory_time_s: mem.total_bytes / hw.mem_bandwidth,
        total_memory_bytes: mem.total_bytes,
        weight_bytes: mem.weight_bytes,
        kv_bytes: mem.kv_bytes,
        activation_bytes: mem.activation_bytes,
    })
}

/// Reduced-over-full ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub flops_ratio: f64,
    pub memory_ratio: f64,
    pub time_ratio: f64,
    pub activation_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub model: String,
    pub hardware: String,
    pub bytes_per_param: f64,
    pub full: CostReport,
    pub reduced: CostReport,
    pub savings: Savings,
}

fn ratio(reduced: f64, full: f64) -> f64 {
    if full == 0.0 {
        1.0
    } else {
        reduced / full
    }
}

pub fn cost_comparison(
    model: &ModelProfile,
    hw: &HardwareProfile,
    n_full: u64,
    n_reduced: u64,
) -> Result<CostComparison> {
    if n_reduced > n_full {
        return Err(Error::invalid(format!(
            "reduced token count {n_reduced} exceeds full count {n_full}"
        )));
    }
    let full = cost_report(model, hw, n_full)?;
    let reduced = cost_report(model, hw, n_reduced)?;
    let savings = Savings {
        flops_ratio: ratio(reduced.flops_total, full.flops_total),
        memory_ratio: ratio(reduced.total_memory_bytes, full.total_memory_bytes),
        time_ratio: ratio(reduced.prefill_time_s, full.prefill_time_s),
        activation_ratio: ratio(reduced.activation_bytes, full.activation_bytes),
    };
    Ok(CostComparison {
        model: model.name.clone(),
        hardware: hw.name.clone(),
        bytes_per_param: model.bytes_per_param,
        full,
        reduced,
        savings,
    })
}
