//! Command-line front end: `reduce`, `synth`, `cost` and `stats`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_comparison, HardwareProfile, ModelProfile};
use crate::error::{Error, Result};
use crate::format::{read_token_dump_file, write_token_dump_file};
use crate::merging::ClusterMode;
use crate::pipeline::{
    corpus_stats, reduce, ClusterSize, ImageStats, Mode, PipelineConfig, SupplementRatio,
};
use crate::render::{render_mask, MaskFormat};
use crate::selection::{FenceSides, Fences, SelectionMethod};
use crate::synth::{synth_generate, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tokenreduce",
    version,
    about = "Adaptive visual-token pruning and merging"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce one token dump.
    Reduce(ReduceArgs),
    /// Write a synthetic token dump.
    Synth(SynthArgs),
    /// Compare prefill cost at two prompt lengths.
    Cost(CostArgs),
    /// Summarize per-image stats files written by `reduce --stats`.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    Prumerge,
    #[value(name = "prumerge+")]
    PrumergePlus,
    Sequential,
    Spatial,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Prumerge => Mode::Prumerge,
            CliMode::PrumergePlus => Mode::PrumergePlus,
            CliMode::Sequential => Mode::Sequential,
            CliMode::Spatial => Mode::Spatial,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliFences {
    Upper,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliClusters {
    Knn,
    Partition,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: CliMode,
    /// Cluster size, or `auto` for ceil(n / m).
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    k: ClusterSize,
    #[arg(long, default_value_t = 1)]
    floor: usize,
    /// Uniform supplement ratio for prumerge+, or `auto` for m / n.
    #[arg(long, default_value = "auto", value_parser = parse_ratio)]
    ratio: SupplementRatio,
    /// Token budget for the sequential baseline.
    #[arg(long)]
    budget: Option<usize>,
    /// Lattice for the spatial baseline, as ROWSxCOLS.
    #[arg(long, value_parser = parse_dims)]
    grid: Option<(usize, usize)>,
    /// Weight merges by raw attention instead of per-cluster normalized attention.
    #[arg(long)]
    raw_weights: bool,
    #[arg(long, value_enum, default_value = "upper")]
    fences: CliFences,
    #[arg(long, value_enum, default_value = "knn")]
    clusters: CliClusters,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Selection mask; `.pgm` writes binary PGM, anything else text.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Grid as HxW.
    #[arg(long, value_parser = parse_dims)]
    grid: (usize, usize),
    #[arg(long)]
    d: usize,
    #[arg(long)]
    dk: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long)]
    spikes: usize,
    #[arg(long, default_value_t = 6.0)]
    gain: f64,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// `7b`, `13b`, or a TOML model profile.
    #[arg(long)]
    model: String,
    /// `v100`, or a TOML hardware profile.
    #[arg(long, default_value = "v100")]
    hw: String,
    #[arg(long)]
    tokens_full: u64,
    #[arg(long)]
    tokens_reduced: u64,
    /// 4-bit weights.
    #[arg(long)]
    int4: bool,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Glob over stats JSON files.
    #[arg(long)]
    inputs: String,
}

fn parse_k(s: &str) -> std::result::Result<ClusterSize, String> {
    if s == "auto" {
        return Ok(ClusterSize::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(ClusterSize::Fixed(k)),
        _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
    }
}

fn parse_ratio(s: &str) -> std::result::Result<SupplementRatio, String> {
    if s == "auto" {
        return Ok(SupplementRatio::Auto);
    }
    match s.parse::<f64>() {
        Ok(r) if r > 0.0 && r <= 1.0 => Ok(SupplementRatio::Fixed(r)),
        _ => Err(format!("expected a ratio in (0, 1] or `auto`, got `{s}`")),
    }
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected AxB, got `{s}`"))?;
    match (a.parse::<usize>(), b.parse::<usize>()) {
        (Ok(a), Ok(b)) if a >= 1 && b >= 1 => Ok((a, b)),
        _ => Err(format!("expected two positive integers as AxB, got `{s}`")),
    }
}

/// Per-image record written by `reduce --stats` and read back by `stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceReport {
    pub n: usize,
    pub m: usize,
    pub kept_fraction: f64,
    pub compression_ratio: f64,
    pub mode: Mode,
    pub method: SelectionMethod,
    pub k: usize,
    pub floor: usize,
    pub fences: Option<Fences>,
    pub source_indices: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
}

impl ReduceReport {
    pub fn image_stats(&self) -> ImageStats {
        ImageStats {
            n: self.n,
            m: self.m,
            kept_fraction: self.kept_fraction,
            method: self.method,
            k: self.k,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_reduce(args: ReduceArgs) -> Result<()> {
    let tokens = read_token_dump_file(&args.input)?;
    let (grid_rows, grid_cols) = args.grid.unzip();
    let mode: Mode = args.mode.into();
    let config = PipelineConfig {
        mode,
        k: args.k,
        floor: args.floor,
        supplement_ratio: args.ratio,
        budget: args.budget,
        grid_rows,
        grid_cols,
        normalize_weights: !args.raw_weights,
        fence_sides: match args.fences {
            CliFences::Upper => FenceSides::Upper,
            CliFences::Both => FenceSides::Both,
        },
        cluster_mode: match args.clusters {
            CliClusters::Knn => ClusterMode::Knn,
            CliClusters::Partition => ClusterMode::Partition,
        },
    };
    let reduced = reduce(&tokens, &config)?;
    write_token_dump_file(&reduced.to_token_set(&tokens)?, &args.out)?;
    if let Some(path) = &args.stats {
        let report = ReduceReport {
            n: reduced.stats.n,
            m: reduced.stats.m,
            kept_fraction: reduced.stats.kept_fraction,
            compression_ratio: reduced.stats.n as f64 / reduced.stats.m as f64,
            mode,
            method: reduced.stats.method,
            k: reduced.stats.k,
            floor: config.floor,
            fences: reduced.selection.fences,
            source_indices: reduced.source_indices.clone(),
            cluster_sizes: reduced.clusters.iter().map(|c| c.members.len()).collect(),
        };
        write_json(path, &report)?;
    }
    if let Some(path) = &args.mask {
        let bytes = render_mask(
            &reduced.selection,
            tokens.grid(),
            MaskFormat::from_path(path),
        )?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    println!(
        "kept {} of {} tokens ({:.4}), method {}",
        reduced.stats.m,
        reduced.stats.n,
        reduced.stats.kept_fraction,
        reduced.stats.method.as_str()
    );
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        grid: args.grid,
        d: args.d,
        d_k: args.dk,
        n_heads: args.heads,
        n_spikes: args.spikes,
        spike_gain: args.gain,
        cluster_count: args.clusters,
        seed: args.seed,
    };
    let tokens = synth_generate(&spec)?;
    let bytes = write_token_dump_file(&tokens, &args.out)?;
    println!("wrote {bytes} bytes to {}", args.out.display());
    Ok(())
}

fn run_cost(args: CostArgs) -> Result<()> {
    let mut model = match ModelProfile::preset(&args.model) {
        Some(m) => m,
        None => ModelProfile::from_toml_file(Path::new(&args.model))?,
    };
    if args.int4 {
        model = model.int4();
    }
    let hw = match HardwareProfile::preset(&args.hw) {
        Some(h) => h,
        None => HardwareProfile::from_toml_file(Path::new(&args.hw))?,
    };
    let cmp = cost_comparison(&model, &hw, args.tokens_full, args.tokens_reduced)?;
    write_json(&args.report, &cmp)?;
    println!(
        "flops {:.3e} -> {:.3e} ({:.4}x), prefill {:.2} ms -> {:.2} ms",
        cmp.full.flops_total,
        cmp.reduced.flops_total,
        cmp.savings.flops_ratio,
        cmp.full.prefill_time_s * 1e3,
        cmp.reduced.prefill_time_s * 1e3
    );
    Ok(())
}

fn run_stats(args: StatsArgs) -> Result<()> {
    let pattern = glob::glob(&args.inputs).map_err(|e| Error::invalid(format!("bad glob: {e}")))?;
    let mut paths: Vec<PathBuf> = pattern
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput("no files match the input glob"));
    }
    let reports: Vec<ReduceReport> = paths
        .par_iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: p.clone(),
                source: e,
            })
        })
        .collect::<Result<_>>()?;
    let stats: Vec<ImageStats> = reports.iter().map(ReduceReport::image_stats).collect();
    let summary = corpus_stats(&stats)?;
    let text = serde_json::to_string(&summary).map_err(|e| Error::Json {
        path: "<stdout>".into(),
        source: e,
    })?;
    println!("{text}");
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Reduce(a) => run_reduce(a),
        Command::Synth(a) => run_synth(a),
        Command::Cost(a) => run_cost(a),
        Command::Stats(a) => run_stats(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
