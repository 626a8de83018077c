//! `sparse-cps`: simulate, estimate, evaluate and report the one-step versus
//! two-step source cross-spectrum study, and benchmark the Kronecker product.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bench;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sparse_cps::metrics::DEFAULT_FRACTION;
use sparse_cps::sim::{Configuration, SimulationSpec};
use sparse_cps::study::{EstimationConfig, Method};

use crate::manifest::RunManifest;
use crate::pipeline::LeadFieldInput;

#[global_allocator]
static ALLOCATOR: bench::CountingAllocator = bench::CountingAllocator;

const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(name = "sparse-cps", version, about = "Sparse source cross-spectrum estimation study")]
struct Cli {
    /// Root seed (default 2024). For `estimate` it replaces only the seed of
    /// the solver initialization streams recorded in the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for repetition-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Run directory holding the manifest and all artifacts.
    #[arg(long, global = true, default_value = "sparse-cps-run")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw ground truth and sensor observations for every repetition.
    Simulate(SimulateArgs),
    /// Estimate source cross-spectra over a regularization grid.
    Estimate(EstimateArgs),
    /// Same as `estimate --method two-step`.
    TwoStep(GridArgs),
    /// Score every estimate against the ground truth.
    Evaluate(EvaluateArgs),
    /// Aggregate evaluations into the sparsity table and error distributions.
    Report,
    /// Time the matrix-free product against the dense Kronecker product.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Coupling configuration: 1 (one interaction) or 2 (two interactions).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    config: u8,
    /// Independent repetitions.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Sensors of the synthetic lead field.
    #[arg(long, default_value_t = 30)]
    sensors: usize,
    /// Fine sources of the synthetic lead field.
    #[arg(long, default_value_t = 400)]
    sources: usize,
    /// Keep every k-th fine source in the reconstruction space.
    #[arg(long, default_value_t = 4)]
    coarsen: usize,
    /// Sensor-level signal-to-noise ratio in dB.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    snr_db: f64,
    /// Samples per repetition after burn-in.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Leading samples discarded from each simulated series.
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    /// Gain matrix file (header `m n`) replacing the synthetic lead field.
    #[arg(long, requires = "positions")]
    leadfield: Option<PathBuf>,
    /// Source positions file matching `--leadfield`.
    #[arg(long, requires = "leadfield")]
    positions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    OneStep,
    TwoStep,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::OneStep => vec![Method::OneStep],
            MethodArg::TwoStep => vec![Method::TwoStep],
            MethodArg::Both => Method::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::OneStep)]
    method: MethodArg,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// One-step scaling factors κ of λ = κ·λ* (repeatable; default four
    /// log-spaced values over [0.01, 0.1]).
    #[arg(long = "lambda-scale", value_delimiter = ',')]
    lambda_scales: Vec<f64>,
    /// Two-step multipliers ξ of λ = ξ·10^(−SNR/10) (repeatable; default 0.1, 1, 10, 100).
    #[arg(long = "tikhonov-multiplier", value_delimiter = ',')]
    tikhonov_multipliers: Vec<f64>,
    /// Iteration cap of the one-step solver (default 5000).
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Stopping threshold on the relative ℓ1 change of the iterates (default 1e-5).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Frequency band searched for the peak sensor cross-spectrum, in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    /// Welch segment length.
    #[arg(long)]
    segment_length: Option<usize>,
    /// 1-based sensor pair whose cross-spectrum selects the peak bin.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    channel_pair: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Threshold as a fraction of the largest off-diagonal magnitude.
    #[arg(long, default_value_t = DEFAULT_FRACTION)]
    fraction: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated MxN sizes; an empty string gives an empty table.
    #[arg(long, default_value = "4x4,10x50,20x200")]
    sizes: String,
    /// Timed repeats per size (best time is reported).
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

fn simulation_spec(args: &SimulateArgs, seed: u64) -> Result<SimulationSpec> {
    let configuration = Configuration::try_from(args.config).map_err(anyhow::Error::msg)?;
    Ok(SimulationSpec {
        n_sensors: args.sensors,
        n_sources_fine: args.sources,
        coarsen_factor: args.coarsen,
        snr_db: args.snr_db,
        duration_samples: args.samples,
        burn_in: args.burn_in,
        repetitions: args.reps,
        ..SimulationSpec::desk_scale(configuration, seed)
    })
}

fn estimation_config(spec: &SimulationSpec, grid: &GridArgs) -> Result<EstimationConfig> {
    let mut cfg = EstimationConfig::for_spec(spec);
    if !grid.lambda_scales.is_empty() {
        cfg.lambda_scales = grid.lambda_scales.clone();
    }
    if !grid.tikhonov_multipliers.is_empty() {
        cfg.tikhonov_multipliers = grid.tikhonov_multipliers.clone();
    }
    if let Some(k) = grid.max_iterations {
        cfg.max_iterations = k;
    }
    if let Some(eps) = grid.tolerance {
        cfg.tolerance = eps;
    }
    if let Some(band) = &grid.band {
        cfg.band = (band[0], band[1]);
    }
    if let Some(len) = grid.segment_length {
        cfg.welch.segment_length = len;
    }
    if let Some(pair) = &grid.channel_pair {
        if pair[0] == 0 || pair[1] == 0 {
            bail!("--channel-pair is 1-based");
        }
        cfg.channel_pair = (pair[0] - 1, pair[1] - 1);
    }
    if let Some(bad) = cfg.lambda_scales.iter().chain(&cfg.tikhonov_multipliers).find(|v| !(**v > 0.0)) {
        bail!("grid values must be positive, got {bad}");
    }
    Ok(cfg)
}

fn run_estimate(cli: &Cli, methods: &[Method], grid: &GridArgs) -> Result<()> {
    let manifest = RunManifest::load(&cli.out_dir)?;
    let cfg = estimation_config(&manifest.spec, grid)?;
    let manifest = pipeline::estimate(&cli.out_dir, methods, cfg, cli.seed)?;
    let count = manifest
        .files
        .iter()
        .filter(|f| methods.iter().any(|m| f.contains(&format!("{}_", m.label()))))
        .count();
    println!("wrote {count} estimate files under {}", cli.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match &cli.command {
        Command::Simulate(args) => {
            let spec = simulation_spec(args, cli.seed.unwrap_or(DEFAULT_SEED))?;
            let input = match (&args.leadfield, &args.positions) {
                (Some(gain), Some(positions)) => Some(LeadFieldInput {
                    gain: gain.clone(),
                    positions: positions.clone(),
                }),
                _ => None,
            };
            let manifest = pipeline::simulate(&cli.out_dir, spec, input)?;
            println!(
                "simulated {} repetitions of configuration {} into {}",
                manifest.spec.repetitions,
                manifest.spec.configuration.number(),
                cli.out_dir.display()
            );
        }
        Command::Estimate(args) => run_estimate(&cli, &args.method.methods(), &args.grid)?,
        Command::TwoStep(grid) => run_estimate(&cli, &[Method::TwoStep], grid)?,
        Command::Evaluate(args) => {
            if !(args.fraction > 0.0 && args.fraction <= 1.0) {
                bail!("--fraction must lie in (0, 1], got {}", args.fraction);
            }
            let (_, rows) = pipeline::evaluate_run(&cli.out_dir, args.fraction)?;
            println!("scored {} estimates", rows.len());
        }
        Command::Report => {
            let summary = pipeline::report(&cli.out_dir)?;
            print!("{}", pipeline::format_table1(&summary));
            print!("{}", pipeline::format_error_distributions(&summary));
        }
        Command::Bench(args) => {
            let sizes = bench::parse_sizes(&args.sizes)?;
            let rows = bench::run(&sizes, cli.seed.unwrap_or(DEFAULT_SEED), args.repeats)?;
            print!("{}", bench::format_table(&rows));
            if let Some(r) = rows.iter().find(|r| r.materializes_dense()) {
                bail!("matrix-free product at m={}, n={} allocated an m²n²-sized buffer", r.m, r.n);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
