//! End-to-end comparison of the one-step and two-step estimators on
//! simulated repetitions, and the summaries reported over a study.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fista::{default_scaling_factors, lambda_grid, FistaConfig, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::kron::{lipschitz_constant, KronOperator, LeadField, POWER_ITERATION_TOL};
use crate::metrics::{
    evaluate, quartiles, select_best, sparsity_table, EvalReport, Part, Quartiles, SparsityGroup, SparsityRow,
    DEFAULT_FRACTION,
};
use crate::rng::{derive_seed, Stream};
use crate::sim::{coarsen_leadfield, simulate_repetition, synthetic_leadfield, CoarseLeadField, GroundTruth, SimulationSpec};
use crate::spectral::{peak_bin, welch_cross_spectrum, welch_full_spectrum, CrossSpectrum, TimeSeriesSet, WelchConfig};
use crate::two_step::{normalize_unit_variance, TikhonovInverse, TIKHONOV_GRID_MULTIPLIERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OneStep,
    TwoStep,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::OneStep, Method::TwoStep];

    pub fn label(self) -> &'static str {
        match self {
            Method::OneStep => "one-step",
            Method::TwoStep => "two-step",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one-step" => Ok(Method::OneStep),
            "two-step" => Ok(Method::TwoStep),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Settings of the estimation and evaluation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub welch: WelchConfig,
    /// Frequency band searched for the peak bin (Hz).
    pub band: (f64, f64),
    /// 0-based sensor pair whose cross-spectrum magnitude picks the bin.
    pub channel_pair: (usize, usize),
    /// One-step grid: `λ = κ λ*`.
    pub lambda_scales: Vec<f64>,
    /// Two-step grid: `λ = ξ 10^(−SNR/10)`.
    pub tikhonov_multipliers: Vec<f64>,
    pub snr_db: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Threshold fraction of the supra-threshold connections.
    pub fraction: f64,
    /// Rescale observations to unit mean channel variance first.
    pub normalize: bool,
}

impl EstimationConfig {
    pub fn for_spec(spec: &SimulationSpec) -> Self {
        Self {
            welch: WelchConfig::with_sampling_rate(spec.sampling_rate),
            band: spec.band,
            channel_pair: (0, 1),
            lambda_scales: default_scaling_factors(),
            tikhonov_multipliers: TIKHONOV_GRID_MULTIPLIERS.to_vec(),
            snr_db: spec.snr_db,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            fraction: DEFAULT_FRACTION,
            normalize: true,
        }
    }

    pub fn tikhonov_lambdas(&self) -> Vec<f64> {
        let scale = 10f64.powf(-self.snr_db / 10.0);
        self.tikhonov_multipliers.iter().map(|xi| xi * scale).collect()
    }

    /// Grid scales of a method: `κ` for one-step, `ξ` for two-step.
    pub fn scales(&self, method: Method) -> &[f64] {
        match method {
            Method::OneStep => &self.lambda_scales,
            Method::TwoStep => &self.tikhonov_multipliers,
        }
    }
}

/// One estimated source cross-spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub method: Method,
    pub grid_index: usize,
    pub scale: f64,
    pub lambda: f64,
    pub spectrum: CrossSpectrum,
    /// FISTA iterations; 0 for two-step.
    pub iterations: usize,
    pub converged: bool,
}

/// Normalized observations, all Welch bins and the selected bin.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub observations: TimeSeriesSet,
    pub frequency_bin: usize,
    pub sensor_spectrum: CrossSpectrum,
}

pub fn prepare_observations(observations: &TimeSeriesSet, cfg: &EstimationConfig) -> Result<PreparedData> {
    let observations = if cfg.normalize {
        normalize_unit_variance(observations).0
    } else {
        observations.clone()
    };
    let spectra = welch_full_spectrum(&observations, &cfg.welch)?;
    let half = &spectra[..=cfg.welch.segment_length / 2];
    let frequency_bin = peak_bin(half, cfg.channel_pair, cfg.band)?;
    let sensor_spectrum = spectra[frequency_bin].clone();
    Ok(PreparedData {
        observations,
        frequency_bin,
        sensor_spectrum,
    })
}

/// One-step solves over the `κ` grid from one shared random Hermitian start.
pub fn estimate_one_step(
    op: &KronOperator,
    lipschitz: f64,
    sensor_spectrum: &CrossSpectrum,
    cfg: &EstimationConfig,
    init_seed: u64,
) -> Result<Vec<Estimate>> {
    let template = FistaConfig {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        seed: init_seed,
        ..FistaConfig::new(1.0, lipschitz)
    };
    lambda_grid(op, sensor_spectrum, &cfg.lambda_scales, &template)?
        .into_iter()
        .enumerate()
        .map(|(k, (lambda, result))| {
            Ok(Estimate {
                method: Method::OneStep,
                grid_index: k,
                scale: cfg.lambda_scales[k],
                lambda,
                spectrum: result.estimate.to_cross_spectrum(sensor_spectrum.frequency_hz())?,
                iterations: result.iterations_run,
                converged: result.converged,
            })
        })
        .collect()
}

/// Two-step estimates over the Tikhonov grid at the given bin.
pub fn estimate_two_step(
    inverse: &TikhonovInverse,
    observations: &TimeSeriesSet,
    frequency_bin: usize,
    cfg: &EstimationConfig,
) -> Result<Vec<Estimate>> {
    cfg.tikhonov_lambdas()
        .into_iter()
        .enumerate()
        .map(|(k, lambda)| {
            let sources = inverse.estimate(observations, lambda)?;
            Ok(Estimate {
                method: Method::TwoStep,
                grid_index: k,
                scale: cfg.tikhonov_multipliers[k],
                lambda,
                spectrum: welch_cross_spectrum(&sources, &cfg.welch, frequency_bin)?,
                iterations: 0,
                converged: true,
            })
        })
        .collect()
}

/// Everything shared by the repetitions of one study.
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub spec: SimulationSpec,
    pub estimation: EstimationConfig,
    pub fine: LeadField,
    pub coarse: CoarseLeadField,
    pub operator: KronOperator,
    pub lipschitz: f64,
    pub tikhonov: TikhonovInverse,
}

impl StudySetup {
    pub fn new(spec: SimulationSpec, estimation: EstimationConfig) -> Result<Self> {
        spec.validate(&estimation.welch)?;
        let fine = synthetic_leadfield(spec.n_sensors, spec.n_sources_fine, spec.seed)?;
        let coarse = coarsen_leadfield(&fine, spec.coarsen_factor)?;
        Self::from_parts(spec, estimation, fine, coarse)
    }

    pub fn from_parts(
        spec: SimulationSpec,
        estimation: EstimationConfig,
        fine: LeadField,
        coarse: CoarseLeadField,
    ) -> Result<Self> {
        let lipschitz = lipschitz_constant(&coarse.lead_field, POWER_ITERATION_TOL)?;
        let operator = KronOperator::new(coarse.lead_field.clone());
        let tikhonov = TikhonovInverse::new(&coarse.lead_field);
        Ok(Self {
            spec,
            estimation,
            fine,
            coarse,
            operator,
            lipschitz,
            tikhonov,
        })
    }

    pub fn positions_fine(&self) -> Result<&[[f64; 3]]> {
        self.fine
            .positions()
            .ok_or_else(|| Error::Input("fine lead field has no positions".into()))
    }

    pub fn positions_coarse(&self) -> Result<&[[f64; 3]]> {
        self.coarse
            .lead_field
            .positions()
            .ok_or_else(|| Error::Input("coarse lead field has no positions".into()))
    }

    pub fn init_seed(&self, rep: usize) -> u64 {
        derive_seed(self.spec.seed, Stream::Initialization, rep as u64)
    }

    pub fn simulate(&self, rep: usize) -> Result<(GroundTruth, TimeSeriesSet)> {
        simulate_repetition(&self.spec, &self.fine, &self.estimation.welch, rep)
    }

    /// Estimates of both methods for one set of observations.
    pub fn estimate(&self, observations: &TimeSeriesSet, rep: usize) -> Result<(PreparedData, Vec<Estimate>)> {
        let data = prepare_observations(observations, &self.estimation)?;
        let mut all = estimate_one_step(
            &self.operator,
            self.lipschitz,
            &data.sensor_spectrum,
            &self.estimation,
            self.init_seed(rep),
        )?;
        all.extend(estimate_two_step(&self.tikhonov, &data.observations, data.frequency_bin, &self.estimation)?);
        Ok((data, all))
    }

    pub fn evaluate(&self, estimate: &CrossSpectrum, true_pairs: &[(usize, usize)]) -> Result<EvalReport> {
        evaluate(
            estimate,
            true_pairs,
            self.positions_fine()?,
            self.positions_coarse()?,
            self.estimation.fraction,
        )
    }

    /// Simulates, estimates and scores repetition `rep`.
    pub fn run_repetition(&self, rep: usize) -> Result<RepetitionResult> {
        let (truth, observations) = self.simulate(rep)?;
        let (data, estimates) = self.estimate(&observations, rep)?;
        let evaluations = estimates
            .iter()
            .map(|e| {
                Ok(Evaluation {
                    repetition: rep,
                    method: e.method,
                    grid_index: e.grid_index,
                    scale: e.scale,
                    lambda: e.lambda,
                    iterations: e.iterations,
                    converged: e.converged,
                    report: self.evaluate(&e.spectrum, &truth.true_pairs)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RepetitionResult {
            repetition: rep,
            source_indices: truth.source_indices,
            true_pairs: truth.true_pairs,
            frequency_bin: data.frequency_bin,
            evaluations,
        })
    }
}

/// Score of one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub repetition: usize,
    pub method: Method,
    pub grid_index: usize,
    pub scale: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub source_indices: [usize; 3],
    pub true_pairs: Vec<(usize, usize)>,
    pub frequency_bin: usize,
    pub evaluations: Vec<Evaluation>,
}

/// Distribution of the best-`λ` results of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub repetitions: usize,
    pub err_re: Option<Quartiles>,
    pub err_im: Option<Quartiles>,
    pub count_re: Option<Quartiles>,
    pub count_im: Option<Quartiles>,
    /// Supra-threshold connections of both parts together.
    pub count_total: Option<Quartiles>,
    /// Best grid index per repetition, in repetition order.
    pub best_grid_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub configuration: u8,
    /// One-step sparsity statistics per `κ`.
    pub sparsity: Vec<SparsityRow>,
    pub methods: Vec<MethodSummary>,
}

impl StudySummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Sparsity rows of one part, ordered by increasing `κ`.
    pub fn sparsity_by_scale(&self, part: Part) -> Vec<&SparsityRow> {
        let mut rows: Vec<_> = self.sparsity.iter().filter(|r| r.part == part).collect();
        rows.sort_by(|a, b| a.lambda_scale.total_cmp(&b.lambda_scale));
        rows
    }
}

/// Best `λ` of one repetition and method: minimal `Err^Re + Err^Im`, ties to
/// the lowest `λ`.
pub fn best_evaluation(evaluations: &[Evaluation], repetition: usize, method: Method) -> Option<Evaluation> {
    let candidates: Vec<&Evaluation> = evaluations
        .iter()
        .filter(|e| e.repetition == repetition && e.method == method)
        .collect();
    let scored: Vec<(f64, EvalReport)> = candidates.iter().map(|e| (e.lambda, e.report)).collect();
    select_best(&scored).map(|k| *candidates[k])
}

/// Sparsity table of the one-step grid and best-`λ` distributions of both
/// methods, from the flat list of evaluations of one configuration.
pub fn summarize(configuration: u8, evaluations: &[Evaluation]) -> StudySummary {
    let mut repetitions: Vec<usize> = evaluations.iter().map(|e| e.repetition).collect();
    repetitions.sort_unstable();
    repetitions.dedup();

    let mut scales: Vec<(usize, f64)> = evaluations
        .iter()
        .filter(|e| e.method == Method::OneStep)
        .map(|e| (e.grid_index, e.scale))
        .collect();
    scales.sort_by_key(|s| s.0);
    scales.dedup_by_key(|s| s.0);
    let groups: Vec<SparsityGroup> = scales
        .iter()
        .map(|&(index, scale)| SparsityGroup {
            configuration,
            lambda_scale: scale,
            reports: evaluations
                .iter()
                .filter(|e| e.method == Method::OneStep && e.grid_index == index)
                .map(|e| e.report)
                .collect(),
        })
        .collect();

    let methods = Method::BOTH
        .iter()
        .filter_map(|&method| {
            let best: Vec<Evaluation> = repetitions
                .iter()
                .filter_map(|&rep| best_evaluation(evaluations, rep, method))
                .collect();
            if best.is_empty() {
                return None;
            }
            let stat = |f: &dyn Fn(&EvalReport) -> f64| quartiles(&best.iter().map(|e| f(&e.report)).collect::<Vec<_>>());
            Some(MethodSummary {
                method,
                repetitions: best.len(),
                err_re: stat(&|r| r.err_re),
                err_im: stat(&|r| r.err_im),
                count_re: stat(&|r| r.count_re as f64),
                count_im: stat(&|r| r.count_im as f64),
                count_total: stat(&|r| (r.count_re + r.count_im) as f64),
                best_grid_index: best.iter().map(|e| e.grid_index).collect(),
            })
        })
        .collect();

    StudySummary {
        configuration,
        sparsity: sparsity_table(&groups),
        methods,
    }
}
