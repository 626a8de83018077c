//! Two-step baseline: Tikhonov source estimation at every time point, then
//! Welch cross-spectrum of the estimated sources.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::kron::LeadField;
use crate::spectral::{welch_cross_spectrum, CrossSpectrum, TimeSeriesSet, WelchConfig};

/// Multipliers `ξ` of the Tikhonov grid `λ = ξ · 10^(−SNR/10)`.
pub const TIKHONOV_GRID_MULTIPLIERS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovConfig {
    pub lambda: f64,
    pub parameter_grid: Vec<f64>,
}

impl TikhonovConfig {
    pub fn for_snr(snr_db: f64) -> Self {
        let parameter_grid = default_lambda_grid(snr_db).to_vec();
        Self {
            lambda: parameter_grid[1],
            parameter_grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        self.parameter_grid.iter().try_for_each(|&l| check_lambda(l))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("Tikhonov lambda must be positive, got {lambda}")))
    }
}

/// `[0.1, 1, 10, 100] · 10^(−snr_db/10)`.
pub fn default_lambda_grid(snr_db: f64) -> [f64; 4] {
    let scale = 10f64.powf(-snr_db / 10.0);
    TIKHONOV_GRID_MULTIPLIERS.map(|xi| xi * scale)
}

/// Thin SVD of the lead field, shared by every `λ` and time point.
#[derive(Debug, Clone)]
pub struct TikhonovInverse {
    u: DMatrix<f64>,
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
}

impl TikhonovInverse {
    pub fn new(lead_field: &LeadField) -> Self {
        let svd = lead_field.gain().clone().svd(true, true);
        Self {
            u: svd.u.expect("requested U"),
            singular_values: svd.singular_values,
            v_t: svd.v_t.expect("requested Vᵀ"),
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.v_t.ncols()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// Filter factors `σ_i / (σ_i² + λ)`.
    pub fn filter_factors(&self, lambda: f64) -> DVector<f64> {
        self.singular_values.map(|s| s / (s * s + lambda))
    }

    /// `(GᵀG + λI)⁻¹Gᵀ = V diag(σ/(σ²+λ)) Uᵀ`, `n × m`.
    pub fn kernel(&self, lambda: f64) -> Result<DMatrix<f64>> {
        check_lambda(lambda)?;
        let mut v = self.v_t.transpose();
        for (mut col, f) in v.column_iter_mut().zip(self.filter_factors(lambda).iter()) {
            col *= *f;
        }
        Ok(v * self.u.transpose())
    }

    pub fn estimate(&self, observations: &TimeSeriesSet, lambda: f64) -> Result<TimeSeriesSet> {
        check_len("Tikhonov observations", self.n_sensors(), observations.channels())?;
        let kernel = self.kernel(lambda)?;
        // rows are time points: X = Y Kᵀ
        let sources = observations.samples() * kernel.transpose();
        TimeSeriesSet::new(sources, observations.sampling_rate())
    }
}

/// `x_λ(t) = (GᵀG + λI)⁻¹Gᵀ y(t)` for every time point.
pub fn tikhonov_estimate(
    lead_field: &LeadField,
    observations: &TimeSeriesSet,
    lambda: f64,
) -> Result<TimeSeriesSet> {
    check_lambda(lambda)?;
    TikhonovInverse::new(lead_field).estimate(observations, lambda)
}

/// Tikhonov estimate followed by the Welch cross-spectrum at `frequency_bin`.
pub fn two_step_cps(
    lead_field: &LeadField,
    observations: &TimeSeriesSet,
    tikhonov_lambda: f64,
    welch_cfg: &WelchConfig,
    frequency_bin: usize,
) -> Result<CrossSpectrum> {
    let sources = tikhonov_estimate(lead_field, observations, tikhonov_lambda)?;
    welch_cross_spectrum(&sources, welch_cfg, frequency_bin)
}

/// Rescales observations so that the mean per-channel variance is one.
///
/// Returns the scaled series and the factor applied. A constant-zero series is
/// returned unchanged with factor 1.
pub fn normalize_unit_variance(observations: &TimeSeriesSet) -> (TimeSeriesSet, f64) {
    let t = observations.len() as f64;
    let d = observations.channels();
    let mean_var = (0..d)
        .map(|c| {
            let x = observations.channel(c);
            let mean = x.iter().sum::<f64>() / t;
            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t
        })
        .sum::<f64>()
        / d as f64;
    if mean_var > 0.0 {
        let factor = 1.0 / mean_var.sqrt();
        (observations.scaled(factor), factor)
    } else {
        (observations.clone(), 1.0)
    }
}
