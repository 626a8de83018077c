//! Synthetic ground truth and sensor data: three coupled MVAR sources,
//! band-pass filtered, projected through a fine lead field and corrupted by
//! white noise at a fixed SNR.

pub mod filter;
pub mod geometry;
pub mod mvar;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kron::LeadField;
use crate::rng::{substream, Stream};
use crate::spectral::{welch_full_spectrum, TimeSeriesSet, WelchConfig};

pub use filter::bandpass;
pub use geometry::{coarsen_leadfield, select_sources, synthetic_leadfield, CoarseLeadField};
pub use mvar::{check_stability, draw_mvar, simulate_mvar, Configuration, MvarModel};

/// Cap on MVAR redraws when the filtered signals fail [`accept_signals`].
pub const SIGNAL_DRAW_CAP: usize = 1_000;
pub const MAX_NORM_RATIO: f64 = 3.0;
pub const MIN_BAND_POWER_RATIO: f64 = 1.2;

/// Parameters of one simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub configuration: Configuration,
    pub n_sensors: usize,
    pub n_sources_fine: usize,
    pub coarsen_factor: usize,
    pub snr_db: f64,
    pub duration_samples: usize,
    pub sampling_rate: f64,
    pub band: (f64, f64),
    pub seed: u64,
    pub repetitions: usize,
    pub mvar_order: usize,
    pub burn_in: usize,
}

impl SimulationSpec {
    /// Desk-scale defaults: 30 sensors, 400 fine and 100 coarse sources,
    /// 5 dB, 10,000 samples at 256 Hz, 20 repetitions.
    pub fn desk_scale(configuration: Configuration, seed: u64) -> Self {
        Self {
            configuration,
            n_sensors: 30,
            n_sources_fine: 400,
            coarsen_factor: 4,
            snr_db: 5.0,
            duration_samples: 10_000,
            sampling_rate: 256.0,
            band: (8.0, 12.0),
            seed,
            repetitions: 20,
            mvar_order: mvar::MVAR_ORDER,
            burn_in: 1_000,
        }
    }

    pub fn validate(&self, welch: &WelchConfig) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_sensors == 0 || self.n_sources_fine < 3 {
            return fail(format!(
                "need m >= 1 sensors and n >= 3 fine sources, got m = {}, n = {}",
                self.n_sensors, self.n_sources_fine
            ));
        }
        if self.coarsen_factor == 0 || self.coarsen_factor > self.n_sources_fine {
            return fail(format!("coarsening factor {} out of range", self.coarsen_factor));
        }
        if self.duration_samples < 2 * welch.segment_length {
            return fail(format!(
                "T = {} must be at least twice the Welch segment length {}",
                self.duration_samples, welch.segment_length
            ));
        }
        if !(self.band.0 > 0.0 && self.band.0 < self.band.1 && self.band.1 < self.sampling_rate / 2.0) {
            return fail(format!(
                "band ({}, {}) must lie inside (0, {})",
                self.band.0,
                self.band.1,
                self.sampling_rate / 2.0
            ));
        }
        if self.snr_db.is_nan() || self.mvar_order == 0 {
            return fail("SNR must be a number and the MVAR order positive".into());
        }
        Ok(())
    }
}

/// Active sources of one repetition, indexed into the fine source space.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub source_indices: [usize; 3],
    /// Interacting pairs as fine source indices.
    pub true_pairs: Vec<(usize, usize)>,
    /// Band-pass filtered activity of the three sources (`T × 3`).
    pub source_series: TimeSeriesSet,
    pub model: MvarModel,
}

impl GroundTruth {
    pub fn new(source_indices: [usize; 3], source_series: TimeSeriesSet, model: MvarModel) -> Result<Self> {
        check_len("ground-truth source series", 3, source_series.channels())?;
        let true_pairs = model
            .configuration
            .true_pairs()
            .iter()
            .map(|&(a, b)| (source_indices[a], source_indices[b]))
            .collect();
        Ok(Self {
            source_indices,
            true_pairs,
            source_series,
            model,
        })
    }

    /// Dense `T × n` source activity with the three active rows filled in.
    pub fn full_source_series(&self, n_sources: usize) -> Result<TimeSeriesSet> {
        if let Some(&bad) = self.source_indices.iter().find(|&&j| j >= n_sources) {
            return Err(Error::Input(format!("source index {bad} outside {n_sources} sources")));
        }
        let mut x = DMatrix::zeros(self.source_series.len(), n_sources);
        for (k, &j) in self.source_indices.iter().enumerate() {
            x.column_mut(j).copy_from_slice(self.source_series.channel(k));
        }
        TimeSeriesSet::new(x, self.source_series.sampling_rate())
    }
}

/// Signal-quality check on the three source series: the strongest channel's
/// ℓ2 norm is below three times the weakest, and the mean band power of the
/// summed channel spectra is at least 1.2 times the mean over all bins
/// `0..=L/2`.
pub fn accept_signals(series: &TimeSeriesSet, band: (f64, f64), welch_cfg: &WelchConfig) -> Result<bool> {
    let norms: Vec<f64> = (0..series.channels())
        .map(|c| series.channel(c).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max < MAX_NORM_RATIO * min) {
        return Ok(false);
    }
    let spectra = welch_full_spectrum(series, welch_cfg)?;
    let one_sided = &spectra[..=welch_cfg.segment_length / 2];
    let power: Vec<(f64, f64)> = one_sided
        .iter()
        .map(|s| (s.frequency_hz(), (0..s.channel_count()).map(|c| s.matrix()[(c, c)].re).sum()))
        .collect();
    let global = power.iter().map(|p| p.1).sum::<f64>() / power.len() as f64;
    let in_band: Vec<f64> = power
        .iter()
        .filter(|(f, _)| *f >= band.0 && *f <= band.1)
        .map(|p| p.1)
        .collect();
    if in_band.is_empty() {
        return Err(Error::Config(format!("no Welch bin inside the band [{}, {}] Hz", band.0, band.1)));
    }
    let band_mean = in_band.iter().sum::<f64>() / in_band.len() as f64;
    Ok(band_mean >= MIN_BAND_POWER_RATIO * global)
}

/// `y(t) = G x(t) + e(t)` with `e ~ N(0, σ² I)` and
/// `σ² = ‖G X‖_F² / (T m 10^(snr/10))`; an infinite SNR gives `σ = 0`.
pub fn generate_observations<R: Rng + ?Sized>(
    fine: &LeadField,
    truth: &GroundTruth,
    snr_db: f64,
    rng: &mut R,
) -> Result<TimeSeriesSet> {
    if let Some(&bad) = truth.source_indices.iter().find(|&&j| j >= fine.n_sources()) {
        return Err(Error::Input(format!(
            "source index {bad} outside a {}-source lead field",
            fine.n_sources()
        )));
    }
    let g = fine.gain().select_columns(&truth.source_indices);
    let mut y = truth.source_series.samples() * g.transpose();
    let (t, m) = (y.nrows(), y.ncols());
    let signal_energy = y.norm_squared();
    let sigma = (signal_energy / (t as f64 * m as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
    for row in 0..t {
        for col in 0..m {
            let e: f64 = StandardNormal.sample(rng);
            y[(row, col)] += sigma * e;
        }
    }
    TimeSeriesSet::new(y, truth.source_series.sampling_rate())
}

/// Draws stable MVAR models until the filtered three-source activity passes
/// [`accept_signals`].
pub fn draw_source_activity<R: Rng + ?Sized>(
    spec: &SimulationSpec,
    welch_cfg: &WelchConfig,
    rng: &mut R,
) -> Result<(MvarModel, TimeSeriesSet)> {
    for _ in 0..SIGNAL_DRAW_CAP {
        let model = mvar::draw_mvar_with_order(spec.configuration, spec.mvar_order, rng)?;
        let raw = simulate_mvar(&model, spec.duration_samples, spec.burn_in, spec.sampling_rate, rng)?;
        let filtered = bandpass(&raw, spec.band.0, spec.band.1)?;
        if accept_signals(&filtered, spec.band, welch_cfg)? {
            return Ok((model, filtered));
        }
    }
    Err(Error::SamplingFailure {
        attempts: SIGNAL_DRAW_CAP,
        reason: "no MVAR draw passed the signal-quality check".into(),
    })
}

/// Ground truth and observations of repetition `rep`, from the repetition's
/// own simulation substream.
pub fn simulate_repetition(
    spec: &SimulationSpec,
    fine: &LeadField,
    welch_cfg: &WelchConfig,
    rep: usize,
) -> Result<(GroundTruth, TimeSeriesSet)> {
    spec.validate(welch_cfg)?;
    let positions = fine
        .positions()
        .ok_or_else(|| Error::Input("source selection needs lead-field positions".into()))?;
    let mut rng = substream(spec.seed, Stream::Simulation, rep as u64);
    let indices = select_sources(positions, &fine.column_norms(), &mut rng)?;
    let (model, series) = draw_source_activity(spec, welch_cfg, &mut rng)?;
    let truth = GroundTruth::new(indices, series, model)?;
    let observations = generate_observations(fine, &truth, spec.snr_db, &mut rng)?;
    Ok((truth, observations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn welch() -> WelchConfig {
        WelchConfig::default()
    }

    fn white(channels: usize, len: usize, seed: u64, scales: &[f64]) -> TimeSeriesSet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(len, channels, |_, c| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e * scales[c]
        });
        TimeSeriesSet::new(x, 256.0).unwrap()
    }

    #[test]
    fn flat_spectrum_fails_band_condition() {
        let x = white(1, 4096, 3, &[1.0]);
        let same = DMatrix::from_fn(4096, 3, |t, _| x.samples()[(t, 0)]);
        let s = TimeSeriesSet::new(same, 256.0).unwrap();
        assert!(!accept_signals(&s, (8.0, 12.0), &welch()).unwrap());
    }

    #[test]
    fn unbalanced_norms_are_rejected() {
        let s = white(3, 4096, 3, &[1.0, 1.0, 3.5]);
        assert!(!accept_signals(&s, (8.0, 12.0), &welch()).unwrap());
    }

    #[test]
    fn filtered_comparable_signals_are_accepted() {
        let s = bandpass(&white(3, 4096, 8, &[1.0, 1.3, 0.8]), 8.0, 12.0).unwrap();
        assert!(accept_signals(&s, (8.0, 12.0), &welch()).unwrap());
    }

    fn tiny_truth(len: usize) -> (LeadField, GroundTruth) {
        let lf = synthetic_leadfield(6, 20, 1).unwrap();
        let series = white(3, len, 2, &[1.0, 1.0, 1.0]);
        let truth = GroundTruth::new([1, 7, 13], series, MvarModel::zeros(Configuration::Two, 5)).unwrap();
        (lf, truth)
    }

    #[test]
    fn true_pairs_follow_configuration() {
        let (_, truth) = tiny_truth(300);
        assert_eq!(truth.true_pairs, vec![(1, 7), (1, 13)]);
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let (lf, truth) = tiny_truth(300);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let y = generate_observations(&lf, &truth, f64::INFINITY, &mut rng).unwrap();
        let x = truth.full_source_series(20).unwrap();
        let expected = x.samples() * lf.gain().transpose();
        assert!((y.samples() - expected).amax() < 1e-12);
    }

    #[test]
    fn zero_sources_give_pure_noise() {
        let (lf, truth) = tiny_truth(300);
        let zero = GroundTruth::new(
            truth.source_indices,
            TimeSeriesSet::new(DMatrix::zeros(300, 3), 256.0).unwrap(),
            truth.model.clone(),
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        // σ² = 0 when there is no signal energy
        let y = generate_observations(&lf, &zero, 5.0, &mut rng).unwrap();
        assert_eq!(y.samples().amax(), 0.0);
    }

    #[test]
    fn realized_snr_matches_target() {
        let (lf, truth) = tiny_truth(10_000);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let y = generate_observations(&lf, &truth, 5.0, &mut rng).unwrap();
        let clean = truth.full_source_series(20).unwrap().samples() * lf.gain().transpose();
        let noise = y.samples() - &clean;
        let snr = 10.0 * (clean.norm_squared() / noise.norm_squared()).log10();
        assert!((snr - 5.0).abs() < 0.3, "realized SNR {snr}");
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let (_, truth) = tiny_truth(300);
        let small = synthetic_leadfield(6, 10, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(generate_observations(&small, &truth, 5.0, &mut rng).is_err());
    }

    #[test]
    fn repetition_is_deterministic() {
        let mut spec = SimulationSpec::desk_scale(Configuration::One, 21);
        spec.duration_samples = 1024;
        spec.n_sources_fine = 60;
        let lf = synthetic_leadfield(spec.n_sensors, spec.n_sources_fine, spec.seed).unwrap();
        let (ta, ya) = simulate_repetition(&spec, &lf, &welch(), 3).unwrap();
        let (tb, yb) = simulate_repetition(&spec, &lf, &welch(), 3).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(ya, yb);
        assert!(accept_signals(&ta.source_series, spec.band, &welch()).unwrap());
        assert!(check_stability(&ta.model));
        let (tc, _) = simulate_repetition(&spec, &lf, &welch(), 4).unwrap();
        assert_ne!(ta.source_series, tc.source_series);
    }

    #[test]
    fn spec_validation() {
        let w = welch();
        let ok = SimulationSpec::desk_scale(Configuration::One, 0);
        assert!(ok.validate(&w).is_ok());
        let mut bad = ok.clone();
        bad.duration_samples = 400;
        assert!(bad.validate(&w).is_err());
        let mut bad = ok.clone();
        bad.band = (8.0, 130.0);
        assert!(bad.validate(&w).is_err());
        let mut bad = ok;
        bad.coarsen_factor = 0;
        assert!(bad.validate(&w).is_err());
    }
}
