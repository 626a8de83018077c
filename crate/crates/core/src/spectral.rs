//! Cross-power spectra: the Hermitian representation, Welch estimation from
//! multichannel time series, and the exact forward map `G S Gᵀ + S_E`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_len, Error, Result};
use crate::kron::LeadField;

/// Relative tolerance of the Hermitian and real-diagonal invariants.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Complex `d × d` cross-power spectrum at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    frequency_hz: f64,
    matrix: DMatrix<Complex64>,
}

impl CrossSpectrum {
    /// Validates that `matrix` is square and Hermitian (hence has a real
    /// diagonal) within [`HERMITIAN_TOL`] relative to its largest entry.
    ///
    /// Nonnegativity of the diagonal is checked separately by
    /// [`has_nonnegative_diagonal`](Self::has_nonnegative_diagonal): Welch
    /// and forward-model spectra satisfy it, sparse estimates need not.
    pub fn new(frequency_hz: f64, matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Input(format!(
                "cross-spectrum must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("cross-spectrum has non-finite entries".into()));
        }
        let spectrum = Self {
            frequency_hz,
            matrix,
        };
        let defect = spectrum.hermitian_defect();
        if defect > HERMITIAN_TOL * spectrum.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Input(format!(
                "cross-spectrum is not Hermitian (defect {defect:e})"
            )));
        }
        Ok(spectrum)
    }

    /// Builds from separate real (symmetric) and imaginary (antisymmetric) parts.
    pub fn from_parts(frequency_hz: f64, re: &DMatrix<f64>, im: &DMatrix<f64>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::Input("real and imaginary parts differ in shape".into()));
        }
        let matrix = re.zip_map(im, Complex64::new);
        Self::new(frequency_hz, matrix)
    }

    pub fn zeros(frequency_hz: f64, channels: usize) -> Self {
        Self {
            frequency_hz,
            matrix: DMatrix::zeros(channels, channels),
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn channel_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.im)
    }

    /// Column-major vectorization of the real part.
    pub fn vec_re(&self) -> Vec<f64> {
        self.matrix.iter().map(|z| z.re).collect()
    }

    /// Column-major vectorization of the imaginary part.
    pub fn vec_im(&self) -> Vec<f64> {
        self.matrix.iter().map(|z| z.im).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |S_ij − conj(S_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.channel_count();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn has_nonnegative_diagonal(&self) -> bool {
        let floor = -HERMITIAN_TOL * self.max_abs();
        (0..self.channel_count()).all(|i| self.matrix[(i, i)].re >= floor)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            frequency_hz: self.frequency_hz,
            matrix: self.matrix.map(|z| z * factor),
        }
    }
}

/// Multichannel real time series stored as `T × d` (one column per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSet {
    samples: DMatrix<f64>,
    sampling_rate: f64,
}

impl TimeSeriesSet {
    pub fn new(samples: DMatrix<f64>, sampling_rate: f64) -> Result<Self> {
        if samples.nrows() < 2 || samples.ncols() == 0 {
            return Err(Error::Input(format!(
                "time series needs at least 2 samples and 1 channel, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if !(sampling_rate > 0.0) || !sampling_rate.is_finite() {
            return Err(Error::Input(format!("sampling rate must be positive, got {sampling_rate}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("time series has non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sampling_rate,
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> DMatrix<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let t = self.len();
        &self.samples.as_slice()[c * t..(c + 1) * t]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: &self.samples * factor,
            sampling_rate: self.sampling_rate,
        }
    }
}

/// Welch segmentation parameters. `segment_length` is in samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub sampling_rate: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: 256,
            overlap_fraction: 0.5,
            sampling_rate: 256.0,
        }
    }
}

impl WelchConfig {
    pub fn with_sampling_rate(sampling_rate: f64) -> Self {
        Self {
            sampling_rate,
            ..Self::default()
        }
    }

    /// Distance in samples between consecutive segment starts.
    pub fn hop(&self) -> usize {
        let overlap = (self.overlap_fraction * self.segment_length as f64).floor() as usize;
        self.segment_length.saturating_sub(overlap)
    }

    /// Number of full segments in a series of `len` samples; trailing samples
    /// that do not fill a segment are dropped.
    pub fn segment_count(&self, len: usize) -> usize {
        if len < self.segment_length || self.hop() == 0 {
            0
        } else {
            (len - self.segment_length) / self.hop() + 1
        }
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sampling_rate / self.segment_length as f64
    }

    pub fn validate(&self, series: &TimeSeriesSet) -> Result<()> {
        if self.segment_length == 0 {
            return Err(Error::Config("Welch segment length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "Welch overlap must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        if self.hop() == 0 {
            return Err(Error::Config("Welch hop size rounds to zero".into()));
        }
        if series.len() < self.segment_length {
            return Err(Error::Config(format!(
                "series of {} samples is shorter than one Welch segment of {}",
                series.len(),
                self.segment_length
            )));
        }
        let rel = (self.sampling_rate - series.sampling_rate()).abs() / series.sampling_rate();
        if rel > 1e-9 {
            return Err(Error::Config(format!(
                "Welch sampling rate {} Hz does not match the series ({} Hz)",
                self.sampling_rate,
                series.sampling_rate()
            )));
        }
        Ok(())
    }
}

/// Symmetric Hamming window `0.54 − 0.46 cos(2πτ/(len−1))`.
pub fn hamming_window(length: usize) -> Vec<f64> {
    match length {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let denom = (length - 1) as f64;
            (0..length)
                .map(|t| 0.54 - 0.46 * (2.0 * PI * t as f64 / denom).cos())
                .collect()
        }
    }
}

/// `L / (P W)` with `W = (1/L) Σ w²`.
fn welch_scale(window: &[f64], segments: usize) -> f64 {
    let len = window.len() as f64;
    let power = window.iter().map(|w| w * w).sum::<f64>() / len;
    len / (segments as f64 * power)
}

/// Adds `a aᴴ` into `acc`.
fn accumulate_outer(acc: &mut DMatrix<Complex64>, a: &[Complex64]) {
    let d = a.len();
    for j in 0..d {
        let cj = a[j].conj();
        let col = &mut acc.as_mut_slice()[j * d..(j + 1) * d];
        for (slot, ai) in col.iter_mut().zip(a) {
            *slot += ai * cj;
        }
    }
}

/// Welch cross-spectrum at DFT bin `frequency_bin` of the segment length.
///
/// Each segment's DFT is normalized by `1/L`; the averaged outer products are
/// scaled by `L/(P W)`. Segments are summed in index order.
pub fn welch_cross_spectrum(
    series: &TimeSeriesSet,
    cfg: &WelchConfig,
    frequency_bin: usize,
) -> Result<CrossSpectrum> {
    cfg.validate(series)?;
    let len = cfg.segment_length;
    if frequency_bin >= len {
        return Err(Error::Config(format!(
            "frequency bin {frequency_bin} outside 0..{len}"
        )));
    }
    let window = hamming_window(len);
    // window·twiddle, with τ·f reduced mod L so the phase stays exact
    let kernel: Vec<Complex64> = (0..len)
        .map(|t| {
            let phase = -2.0 * PI * ((t * frequency_bin) % len) as f64 / len as f64;
            Complex64::from_polar(window[t] / len as f64, phase)
        })
        .collect();

    let d = series.channels();
    let segments = cfg.segment_count(series.len());
    let mut acc = DMatrix::<Complex64>::zeros(d, d);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d];
    for p in 0..segments {
        let start = p * cfg.hop();
        for (c, coeff) in coeffs.iter_mut().enumerate() {
            let x = &series.channel(c)[start..start + len];
            *coeff = x.iter().zip(&kernel).map(|(&v, k)| k * v).sum();
        }
        accumulate_outer(&mut acc, &coeffs);
    }
    acc *= Complex64::new(welch_scale(&window, segments), 0.0);
    Ok(CrossSpectrum {
        frequency_hz: cfg.bin_frequency(frequency_bin),
        matrix: acc,
    })
}

/// Welch cross-spectra for every bin `0..L` (FFT per segment and channel).
pub fn welch_full_spectrum(series: &TimeSeriesSet, cfg: &WelchConfig) -> Result<Vec<CrossSpectrum>> {
    cfg.validate(series)?;
    let len = cfg.segment_length;
    let window = hamming_window(len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);

    let d = series.channels();
    let segments = cfg.segment_count(series.len());
    let mut acc = vec![DMatrix::<Complex64>::zeros(d, d); len];
    // spectra[c * len + bin]
    let mut spectra = vec![Complex64::new(0.0, 0.0); d * len];
    let mut by_bin = vec![Complex64::new(0.0, 0.0); d];
    let norm = 1.0 / len as f64;
    for p in 0..segments {
        let start = p * cfg.hop();
        for c in 0..d {
            let x = &series.channel(c)[start..start + len];
            let buf = &mut spectra[c * len..(c + 1) * len];
            for ((slot, &v), &w) in buf.iter_mut().zip(x).zip(&window) {
                *slot = Complex64::new(v * w, 0.0);
            }
            fft.process(buf);
        }
        for (bin, matrix) in acc.iter_mut().enumerate() {
            for (c, slot) in by_bin.iter_mut().enumerate() {
                *slot = spectra[c * len + bin] * norm;
            }
            accumulate_outer(matrix, &by_bin);
        }
    }
    let scale = Complex64::new(welch_scale(&window, segments), 0.0);
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(bin, mut matrix)| {
            matrix *= scale;
            CrossSpectrum {
                frequency_hz: cfg.bin_frequency(bin),
                matrix,
            }
        })
        .collect())
}

/// `G S_X Gᵀ + S_E`.
pub fn forward_cross_spectrum(
    lead_field: &LeadField,
    sx: &CrossSpectrum,
    se: &CrossSpectrum,
) -> Result<CrossSpectrum> {
    let g = lead_field.gain();
    check_len("source cross-spectrum", g.ncols(), sx.channel_count())?;
    check_len("noise cross-spectrum", g.nrows(), se.channel_count())?;
    let re = g * sx.real_part() * g.transpose() + se.real_part();
    let im = g * sx.imag_part() * g.transpose() + se.imag_part();
    Ok(CrossSpectrum {
        frequency_hz: sx.frequency_hz,
        matrix: re.zip_map(&im, Complex64::new),
    })
}

/// Index of the spectrum within `[f_lo, f_hi]` Hz maximizing `|S_ij|`; ties go
/// to the lowest bin. Channel indices are 0-based.
pub fn peak_bin(
    spectra: &[CrossSpectrum],
    channel_pair: (usize, usize),
    band: (f64, f64),
) -> Result<usize> {
    let (i, j) = channel_pair;
    let mut best: Option<(usize, f64)> = None;
    for (bin, s) in spectra.iter().enumerate() {
        let f = s.frequency_hz();
        if f < band.0 || f > band.1 {
            continue;
        }
        if i >= s.channel_count() || j >= s.channel_count() {
            return Err(Error::Config(format!(
                "channel pair ({i}, {j}) outside a {}-channel spectrum",
                s.channel_count()
            )));
        }
        let mag = s.matrix()[(i, j)].norm();
        if best.is_none_or(|(_, m)| mag > m) {
            best = Some((bin, mag));
        }
    }
    best.map(|(bin, _)| bin).ok_or_else(|| {
        Error::Config(format!(
            "no frequency bin inside the band [{}, {}] Hz",
            band.0, band.1
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(cols: Vec<Vec<f64>>, fs: f64) -> TimeSeriesSet {
        let t = cols[0].len();
        let flat: Vec<f64> = cols.into_iter().flatten().collect();
        TimeSeriesSet::new(DMatrix::from_column_slice(t, flat.len() / t, &flat), fs).unwrap()
    }

    fn lcg_noise(len: usize, mut state: u64) -> Vec<f64> {
        (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_window(1), vec![1.0]);
        let w = hamming_window(3);
        assert!((w[0] - 0.08).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15 && (w[2] - 0.08).abs() < 1e-15);
        let w = hamming_window(17);
        for t in 0..17 {
            assert!((w[t] - w[16 - t]).abs() < 1e-15);
        }
        assert!((w[0] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn zero_series_gives_zero_spectrum() {
        let s = series(vec![vec![0.0; 600], vec![0.0; 600]], 256.0);
        let cfg = WelchConfig::default();
        let spec = welch_cross_spectrum(&s, &cfg, 10).unwrap();
        assert!(spec.matrix().iter().all(|z| z.norm() == 0.0));
        for spec in welch_full_spectrum(&s, &cfg).unwrap() {
            assert!(spec.matrix().iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn duplicated_channel_gives_equal_real_entries() {
        let x = lcg_noise(2000, 3);
        let s = series(vec![x.clone(), x], 256.0);
        let spec = welch_cross_spectrum(&s, &WelchConfig::default(), 7).unwrap();
        let m = spec.matrix();
        let reference = m[(0, 0)];
        for z in m.iter() {
            assert!((z - reference).norm() <= 1e-12 * reference.norm());
            assert!(z.im.abs() <= 1e-12 * reference.norm());
        }
    }

    #[test]
    fn cosine_at_exact_bin_dominates() {
        let bin = 20;
        let x: Vec<f64> = (0..4096).map(|t| (2.0 * PI * bin as f64 * t as f64 / 256.0).cos()).collect();
        let s = series(vec![x], 256.0);
        let full = welch_full_spectrum(&s, &WelchConfig::default()).unwrap();
        let peak = full[bin].matrix()[(0, 0)].re;
        // The Hamming main lobe covers the two neighbouring bins.
        for (k, spec) in full.iter().enumerate().take(129) {
            if k.abs_diff(bin) > 1 {
                let ratio_db = 10.0 * (peak / spec.matrix()[(0, 0)].re.max(1e-300)).log10();
                assert!(ratio_db >= 20.0, "bin {k}: {ratio_db} dB");
            }
        }
        // Analytic peak: single-sided amplitude ½ per bin, |X̂|² = (½·Σw/L)², scaled by L/W.
        let w = hamming_window(256);
        let sum_w: f64 = w.iter().sum();
        let power = w.iter().map(|v| v * v).sum::<f64>() / 256.0;
        let expected = (0.5 * sum_w / 256.0).powi(2) * 256.0 / power;
        // the image at −f₀ leaks a little into f₀ through the symmetric window
        assert!((peak - expected).abs() < 2e-2 * expected, "{peak} vs {expected}");
    }

    #[test]
    fn single_bin_matches_fft_route() {
        let s = series(vec![lcg_noise(3000, 1), lcg_noise(3000, 2), lcg_noise(3000, 5)], 256.0);
        let cfg = WelchConfig::default();
        let full = welch_full_spectrum(&s, &cfg).unwrap();
        for bin in [0, 1, 9, 128, 200] {
            let direct = welch_cross_spectrum(&s, &cfg, bin).unwrap();
            let scale = direct.max_abs();
            for (a, b) in direct.matrix().iter().zip(full[bin].matrix().iter()) {
                assert!((a - b).norm() <= 1e-12 * scale);
            }
            assert_eq!(direct.frequency_hz(), full[bin].frequency_hz());
        }
    }

    #[test]
    fn white_noise_is_flat() {
        let s = series(vec![lcg_noise(10_000, 11)], 256.0);
        let full = welch_full_spectrum(&s, &WelchConfig::default()).unwrap();
        let diag: Vec<f64> = full.iter().map(|s| s.matrix()[(0, 0)].re).collect();
        let max = diag.iter().cloned().fold(f64::MIN, f64::max);
        let min = diag.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "{max} / {min}");
        for spec in &full {
            assert!(spec.hermitian_defect() <= HERMITIAN_TOL * spec.max_abs());
            assert!(spec.has_nonnegative_diagonal());
        }
    }

    #[test]
    fn scale_equivariance() {
        let s = series(vec![lcg_noise(1000, 4), lcg_noise(1000, 8)], 256.0);
        let cfg = WelchConfig::default();
        let base = welch_cross_spectrum(&s, &cfg, 5).unwrap();
        let scaled = welch_cross_spectrum(&s.scaled(-3.0), &cfg, 5).unwrap();
        for (a, b) in base.matrix().iter().zip(scaled.matrix().iter()) {
            assert!((a * 9.0 - b).norm() <= 1e-12 * b.norm().max(1e-300));
        }
    }

    #[test]
    fn configuration_errors() {
        let s = series(vec![vec![1.0; 100]], 256.0);
        let cfg = WelchConfig::default();
        assert!(matches!(welch_cross_spectrum(&s, &cfg, 0), Err(Error::Config(_))));
        let s = series(vec![vec![1.0; 300]], 256.0);
        assert!(welch_cross_spectrum(&s, &cfg, 256).is_err());
        let bad = WelchConfig { overlap_fraction: 1.0, ..cfg };
        assert!(welch_cross_spectrum(&s, &bad, 1).is_err());
        let other_rate = WelchConfig { sampling_rate: 100.0, ..cfg };
        assert!(welch_cross_spectrum(&s, &other_rate, 1).is_err());
    }

    #[test]
    fn segment_bookkeeping() {
        let cfg = WelchConfig::default();
        assert_eq!(cfg.hop(), 128);
        assert_eq!(cfg.segment_count(10_000), 77);
        assert_eq!(cfg.segment_count(255), 0);
        assert_eq!(cfg.bin_frequency(10), 10.0);
    }

    #[test]
    fn forward_identities() {
        let g = LeadField::new(DMatrix::identity(3, 3)).unwrap();
        let re = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 4.0]);
        let im = DMatrix::from_row_slice(3, 3, &[0.0, 0.2, -0.1, -0.2, 0.0, 0.7, 0.1, -0.7, 0.0]);
        let sx = CrossSpectrum::from_parts(10.0, &re, &im).unwrap();
        let zero = CrossSpectrum::zeros(10.0, 3);
        assert_eq!(forward_cross_spectrum(&g, &sx, &zero).unwrap(), sx);
        let g = LeadField::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, -1.0, 3.0, 0.5])).unwrap();
        let se = CrossSpectrum::from_parts(10.0, &DMatrix::from_diagonal_element(3, 3, 0.4), &DMatrix::zeros(3, 3)).unwrap();
        let out = forward_cross_spectrum(&g, &CrossSpectrum::zeros(10.0, 2), &se).unwrap();
        assert_eq!(out.real_part(), se.real_part());
        assert!(forward_cross_spectrum(&g, &sx, &se).is_err());
    }

    #[test]
    fn peak_bin_rules() {
        let fs = 64.0;
        let mk = |vals: &[f64]| -> Vec<CrossSpectrum> {
            vals.iter()
                .enumerate()
                .map(|(b, &v)| {
                    let re = DMatrix::from_row_slice(2, 2, &[1.0, v, v, 1.0]);
                    CrossSpectrum::from_parts(b as f64 * fs / vals.len() as f64, &re, &DMatrix::zeros(2, 2)).unwrap()
                })
                .collect()
        };
        let mut vals = vec![0.1; 32];
        vals[12] = 5.0;
        let spectra = mk(&vals);
        assert_eq!(peak_bin(&spectra, (0, 1), (0.0, 32.0)).unwrap(), 12);
        assert_eq!(peak_bin(&spectra, (0, 1), (6.0, 6.0)).unwrap(), 3);
        vals[12] = 0.1;
        vals[10] = 2.0;
        vals[14] = 2.0;
        assert_eq!(peak_bin(&mk(&vals), (0, 1), (0.0, 32.0)).unwrap(), 10);
        assert!(matches!(peak_bin(&spectra, (0, 1), (6.5, 7.5)), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_non_hermitian() {
        let re = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(CrossSpectrum::from_parts(0.0, &re, &DMatrix::zeros(2, 2)), Err(Error::Input(_))));
        let im = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(CrossSpectrum::from_parts(0.0, &DMatrix::identity(2, 2), &im).is_err());
    }
}
