//! Zero-phase FIR band-pass filter.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{hamming_window, TimeSeriesSet};

pub const FIR_TAPS: usize = 64;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn check_band(f_lo: f64, f_hi: f64, sampling_rate: f64) -> Result<()> {
    if f_lo > 0.0 && f_lo < f_hi && f_hi < sampling_rate / 2.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "band ({f_lo}, {f_hi}) Hz must satisfy 0 < lo < hi < {}",
            sampling_rate / 2.0
        )))
    }
}

/// Window-method band-pass taps: ideal band-pass impulse response times a
/// Hamming window, scaled to unit gain at the band centre.
pub fn bandpass_taps(f_lo: f64, f_hi: f64, sampling_rate: f64, taps: usize) -> Result<Vec<f64>> {
    check_band(f_lo, f_hi, sampling_rate)?;
    if taps < 2 {
        return Err(Error::Config(format!("filter needs at least 2 taps, got {taps}")));
    }
    let (lo, hi) = (f_lo / sampling_rate, f_hi / sampling_rate);
    let centre = (taps - 1) as f64 / 2.0;
    let window = hamming_window(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = k as f64 - centre;
            (2.0 * hi * sinc(2.0 * hi * t) - 2.0 * lo * sinc(2.0 * lo * t)) * window[k]
        })
        .collect();
    let gain = frequency_response(&h, (lo + hi) / 2.0 * sampling_rate, sampling_rate);
    h.iter_mut().for_each(|v| *v /= gain);
    Ok(h)
}

/// `|H(f)|` of an FIR filter.
pub fn frequency_response(taps: &[f64], frequency_hz: f64, sampling_rate: f64) -> f64 {
    let w = 2.0 * PI * frequency_hz / sampling_rate;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, h)| {
        let phase = w * k as f64;
        (re + h * phase.cos(), im - h * phase.sin())
    });
    re.hypot(im)
}

/// Causal FIR filtering with zero initial conditions, output length = input.
fn fir_causal(taps: &[f64], x: &[f64], out: &mut [f64]) {
    for (t, slot) in out.iter_mut().enumerate() {
        let reach = taps.len().min(t + 1);
        *slot = (0..reach).map(|k| taps[k] * x[t - k]).sum();
    }
}

/// Forward-backward filtering of one channel; the response is `|H|²` with
/// zero phase. Edge transients of about one filter length remain at both ends.
pub fn filtfilt(taps: &[f64], x: &[f64]) -> Vec<f64> {
    let mut forward = vec![0.0; x.len()];
    fir_causal(taps, x, &mut forward);
    forward.reverse();
    let mut backward = vec![0.0; x.len()];
    fir_causal(taps, &forward, &mut backward);
    backward.reverse();
    backward
}

/// Zero-phase band-pass of every channel with the 64-tap Hamming FIR.
pub fn bandpass(series: &TimeSeriesSet, f_lo: f64, f_hi: f64) -> Result<TimeSeriesSet> {
    let taps = bandpass_taps(f_lo, f_hi, series.sampling_rate(), FIR_TAPS)?;
    let mut out = DMatrix::zeros(series.len(), series.channels());
    for c in 0..series.channels() {
        out.column_mut(c).copy_from_slice(&filtfilt(&taps, series.channel(c)));
    }
    TimeSeriesSet::new(out, series.sampling_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(freq: f64, len: usize) -> TimeSeriesSet {
        let x = DMatrix::from_fn(len, 1, |t, _| (2.0 * PI * freq * t as f64 / 256.0).cos());
        TimeSeriesSet::new(x, 256.0).unwrap()
    }

    fn interior_amplitude(y: &TimeSeriesSet) -> f64 {
        let x = y.channel(0);
        x[256..x.len() - 256].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn passband_amplitude_is_preserved() {
        let y = bandpass(&cosine(10.0, 2048), 8.0, 12.0).unwrap();
        let a = interior_amplitude(&y);
        assert!((a - 1.0).abs() < 0.05, "amplitude {a}");
    }

    #[test]
    fn stopband_is_attenuated() {
        let y = bandpass(&cosine(40.0, 2048), 8.0, 12.0).unwrap();
        let a = interior_amplitude(&y);
        assert!(20.0 * a.log10() <= -20.0, "amplitude {a}");
    }

    #[test]
    fn response_oracle() {
        let h = bandpass_taps(8.0, 12.0, 256.0, FIR_TAPS).unwrap();
        assert!((frequency_response(&h, 10.0, 256.0) - 1.0).abs() < 1e-12);
        assert!(frequency_response(&h, 40.0, 256.0) < 0.1);
        // linear phase
        for k in 0..FIR_TAPS / 2 {
            assert!((h[k] - h[FIR_TAPS - 1 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let z = TimeSeriesSet::new(DMatrix::zeros(300, 2), 256.0).unwrap();
        assert!(bandpass(&z, 8.0, 12.0).unwrap().samples().amax() == 0.0);
    }

    #[test]
    fn invalid_band() {
        let x = cosine(10.0, 300);
        for (lo, hi) in [(0.0, 12.0), (12.0, 8.0), (8.0, 128.0), (-1.0, 5.0)] {
            assert!(matches!(bandpass(&x, lo, hi), Err(Error::Config(_))));
        }
    }
}
