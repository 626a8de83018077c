//! Plain-text file formats shared by the command-line stages.
//!
//! * Matrix (lead field): header `m n`, then `m` rows of `n` reals.
//! * Positions: `n` rows of 3 reals (meters), no header.
//! * Time series: header `T d fs`, then `T` rows of `d` reals.
//! * Cross-spectrum: JSON with `schema`, `frequency_hz`, `n` and row-major
//!   `re` / `im`.
//!
//! Reals are written in Rust's shortest round-trip form, so every file reads
//! back bit-identically. All writes go through a temporary file in the target
//! directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kron::LeadField;
use crate::spectral::{CrossSpectrum, TimeSeriesSet};

pub const CROSS_SPECTRUM_SCHEMA: &str = "sparse-cps/cross-spectrum/v1";

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_err(what: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        what: what.to_string(),
        reason: reason.into(),
    }
}

fn parse_row(what: &str, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| parse_err(what, format!("line {line_no}: `{tok}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if row.len() != expected {
        return Err(parse_err(
            what,
            format!("line {line_no}: expected {expected} values, found {}", row.len()),
        ));
    }
    Ok(row)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn format_rows(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    format_rows(&mut out, m);
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let what = "matrix";
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| parse_err(what, "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| parse_err(what, format!("header `{header}`: {e}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(what, format!("header must be `m n`, got `{header}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (no, line) in lines {
        data.extend(parse_row(what, no, line, cols)?);
        count += 1;
    }
    if count != rows {
        return Err(parse_err(what, format!("expected {rows} rows, found {count}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_positions(positions: &[[f64; 3]]) -> String {
    positions
        .iter()
        .map(|p| format!("{} {} {}\n", p[0], p[1], p[2]))
        .collect()
}

pub fn parse_positions(text: &str) -> Result<Vec<[f64; 3]>> {
    data_lines(text)
        .map(|(no, line)| parse_row("positions", no, line, 3).map(|r| [r[0], r[1], r[2]]))
        .collect()
}

pub fn write_leadfield(gain_path: &Path, positions_path: Option<&Path>, lf: &LeadField) -> Result<()> {
    write_atomic(gain_path, format_matrix(lf.gain()).as_bytes())?;
    if let (Some(path), Some(pos)) = (positions_path, lf.positions()) {
        write_atomic(path, format_positions(pos).as_bytes())?;
    }
    Ok(())
}

pub fn read_leadfield(gain_path: &Path, positions_path: Option<&Path>) -> Result<LeadField> {
    let gain = parse_matrix(&fs::read_to_string(gain_path)?)?;
    match positions_path {
        Some(p) => LeadField::with_positions(gain, parse_positions(&fs::read_to_string(p)?)?),
        None => LeadField::new(gain),
    }
}

pub fn format_time_series(series: &TimeSeriesSet) -> String {
    let mut out = format!("{} {} {}\n", series.len(), series.channels(), series.sampling_rate());
    format_rows(&mut out, series.samples());
    out
}

pub fn parse_time_series(text: &str) -> Result<TimeSeriesSet> {
    let what = "time series";
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| parse_err(what, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [t, d, fs] = fields[..] else {
        return Err(parse_err(what, format!("header must be `T d fs`, got `{header}`")));
    };
    let bad = |e: String| parse_err(what, format!("header `{header}`: {e}"));
    let t: usize = t.parse().map_err(|e| bad(format!("{e}")))?;
    let d: usize = d.parse().map_err(|e| bad(format!("{e}")))?;
    let fs: f64 = fs.parse().map_err(|e| bad(format!("{e}")))?;
    let mut data = Vec::with_capacity(t * d);
    let mut count = 0;
    for (no, line) in lines {
        data.extend(parse_row(what, no, line, d)?);
        count += 1;
    }
    if count != t {
        return Err(parse_err(what, format!("expected {t} rows, found {count}")));
    }
    TimeSeriesSet::new(DMatrix::from_row_slice(t, d, &data), fs)
}

pub fn write_time_series(path: &Path, series: &TimeSeriesSet) -> Result<()> {
    write_atomic(path, format_time_series(series).as_bytes())
}

pub fn read_time_series(path: &Path) -> Result<TimeSeriesSet> {
    parse_time_series(&fs::read_to_string(path)?)
}

/// Serialized form of a [`CrossSpectrum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSpectrumRecord {
    pub schema: String,
    pub frequency_hz: f64,
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CrossSpectrum> for CrossSpectrumRecord {
    fn from(s: &CrossSpectrum) -> Self {
        let rows = |m: DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self {
            schema: CROSS_SPECTRUM_SCHEMA.to_string(),
            frequency_hz: s.frequency_hz(),
            n: s.channel_count(),
            re: rows(s.real_part()),
            im: rows(s.imag_part()),
        }
    }
}

impl CrossSpectrumRecord {
    pub fn to_cross_spectrum(&self) -> Result<CrossSpectrum> {
        let what = "cross-spectrum";
        if self.schema != CROSS_SPECTRUM_SCHEMA {
            return Err(parse_err(what, format!("unsupported schema `{}`", self.schema)));
        }
        let n = self.n;
        let well_formed = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !well_formed(&self.re) || !well_formed(&self.im) {
            return Err(parse_err(what, format!("re and im must both be {n}x{n}")));
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| Complex64::new(self.re[i][j], self.im[i][j]));
        CrossSpectrum::new(self.frequency_hz, matrix)
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_pretty(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(&path.display().to_string(), e.to_string()))
}

pub fn write_cross_spectrum(path: &Path, s: &CrossSpectrum) -> Result<()> {
    write_json(path, &CrossSpectrumRecord::from(s))
}

pub fn read_cross_spectrum(path: &Path) -> Result<CrossSpectrum> {
    read_json::<CrossSpectrumRecord>(path)?.to_cross_spectrum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1e-300, 3.0, f64::MAX, 1.0 / 3.0, -0.0]);
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(back, m);
        assert!(format_matrix(&m).starts_with("2 3\n"));
    }

    #[test]
    fn malformed_matrices_are_rejected() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2 2\n1 2\n").is_err());
        assert!(parse_matrix("1 2\n1 2 3\n").is_err());
        assert!(parse_matrix("1 2\n1 x\n").is_err());
        assert!(parse_matrix("1\n1\n").is_err());
    }

    #[test]
    fn time_series_round_trip() {
        let ts = TimeSeriesSet::new(DMatrix::from_fn(5, 2, |t, c| (t as f64).sin() + c as f64), 128.5).unwrap();
        let back = parse_time_series(&format_time_series(&ts)).unwrap();
        assert_eq!(back, ts);
        assert!(parse_time_series("3 1 256\n1\n2\n").is_err());
    }

    #[test]
    fn cross_spectrum_round_trip() {
        let re = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]);
        let im = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        let s = CrossSpectrum::from_parts(10.0, &re, &im).unwrap();
        let json = to_json_pretty(&CrossSpectrumRecord::from(&s)).unwrap();
        let rec: CrossSpectrumRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(rec.to_cross_spectrum().unwrap(), s);
        assert_eq!(rec.im[0][1], -0.5);
        let mut bad = rec.clone();
        bad.schema = "other".into();
        assert!(bad.to_cross_spectrum().is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("sparse-cps-io-{}", std::process::id()));
        let path = dir.join("nested").join("m.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        let leftovers = fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
        fs::remove_dir_all(dir).unwrap();
    }
}
