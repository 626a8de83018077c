//! Localization error of estimated connectivity and sparsity statistics.
//!
//! Only the strict upper triangle `i < j` of a spectrum part is treated as
//! connectivity; diagonal power entries never count.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::CrossSpectrum;

/// Default threshold fraction of the largest off-diagonal magnitude.
pub const DEFAULT_FRACTION: f64 = 0.5;

pub type Position = [f64; 3];

/// Supra-threshold off-diagonal entries `(i, j, |part_ij|)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionSet {
    pub pairs: Vec<(usize, usize, f64)>,
    /// `τ = fraction · max_{i<j} |part_ij|`, zero for an all-zero triangle.
    pub threshold: f64,
    /// Largest off-diagonal magnitude.
    pub max_weight: f64,
}

impl ConnectionSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold fraction must lie in (0, 1], got {fraction}")))
    }
}

fn check_square(part: &DMatrix<f64>) -> Result<()> {
    if part.is_square() {
        Ok(())
    } else {
        Err(Error::Shape {
            context: "spectrum part",
            expected: part.nrows(),
            actual: part.ncols(),
        })
    }
}

/// Off-diagonal entries with `|part_ij| ≥ fraction · max_{i<j} |part_ij|`.
pub fn supra_threshold(part: &DMatrix<f64>, fraction: f64) -> Result<ConnectionSet> {
    check_fraction(fraction)?;
    check_square(part)?;
    let n = part.nrows();
    let max_weight = (0..n)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .map(|(i, j)| part[(i, j)].abs())
        .fold(0.0, f64::max);
    if max_weight == 0.0 {
        return Ok(ConnectionSet {
            pairs: Vec::new(),
            threshold: 0.0,
            max_weight,
        });
    }
    let threshold = fraction * max_weight;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = part[(i, j)].abs();
            if w >= threshold {
                pairs.push((i, j, w));
            }
        }
    }
    Ok(ConnectionSet {
        pairs,
        threshold,
        max_weight,
    })
}

/// Order-invariant distance between two location pairs:
/// `sqrt(½ min(‖(w_i, w_j) − (v_p, v_q)‖², ‖(w_i, w_j) − (v_q, v_p)‖²))`.
pub fn pair_distance(w: (Position, Position), v: (Position, Position)) -> f64 {
    let sq = |a: &Position, b: &Position| (Vector3::from(*a) - Vector3::from(*b)).norm_squared();
    let straight = sq(&w.0, &v.0) + sq(&w.1, &v.1);
    let swapped = sq(&w.0, &v.1) + sq(&w.1, &v.0);
    (0.5 * straight.min(swapped)).sqrt()
}

/// Weighted localization error of the supra-threshold connections of `part`:
/// each connection contributes `|part_ij| / max |part|` times its pair
/// distance to the nearest true pair. An empty reconstruction scores 0.
pub fn err_metric(
    part: &DMatrix<f64>,
    positions: &[Position],
    true_pairs: &[(Position, Position)],
    fraction: f64,
) -> Result<f64> {
    Ok(err_with_connections(part, positions, true_pairs, fraction)?.0)
}

fn err_with_connections(
    part: &DMatrix<f64>,
    positions: &[Position],
    true_pairs: &[(Position, Position)],
    fraction: f64,
) -> Result<(f64, ConnectionSet)> {
    if true_pairs.is_empty() {
        return Err(Error::Config("the set of true pairs must not be empty".into()));
    }
    let set = supra_threshold(part, fraction)?;
    if positions.len() != part.nrows() {
        return Err(Error::Shape {
            context: "reconstruction positions",
            expected: part.nrows(),
            actual: positions.len(),
        });
    }
    let err = set
        .pairs
        .iter()
        .map(|&(i, j, w)| {
            let nearest = true_pairs
                .iter()
                .map(|&t| pair_distance((positions[i], positions[j]), t))
                .fold(f64::INFINITY, f64::min);
            w / set.max_weight * nearest
        })
        .sum();
    Ok((err, set))
}

/// Errors and connection counts of the real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub err_re: f64,
    pub err_im: f64,
    pub count_re: usize,
    pub count_im: usize,
    pub has_nonnull_re: bool,
    pub has_nonnull_im: bool,
}

impl EvalReport {
    pub fn total_error(&self) -> f64 {
        self.err_re + self.err_im
    }

    pub fn count(&self, part: Part) -> usize {
        match part {
            Part::Re => self.count_re,
            Part::Im => self.count_im,
        }
    }

    pub fn has_nonnull(&self, part: Part) -> bool {
        match part {
            Part::Re => self.has_nonnull_re,
            Part::Im => self.has_nonnull_im,
        }
    }

    pub fn error(&self, part: Part) -> f64 {
        match part {
            Part::Re => self.err_re,
            Part::Im => self.err_im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub const BOTH: [Part; 2] = [Part::Re, Part::Im];

    pub fn label(self) -> &'static str {
        match self {
            Part::Re => "re",
            Part::Im => "im",
        }
    }
}

/// Scores an estimate on the coarse source space against true pairs given as
/// fine-space indices.
pub fn evaluate(
    estimate: &CrossSpectrum,
    true_pairs_fine: &[(usize, usize)],
    positions_fine: &[Position],
    positions_coarse: &[Position],
    fraction: f64,
) -> Result<EvalReport> {
    let truth = true_pairs_fine
        .iter()
        .map(|&(a, b)| match (positions_fine.get(a), positions_fine.get(b)) {
            (Some(pa), Some(pb)) => Ok((*pa, *pb)),
            _ => Err(Error::Input(format!(
                "true pair ({a}, {b}) outside {} fine sources",
                positions_fine.len()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let (err_re, re) = err_with_connections(&estimate.real_part(), positions_coarse, &truth, fraction)?;
    let (err_im, im) = err_with_connections(&estimate.imag_part(), positions_coarse, &truth, fraction)?;
    Ok(EvalReport {
        err_re,
        err_im,
        count_re: re.len(),
        count_im: im.len(),
        has_nonnull_re: !re.is_empty(),
        has_nonnull_im: !im.is_empty(),
    })
}

/// One row-triple of the sparsity table for a group of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub runs: usize,
    /// Percentage of runs with at least one nonzero off-diagonal entry.
    pub nonnull_percent: f64,
    /// Supra-threshold count range over non-null runs.
    pub count_range: Option<(usize, usize)>,
    /// Mean count over non-null runs.
    pub mean_count: Option<f64>,
}

pub fn sparsity_stats(reports: &[EvalReport], part: Part) -> SparsityStats {
    let counts: Vec<usize> = reports
        .iter()
        .filter(|r| r.has_nonnull(part))
        .map(|r| r.count(part))
        .collect();
    let nonnull_percent = if reports.is_empty() {
        0.0
    } else {
        100.0 * counts.len() as f64 / reports.len() as f64
    };
    let count_range = counts
        .iter()
        .copied()
        .min()
        .zip(counts.iter().copied().max());
    let mean_count = (!counts.is_empty()).then(|| counts.iter().sum::<usize>() as f64 / counts.len() as f64);
    SparsityStats {
        runs: reports.len(),
        nonnull_percent,
        count_range,
        mean_count,
    }
}

/// Runs of one configuration at one regularization level.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityGroup {
    pub configuration: u8,
    pub lambda_scale: f64,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub configuration: u8,
    pub lambda_scale: f64,
    pub part: Part,
    pub stats: SparsityStats,
}

/// Sparsity statistics per group and part; empty groups are skipped.
pub fn sparsity_table(groups: &[SparsityGroup]) -> Vec<SparsityRow> {
    groups
        .iter()
        .filter(|g| !g.reports.is_empty())
        .flat_map(|g| {
            Part::BOTH.map(|part| SparsityRow {
                configuration: g.configuration,
                lambda_scale: g.lambda_scale,
                part,
                stats: sparsity_stats(&g.reports, part),
            })
        })
        .collect()
}

/// Index of the candidate minimizing `Err^Re + Err^Im`; ties go to the lowest
/// `λ`. Candidates are `(λ, report)`.
pub fn select_best(candidates: &[(f64, EvalReport)]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.1.total_error()
                .total_cmp(&b.1.total_error())
                .then(a.0.total_cmp(&b.0))
        })
        .map(|(k, _)| k)
}

/// Lower quartile, median and upper quartile with linear interpolation
/// between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quartiles {
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, v) in entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    fn line(n: usize) -> Vec<Position> {
        (0..n).map(|k| [0.01 * k as f64, 0.0, 0.0]).collect()
    }

    #[test]
    fn threshold_examples() {
        let zero = supra_threshold(&DMatrix::zeros(4, 4), 0.5).unwrap();
        assert!(zero.is_empty());
        assert_eq!(zero.threshold, 0.0);
        let one = supra_threshold(&sym(4, &[(1, 3, -0.2)]), 0.5).unwrap();
        assert_eq!(one.pairs, vec![(1, 3, 0.2)]);
        let three = supra_threshold(&sym(4, &[(0, 1, 1.0), (0, 2, 0.6), (2, 3, 0.4)]), 0.5).unwrap();
        assert_eq!(three.threshold, 0.5);
        assert_eq!(three.pairs, vec![(0, 1, 1.0), (0, 2, 0.6)]);
    }

    #[test]
    fn diagonal_is_ignored() {
        let mut m = sym(3, &[(0, 1, 0.1)]);
        m[(2, 2)] = 50.0;
        let set = supra_threshold(&m, 0.5).unwrap();
        assert_eq!(set.pairs, vec![(0, 1, 0.1)]);
    }

    #[test]
    fn pair_distance_examples() {
        let a = [0.0, 0.0, 0.0];
        let b = [1.0, 0.0, 0.0];
        assert_eq!(pair_distance((a, b), (a, b)), 0.0);
        assert_eq!(pair_distance((a, b), (b, a)), 0.0);
        assert!((pair_distance((a, b), (a, a)) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn err_examples() {
        let pos = line(4);
        let truth = [(pos[0], pos[1])];
        let exact = sym(4, &[(0, 1, 2.0)]);
        assert_eq!(err_metric(&exact, &pos, &truth, 0.5).unwrap(), 0.0);
        assert_eq!(err_metric(&DMatrix::zeros(4, 4), &pos, &truth, 0.5).unwrap(), 0.0);
        // both endpoints 3 cm from the true pair
        let shifted: Vec<Position> = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.03, 0.0, 0.0], [0.03, 0.0, 0.0]];
        let truth = [([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])];
        let m = sym(4, &[(2, 3, 1.0)]);
        assert!((err_metric(&m, &shifted, &truth, 0.5).unwrap() - 0.03).abs() < 1e-15);
        assert!(matches!(err_metric(&exact, &pos, &[], 0.5), Err(Error::Config(_))));
        assert!(err_metric(&exact, &pos, &[(pos[0], pos[1])], 0.0).is_err());
    }

    #[test]
    fn evaluate_with_snapping_distance() {
        let fine: Vec<Position> = (0..6).map(|k| [0.01 * k as f64, 0.0, 0.0]).collect();
        // coarse keeps fine 0, 2, 4
        let coarse = vec![fine[0], fine[2], fine[4]];
        let true_pairs = [(1, 5)];
        // each endpoint snaps 1 cm
        let est = CrossSpectrum::from_parts(10.0, &sym(3, &[(0, 2, 1.0)]), &DMatrix::zeros(3, 3)).unwrap();
        let r = evaluate(&est, &true_pairs, &fine, &coarse, 0.5).unwrap();
        let expected = pair_distance((coarse[0], coarse[2]), (fine[1], fine[5]));
        assert!((r.err_re - expected).abs() < 1e-15);
        assert!((expected - 0.01).abs() < 1e-12);
        assert_eq!((r.count_re, r.count_im), (1, 0));
        assert!(r.has_nonnull_re && !r.has_nonnull_im);
        let zero = CrossSpectrum::zeros(10.0, 3);
        let z = evaluate(&zero, &true_pairs, &fine, &coarse, 0.5).unwrap();
        assert_eq!((z.err_re, z.err_im, z.has_nonnull_re, z.has_nonnull_im), (0.0, 0.0, false, false));
        assert!(evaluate(&zero, &[(1, 9)], &fine, &coarse, 0.5).is_err());
    }

    fn report(count: usize) -> EvalReport {
        EvalReport {
            err_re: 0.0,
            err_im: 0.0,
            count_re: count,
            count_im: 0,
            has_nonnull_re: count > 0,
            has_nonnull_im: false,
        }
    }

    #[test]
    fn sparsity_examples() {
        let null = sparsity_stats(&[report(0), report(0)], Part::Re);
        assert_eq!((null.nonnull_percent, null.count_range, null.mean_count), (0.0, None, None));
        let single = sparsity_stats(&[report(4)], Part::Re);
        assert_eq!((single.nonnull_percent, single.count_range, single.mean_count), (100.0, Some((4, 4)), Some(4.0)));
        let mixed = sparsity_stats(&[report(1), report(0), report(3), report(5)], Part::Re);
        assert_eq!((mixed.nonnull_percent, mixed.count_range, mixed.mean_count), (75.0, Some((1, 5)), Some(3.0)));
        assert!(sparsity_table(&[]).is_empty());
        let rows = sparsity_table(&[SparsityGroup { configuration: 1, lambda_scale: 0.1, reports: vec![report(2)] }]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].part, Part::Im);
    }

    #[test]
    fn best_lambda_selection() {
        let with_err = |e: f64| EvalReport { err_re: e, err_im: e, ..report(1) };
        assert_eq!(select_best(&[(0.3, with_err(1.0))]), Some(0));
        let tied = [(0.3, with_err(0.5)), (0.1, with_err(0.5)), (0.2, with_err(0.9))];
        assert_eq!(select_best(&tied), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn quartile_interpolation() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        assert_eq!(quartiles(&[7.0]).unwrap().median, 7.0);
        assert!(quartiles(&[]).is_none());
    }
}
