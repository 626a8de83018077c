use nalgebra::DMatrix;
use proptest::prelude::*;

use sparse_cps::fista::{fista_solve, lambda_star, shrink, symmetric_defect, FistaConfig};
use sparse_cps::kron::{lipschitz_constant, KronOperator, LeadField, POWER_ITERATION_TOL};
use sparse_cps::metrics::{err_metric, pair_distance, supra_threshold, Position};
use sparse_cps::spectral::{CrossSpectrum, TimeSeriesSet};
use sparse_cps::two_step::TikhonovInverse;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

fn square(min: usize, max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (min..=max).prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v)))
}

fn nonzero_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(max_rows, max_cols).prop_filter("lead field must be nonzero", |g| g.amax() > 1e-3)
}

fn position() -> impl Strategy<Value = Position> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hermitian `B Bᵀ` real part with an antisymmetric imaginary part.
fn hermitian_from(b: &DMatrix<f64>) -> CrossSpectrum {
    let re = b * b.transpose();
    let im = b - b.transpose();
    CrossSpectrum::from_parts(10.0, &re, &im).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kron_transpose_is_adjoint(g in nonzero_matrix(6, 6), seed in any::<u64>()) {
        let (m, n) = g.shape();
        let op = KronOperator::new(LeadField::new(g).unwrap());
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let x: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let y: Vec<f64> = (0..m * m).map(|_| next()).collect();
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.apply_transpose(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn shrink_is_odd_and_contracts(x in prop::collection::vec(-5.0f64..5.0, 1..40), alpha in 0.0f64..3.0) {
        let out = shrink(&x, alpha);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let out_neg = shrink(&neg, alpha);
        for ((o, on), v) in out.iter().zip(&out_neg).zip(&x) {
            prop_assert_eq!(*o, -*on);
            prop_assert!(o.abs() <= v.abs());
            prop_assert!((o.abs() - (v.abs() - alpha).max(0.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn shrink_preserves_symmetry(b in square(1, 6), alpha in 0.0f64..2.0) {
        let n = b.nrows();
        let s = &b + b.transpose();
        let out = shrink(s.as_slice(), alpha);
        prop_assert_eq!(symmetric_defect(&out, n), 0.0);
    }

    #[test]
    fn lipschitz_bounds_rayleigh_quotient(g in nonzero_matrix(6, 6), v in prop::collection::vec(-1.0f64..1.0, 6)) {
        let n = g.ncols();
        let v = nalgebra::DVector::from_column_slice(&v[..n]);
        prop_assume!(v.norm() > 1e-3);
        let lf = LeadField::new(g.clone()).unwrap();
        let l = lipschitz_constant(&lf, POWER_ITERATION_TOL).unwrap();
        let rq = (&g * &v).norm_squared() / v.norm_squared();
        prop_assert!(l >= 2.0 * rq * rq * (1.0 - 1e-8));
    }

    #[test]
    fn tikhonov_is_linear_and_shrinks(
        g in nonzero_matrix(6, 6),
        y in prop::collection::vec(-2.0f64..2.0, 4 * 6),
        z in prop::collection::vec(-2.0f64..2.0, 4 * 6),
        lambda in 1e-3f64..10.0,
    ) {
        let m = g.nrows();
        let inv = TikhonovInverse::new(&LeadField::new(g).unwrap());
        let series = |v: &[f64]| TimeSeriesSet::new(DMatrix::from_column_slice(4, m, &v[..4 * m]), 256.0).unwrap();
        let sum: Vec<f64> = y.iter().zip(&z).map(|(a, b)| 2.0 * a - b).collect();
        let xy = inv.estimate(&series(&y), lambda).unwrap().into_samples();
        let xz = inv.estimate(&series(&z), lambda).unwrap().into_samples();
        let xs = inv.estimate(&series(&sum), lambda).unwrap().into_samples();
        let combo = &xy * 2.0 - &xz;
        prop_assert!((&xs - &combo).amax() <= 1e-9 * (1.0 + combo.amax()));
        // Filter factors σ/(σ²+λ) decrease in λ, so the estimate norm does too.
        let stronger = inv.estimate(&series(&y), 10.0 * lambda).unwrap().into_samples();
        prop_assert!(stronger.norm() <= xy.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn pair_distance_is_symmetric(a in position(), b in position(), c in position(), d in position()) {
        let r = pair_distance((a, b), (c, d));
        prop_assert_eq!(r, pair_distance((c, d), (a, b)));
        prop_assert_eq!(r, pair_distance((b, a), (d, c)));
        prop_assert!(r >= 0.0);
        prop_assert_eq!(pair_distance((a, b), (b, a)), 0.0);
    }

    #[test]
    fn err_metric_is_nonincreasing_in_fraction(
        part in square(2, 8),
        seed_positions in prop::collection::vec(position(), 8),
        truth in (position(), position()),
        f1 in 0.05f64..1.0,
        f2 in 0.05f64..1.0,
    ) {
        let n = part.nrows();
        let positions = &seed_positions[..n];
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let e_lo = err_metric(&part, positions, &[truth], lo).unwrap();
        let e_hi = err_metric(&part, positions, &[truth], hi).unwrap();
        prop_assert!(e_hi <= e_lo);
        let set = supra_threshold(&part, lo).unwrap();
        for &(i, j, w) in &set.pairs {
            prop_assert!(i < j && j < n && w >= set.threshold);
        }
    }

    #[test]
    fn err_metric_is_permutation_equivariant(
        part in square(2, 7),
        seed_positions in prop::collection::vec(position(), 7),
        truth in (position(), position()),
        rotate in 0usize..7,
    ) {
        let n = part.nrows();
        let positions = &seed_positions[..n];
        let perm: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect();
        // Relabel source i as perm[i]; symmetrize so the upper triangle is
        // well defined under relabeling.
        let sym = &part + part.transpose();
        let mut permuted = DMatrix::zeros(n, n);
        let mut moved = vec![[0.0; 3]; n];
        for i in 0..n {
            moved[perm[i]] = positions[i];
            for j in 0..n {
                permuted[(perm[i], perm[j])] = sym[(i, j)];
            }
        }
        let a = err_metric(&sym, positions, &[truth], 0.5).unwrap();
        let b = err_metric(&permuted, &moved, &[truth], 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fista_never_ends_above_its_start(g in nonzero_matrix(4, 5), b in square(4, 4), kappa in 0.05f64..0.9, seed in any::<u64>()) {
        let m = g.nrows();
        let b = b.view((0, 0), (m, m)).into_owned();
        let observed = hermitian_from(&b);
        let op = KronOperator::new(LeadField::new(g).unwrap());
        let star = lambda_star(&op, &observed).unwrap();
        prop_assume!(star > 1e-9);
        let l = lipschitz_constant(op.lead_field(), POWER_ITERATION_TOL).unwrap();
        let cfg = FistaConfig { max_iterations: 500, seed, ..FistaConfig::new(kappa * star, l) };
        let result = fista_solve(&op, &observed, &cfg).unwrap();
        let trace = &result.objective_trace;
        prop_assert!(trace.last().unwrap() <= &(trace[0] * (1.0 + 1e-12)));
        prop_assert!(result.iterations_run <= 500);
        prop_assert_eq!(result.converged, result.final_change < cfg.tolerance);
    }
}
