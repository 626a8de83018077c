//! One-step estimator: ℓ1-regularized least squares on the split
//! real/imaginary vectorized cross-spectrum, solved with FISTA.
//!
//! The problem is
//!
//! ```text
//! min_s ‖𝒢 s − d‖² + λ ‖s‖₁,   𝒢 = diag(G ⊗ G, G ⊗ G),   d = (Re vec S_y, Im vec S_y)
//! ```
//!
//! Starting from a Hermitian matrix, every iterate stays the vectorization of
//! a symmetric (real block) and an antisymmetric (imaginary block) matrix, so
//! the estimate can be read back as a Hermitian cross-spectrum.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::kron::{KronOperator, KronWorkspace};
use crate::spectral::CrossSpectrum;

/// Absolute tolerance of the symmetry/antisymmetry invariants, scaled by
/// `max(1, ‖s‖∞)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub const DEFAULT_MAX_ITERATIONS: usize = 5000;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Split vectorization of a Hermitian `n × n` matrix: `s1 = vec Re`, `s2 = vec Im`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpectrum {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub n: usize,
}

impl SplitSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self {
            s1: vec![0.0; n * n],
            s2: vec![0.0; n * n],
            n,
        }
    }

    pub fn from_cross_spectrum(spectrum: &CrossSpectrum) -> Self {
        Self {
            s1: spectrum.vec_re(),
            s2: spectrum.vec_im(),
            n: spectrum.channel_count(),
        }
    }

    pub fn to_cross_spectrum(&self, frequency_hz: f64) -> Result<CrossSpectrum> {
        let re = nalgebra::DMatrix::from_column_slice(self.n, self.n, &self.s1);
        let im = nalgebra::DMatrix::from_column_slice(self.n, self.n, &self.s2);
        CrossSpectrum::from_parts(frequency_hz, &re, &im)
    }

    /// Largest deviation from symmetry of `s1` and from antisymmetry of `s2`.
    pub fn symmetry_defect(&self) -> (f64, f64) {
        (symmetric_defect(&self.s1, self.n), antisymmetric_defect(&self.s2, self.n))
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let (a, b) = self.symmetry_defect();
        a <= tol && b <= tol
    }

    pub fn l1_norm(&self) -> f64 {
        l1(&self.s1) + l1(&self.s2)
    }

    pub fn max_abs(&self) -> f64 {
        self.s1.iter().chain(&self.s2).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.s1.iter().chain(&self.s2).all(|&v| v == 0.0)
    }

    /// Number of strictly nonzero entries over both blocks.
    pub fn nonzero_count(&self) -> usize {
        self.s1.iter().chain(&self.s2).filter(|v| **v != 0.0).count()
    }
}

/// `max_{i,j} |v[n j + i] − v[n i + j]|`.
pub fn symmetric_defect(v: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((v[n * j + i] - v[n * i + j]).abs());
        }
    }
    worst
}

/// `max_{i,j} |v[n j + i] + v[n i + j]|`, diagonal included.
pub fn antisymmetric_defect(v: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((v[n * j + i] + v[n * i + j]).abs());
        }
    }
    worst
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Soft threshold `(|x| − α)⁺ sign(x)`.
pub fn shrink(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().map(|&v| shrink_scalar(v, alpha)).collect()
}

#[inline]
fn shrink_scalar(v: f64, alpha: f64) -> f64 {
    if v > alpha {
        v - alpha
    } else if v < -alpha {
        v + alpha
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaConfig {
    /// ℓ1 weight λ.
    pub lambda: f64,
    /// Lipschitz constant `L` of the gradient of the data term.
    pub lipschitz: f64,
    pub max_iterations: usize,
    /// Threshold on the relative ℓ1 change between successive iterates.
    pub tolerance: f64,
    /// Seed of the random Hermitian initialization.
    pub seed: u64,
}

impl FistaConfig {
    pub fn new(lambda: f64, lipschitz: f64) -> Self {
        Self {
            lambda,
            lipschitz,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.lipschitz > 0.0) || !self.lipschitz.is_finite() {
            return Err(Error::Config(format!(
                "Lipschitz constant must be positive, got {}",
                self.lipschitz
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FistaResult {
    pub estimate: SplitSpectrum,
    pub iterations_run: usize,
    /// Last relative change `e`.
    pub final_change: f64,
    pub converged: bool,
    /// Objective at the initial point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
}

/// Snapshot handed to an observer after initialization (`iteration == 0`)
/// and after every iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterateView<'a> {
    pub iteration: usize,
    pub s1: &'a [f64],
    pub s2: &'a [f64],
    pub w1: &'a [f64],
    pub w2: &'a [f64],
    pub change: f64,
    pub objective: f64,
}

/// `‖(G⊗G)s1 − d_re‖² + ‖(G⊗G)s2 − d_im‖² + λ(‖s1‖₁ + ‖s2‖₁)`.
pub fn objective(
    op: &KronOperator,
    s: &SplitSpectrum,
    data_re: &[f64],
    data_im: &[f64],
    lambda: f64,
) -> Result<f64> {
    let m2 = op.n_sensors().pow(2);
    check_len("objective data (real)", m2, data_re.len())?;
    check_len("objective data (imaginary)", m2, data_im.len())?;
    let (a1, a2) = op.apply_block(&s.s1, &s.s2)?;
    Ok(sq_dist(&a1, data_re) + sq_dist(&a2, data_im) + lambda * s.l1_norm())
}

/// Gradient `2 𝒢ᵀ(𝒢 s − d)` of the data term.
pub fn data_gradient(
    op: &KronOperator,
    s: &SplitSpectrum,
    data_re: &[f64],
    data_im: &[f64],
) -> Result<SplitSpectrum> {
    let (mut r1, mut r2) = op.apply_block(&s.s1, &s.s2)?;
    check_len("gradient data (real)", r1.len(), data_re.len())?;
    check_len("gradient data (imaginary)", r2.len(), data_im.len())?;
    for (r, d) in r1.iter_mut().zip(data_re) {
        *r = 2.0 * (*r - d);
    }
    for (r, d) in r2.iter_mut().zip(data_im) {
        *r = 2.0 * (*r - d);
    }
    let (g1, g2) = op.apply_block_transpose(&r1, &r2)?;
    Ok(SplitSpectrum { s1: g1, s2: g2, n: s.n })
}

/// Split vectorization of `(A + Aᴴ)/2` with `A` having i.i.d. standard normal
/// real and imaginary parts. Draw order is column-major, real before imaginary.
pub fn random_hermitian_init(n: usize, seed: u64) -> SplitSpectrum {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for k in 0..n * n {
        re[k] = StandardNormal.sample(&mut rng);
        im[k] = StandardNormal.sample(&mut rng);
    }
    let mut out = SplitSpectrum::zeros(n);
    for j in 0..n {
        for i in 0..n {
            let (a, b) = (n * j + i, n * i + j);
            out.s1[a] = 0.5 * (re[a] + re[b]);
            out.s2[a] = 0.5 * (im[a] - im[b]);
        }
    }
    out
}

/// Regularization level above which the zero vector solves the problem:
/// `2 ‖𝒢ᵀ d‖∞`.
pub fn lambda_star(op: &KronOperator, observed: &CrossSpectrum) -> Result<f64> {
    check_len("observed spectrum", op.n_sensors(), observed.channel_count())?;
    let (g1, g2) = op.apply_block_transpose(&observed.vec_re(), &observed.vec_im())?;
    Ok(2.0 * g1.iter().chain(&g2).fold(0.0f64, |m, v| m.max(v.abs())))
}

/// The four scaling factors evenly spaced in log-space over `[1e-2, 1e-1]`.
pub fn default_scaling_factors() -> Vec<f64> {
    (0..4).map(|k| 10f64.powf(-2.0 + k as f64 / 3.0)).collect()
}

/// Runs FISTA from a random Hermitian matrix seeded by `cfg.seed`.
pub fn fista_solve(op: &KronOperator, observed: &CrossSpectrum, cfg: &FistaConfig) -> Result<FistaResult> {
    fista_solve_observed(op, observed, cfg, |_| {})
}

/// [`fista_solve`] with a callback receiving every iterate.
pub fn fista_solve_observed(
    op: &KronOperator,
    observed: &CrossSpectrum,
    cfg: &FistaConfig,
    observer: impl FnMut(&IterateView<'_>),
) -> Result<FistaResult> {
    let init = random_hermitian_init(op.n_sources(), cfg.seed);
    fista_solve_from(op, observed, cfg, init, observer)
}

/// FISTA from an explicit Hermitian starting point.
pub fn fista_solve_from(
    op: &KronOperator,
    observed: &CrossSpectrum,
    cfg: &FistaConfig,
    init: SplitSpectrum,
    mut observer: impl FnMut(&IterateView<'_>),
) -> Result<FistaResult> {
    cfg.validate()?;
    let (m, n) = (op.n_sensors(), op.n_sources());
    check_len("observed spectrum", m, observed.channel_count())?;
    check_len("initial iterate", n, init.n)?;
    check_len("initial iterate (real)", n * n, init.s1.len())?;
    check_len("initial iterate (imaginary)", n * n, init.s2.len())?;
    let init_scale = init.max_abs().max(1.0);
    if !init.is_valid(SYMMETRY_TOL * init_scale) {
        return Err(Error::Input("initial iterate is not Hermitian".into()));
    }

    let data = [observed.vec_re(), observed.vec_im()];
    let mut ws = KronWorkspace::default();
    let step = 2.0 / cfg.lipschitz;
    let threshold = cfg.lambda / cfg.lipschitz;

    // Per block: s_{k-1}, s_k, w, and the images 𝒢s_{k-1}, 𝒢s_k, 𝒢w. Since w is
    // an affine combination of s_k and s_{k-1}, 𝒢w is formed from their images
    // and each iteration costs one forward and one transposed product per block.
    let mut s_prev = [init.s1, init.s2];
    let mut w = s_prev.clone();
    let mut s_next = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut img_prev = [vec![0.0; m * m], vec![0.0; m * m]];
    for b in 0..2 {
        op.apply_into(&s_prev[b], &mut img_prev[b], &mut ws)?;
    }
    let mut img_w = img_prev.clone();
    let mut img_next = [vec![0.0; m * m], vec![0.0; m * m]];
    let mut residual = vec![0.0; m * m];
    let mut grad = vec![0.0; n * n];

    let objective_of = |img: &[Vec<f64>; 2], s: &[Vec<f64>; 2]| {
        sq_dist(&img[0], &data[0]) + sq_dist(&img[1], &data[1]) + cfg.lambda * (l1(&s[0]) + l1(&s[1]))
    };
    let mut trace = Vec::with_capacity(cfg.max_iterations.min(100_000) + 1);
    trace.push(objective_of(&img_prev, &s_prev));
    observer(&IterateView {
        iteration: 0,
        s1: &s_prev[0],
        s2: &s_prev[1],
        w1: &w[0],
        w2: &w[1],
        change: f64::INFINITY,
        objective: trace[0],
    });

    let mut t_prev = 1.0f64;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        for b in 0..2 {
            for ((r, a), d) in residual.iter_mut().zip(&img_w[b]).zip(&data[b]) {
                *r = a - d;
            }
            op.apply_transpose_into(&residual, &mut grad, &mut ws)?;
            // 𝒢ᵀ𝒢 maps (anti)symmetric to (anti)symmetric only in exact
            // arithmetic; pairing mirrored entries stops rounding from drifting
            // along the null space of 𝒢 under momentum.
            if b == 0 {
                symmetrize_in_place(&mut grad, n);
            } else {
                antisymmetrize_in_place(&mut grad, n);
            }
            for ((s, wv), g) in s_next[b].iter_mut().zip(&w[b]).zip(&grad) {
                *s = shrink_scalar(wv - step * g, threshold);
            }
        }
        for i in 0..n {
            s_next[1][i * n + i] = 0.0;
        }
        for b in 0..2 {
            op.apply_into(&s_next[b], &mut img_next[b], &mut ws)?;
        }

        let t = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let beta = (t_prev - 1.0) / t;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for b in 0..2 {
            for ((wv, s), sp) in w[b].iter_mut().zip(&s_next[b]).zip(&s_prev[b]) {
                *wv = s + beta * (s - sp);
                diff += (s - sp).abs();
                norm += s.abs();
            }
            for ((a, an), ap) in img_w[b].iter_mut().zip(&img_next[b]).zip(&img_prev[b]) {
                *a = an + beta * (an - ap);
            }
        }
        change = if norm > 0.0 {
            diff / norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        trace.push(objective_of(&img_next, &s_next));

        debug_assert!(
            iterate_is_hermitian(&s_next, n) && iterate_is_hermitian(&w, n),
            "FISTA iterate {iterations} lost its Hermitian structure"
        );
        observer(&IterateView {
            iteration: iterations,
            s1: &s_next[0],
            s2: &s_next[1],
            w1: &w[0],
            w2: &w[1],
            change,
            objective: *trace.last().unwrap(),
        });

        std::mem::swap(&mut s_prev, &mut s_next);
        std::mem::swap(&mut img_prev, &mut img_next);
        t_prev = t;
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let [s1, s2] = s_prev;
    let estimate = SplitSpectrum { s1, s2, n };
    assert!(
        estimate.is_valid(SYMMETRY_TOL * estimate.max_abs().max(1.0)),
        "FISTA estimate lost its Hermitian structure"
    );
    Ok(FistaResult {
        estimate,
        iterations_run: iterations,
        final_change: change,
        converged,
        objective_trace: trace,
    })
}

fn symmetrize_in_place(v: &mut [f64], n: usize) {
    for j in 0..n {
        for i in 0..j {
            let mean = 0.5 * (v[n * j + i] + v[n * i + j]);
            v[n * j + i] = mean;
            v[n * i + j] = mean;
        }
    }
}

fn antisymmetrize_in_place(v: &mut [f64], n: usize) {
    for j in 0..n {
        for i in 0..j {
            let half = 0.5 * (v[n * j + i] - v[n * i + j]);
            v[n * j + i] = half;
            v[n * i + j] = -half;
        }
        v[n * j + j] = 0.0;
    }
}

fn iterate_is_hermitian(blocks: &[Vec<f64>; 2], n: usize) -> bool {
    let scale = blocks[0]
        .iter()
        .chain(&blocks[1])
        .fold(1.0f64, |m, v| m.max(v.abs()));
    symmetric_defect(&blocks[0], n) <= SYMMETRY_TOL * scale
        && antisymmetric_defect(&blocks[1], n) <= SYMMETRY_TOL * scale
}

/// One FISTA solve per scaling factor `κ`, at `λ = κ λ*`.
///
/// With zero data (`λ* = 0`) the zero matrix is the unique minimizer for every
/// positive `λ`, and it is returned without iterating.
pub fn lambda_grid(
    op: &KronOperator,
    observed: &CrossSpectrum,
    scaling_factors: &[f64],
    template: &FistaConfig,
) -> Result<Vec<(f64, FistaResult)>> {
    if let Some(bad) = scaling_factors.iter().find(|k| !(**k > 0.0)) {
        return Err(Error::Config(format!("scaling factors must be positive, got {bad}")));
    }
    let star = lambda_star(op, observed)?;
    scaling_factors
        .iter()
        .map(|&kappa| {
            let lambda = kappa * star;
            if star == 0.0 {
                let n = op.n_sources();
                return Ok((
                    lambda,
                    FistaResult {
                        estimate: SplitSpectrum::zeros(n),
                        iterations_run: 0,
                        final_change: 0.0,
                        converged: true,
                        objective_trace: vec![0.0],
                    },
                ));
            }
            let cfg = FistaConfig { lambda, ..*template };
            fista_solve(op, observed, &cfg).map(|r| (lambda, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kron::{lipschitz_constant, LeadField};
    use nalgebra::DMatrix;

    fn scalar_op(g: f64) -> KronOperator {
        KronOperator::new(LeadField::new(DMatrix::from_element(1, 1, g)).unwrap())
    }

    fn real_spectrum(n: usize, data: &[f64]) -> CrossSpectrum {
        CrossSpectrum::from_parts(10.0, &DMatrix::from_row_slice(n, n, data), &DMatrix::zeros(n, n)).unwrap()
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(&[1.2, -0.3, 0.5], 0.5), vec![1.2 - 0.5, 0.0, 0.0]);
        assert_eq!(shrink(&[0.1, -0.2, 0.2], 0.2), vec![0.0; 3]);
        let x = [0.7, -1.9, 3.3, -0.01];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = shrink(&x, 0.4);
        let b = shrink(&neg, 0.4);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(*p, -*q);
        }
    }

    #[test]
    fn random_init_contract() {
        for n in [1, 2, 5] {
            let a = random_hermitian_init(n, 42);
            assert!(a.is_valid(0.0));
            assert_eq!(a, random_hermitian_init(n, 42));
        }
        assert_eq!(random_hermitian_init(1, 9).s2, vec![0.0]);
        assert_ne!(random_hermitian_init(3, 1), random_hermitian_init(3, 2));
    }

    #[test]
    fn objective_at_zero_is_data_energy() {
        let op = KronOperator::new(LeadField::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5])).unwrap());
        let re = [1.0, 2.0, 2.0, 3.0];
        let im = [0.0, -1.0, 1.0, 0.0];
        let v = objective(&op, &SplitSpectrum::zeros(2), &re, &im, 0.7).unwrap();
        assert!((v - (1.0 + 4.0 + 4.0 + 9.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn objective_vanishes_at_noiseless_preimage() {
        let op = KronOperator::new(LeadField::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.5, 0.0, 3.0])).unwrap());
        let s = random_hermitian_init(3, 5);
        let (re, im) = op.apply_block(&s.s1, &s.s2).unwrap();
        assert!(objective(&op, &s, &re, &im, 0.0).unwrap().abs() < 1e-24);
    }

    #[test]
    fn lambda_star_scalar_example() {
        let op = scalar_op(1.0);
        let obs = real_spectrum(1, &[4.0]);
        let star = lambda_star(&op, &obs).unwrap();
        assert_eq!(star, 8.0);
        // minimizer of (s − 4)² + λ|s| is (4 − λ/2)⁺
        let run = |lambda: f64| {
            let cfg = FistaConfig { tolerance: 1e-12, ..FistaConfig::new(lambda, 2.0) };
            fista_solve(&op, &obs, &cfg).unwrap().estimate.s1[0]
        };
        assert_eq!(run(8.0), 0.0);
        assert!((run(7.9) - 0.05).abs() < 1e-9);
        assert_eq!(lambda_star(&op, &real_spectrum(1, &[0.0])).unwrap(), 0.0);
    }

    #[test]
    fn zero_data_gives_zero_estimate() {
        let op = KronOperator::new(LeadField::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8])).unwrap());
        let lip = lipschitz_constant(op.lead_field(), 1e-10).unwrap();
        let obs = CrossSpectrum::zeros(10.0, 2);
        let cfg = FistaConfig::new(0.1, lip);
        let res = fista_solve_from(&op, &obs, &cfg, SplitSpectrum::zeros(2), |_| {}).unwrap();
        assert!(res.estimate.is_zero());
        assert_eq!(res.iterations_run, 1);
        assert!(res.converged);
        let res = fista_solve(&op, &obs, &cfg).unwrap();
        assert!(res.estimate.is_zero());
        let tail = &res.objective_trace[res.objective_trace.len() - 3..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn grid_edge_cases() {
        let op = scalar_op(1.0);
        let obs = real_spectrum(1, &[4.0]);
        let template = FistaConfig::new(1.0, 2.0);
        assert!(lambda_grid(&op, &obs, &[], &template).unwrap().is_empty());
        let one = lambda_grid(&op, &obs, &[1.0], &template).unwrap();
        assert_eq!(one[0].0, 8.0);
        assert!(one[0].1.estimate.is_zero());
        assert!(lambda_grid(&op, &obs, &[0.0], &template).is_err());
        let zero = lambda_grid(&op, &real_spectrum(1, &[0.0]), &[0.1], &template).unwrap();
        assert!(zero[0].1.estimate.is_zero());
    }

    #[test]
    fn default_factors_are_log_spaced() {
        let k = default_scaling_factors();
        assert_eq!(k.len(), 4);
        assert!((k[0] - 0.01).abs() < 1e-15 && (k[3] - 0.1).abs() < 1e-15);
        assert!((k[1] - 0.021544346900318832).abs() < 1e-15);
        assert!((k[2] - 0.046415888336127774).abs() < 1e-15);
    }

    #[test]
    fn configuration_errors() {
        let op = scalar_op(1.0);
        let obs = real_spectrum(1, &[4.0]);
        assert!(matches!(fista_solve(&op, &obs, &FistaConfig::new(1.0, 0.0)), Err(Error::Config(_))));
        assert!(matches!(fista_solve(&op, &obs, &FistaConfig::new(-1.0, 2.0)), Err(Error::Config(_))));
        let wrong = real_spectrum(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(fista_solve(&op, &wrong, &FistaConfig::new(1.0, 2.0)), Err(Error::Shape { .. })));
        let mut bad = SplitSpectrum::zeros(1);
        bad.s2[0] = 1.0;
        assert!(matches!(
            fista_solve_from(&op, &obs, &FistaConfig::new(1.0, 2.0), bad, |_| {}),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn split_round_trip() {
        let s = random_hermitian_init(4, 3);
        let cs = s.to_cross_spectrum(9.5).unwrap();
        assert_eq!(SplitSpectrum::from_cross_spectrum(&cs), s);
        assert_eq!(cs.frequency_hz(), 9.5);
    }

    #[test]
    fn gradient_pairing_helpers() {
        // column-major [[1, 2], [4, 3]]
        let mut v = vec![1.0, 4.0, 2.0, 3.0];
        symmetrize_in_place(&mut v, 2);
        assert_eq!(v, vec![1.0, 3.0, 3.0, 3.0]);
        let mut w = vec![1.0, 4.0, 2.0, 3.0];
        antisymmetrize_in_place(&mut w, 2);
        assert_eq!(w, vec![0.0, 1.0, -1.0, 0.0]);
        assert_eq!(antisymmetric_defect(&w, 2), 0.0);
    }
}
