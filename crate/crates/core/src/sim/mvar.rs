//! Three-channel MVAR ground truth with a fixed coupling pattern.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::TimeSeriesSet;

pub const MVAR_ORDER: usize = 5;
pub const COEFFICIENT_STD: f64 = 0.9;
pub const DRAW_CAP: usize = 10_000;
pub const STABILITY_TOL: f64 = 1e-10;

/// Coupling pattern of the three active sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Configuration {
    /// Source 1 drives source 2; source 3 is independent.
    One,
    /// Source 1 drives sources 2 and 3.
    Two,
}

impl Configuration {
    /// Entries `(row, col)` (0-based) allowed to be nonzero in every `A(k)`.
    pub fn allowed_entries(self) -> &'static [(usize, usize)] {
        match self {
            Configuration::One => &[(0, 0), (1, 0), (1, 1), (2, 2)],
            Configuration::Two => &[(0, 0), (1, 0), (1, 1), (2, 0), (2, 2)],
        }
    }

    /// Truly interacting source pairs, 0-based among the three sources.
    pub fn true_pairs(self) -> &'static [(usize, usize)] {
        match self {
            Configuration::One => &[(0, 1)],
            Configuration::Two => &[(0, 1), (0, 2)],
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Configuration::One => 1,
            Configuration::Two => 2,
        }
    }
}

impl TryFrom<u8> for Configuration {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Configuration::One),
            2 => Ok(Configuration::Two),
            other => Err(Error::Config(format!("unknown configuration {other}, expected 1 or 2"))),
        }
    }
}

impl From<Configuration> for u8 {
    fn from(c: Configuration) -> u8 {
        c.number()
    }
}

/// `z(t) = Σ_k A(k) z(t−k) + ε(t)` with `ε ~ N(0, innovation_std² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvarModel {
    pub order: usize,
    pub coefficients: Vec<Matrix3<f64>>,
    pub configuration: Configuration,
    pub innovation_std: f64,
}

impl MvarModel {
    pub fn zeros(configuration: Configuration, order: usize) -> Self {
        Self {
            order,
            coefficients: vec![Matrix3::zeros(); order],
            configuration,
            innovation_std: 1.0,
        }
    }

    /// `3P × 3P` companion matrix.
    pub fn companion(&self) -> DMatrix<f64> {
        let dim = 3 * self.order;
        let mut c = DMatrix::zeros(dim, dim);
        for (k, a) in self.coefficients.iter().enumerate() {
            c.view_mut((0, 3 * k), (3, 3)).copy_from(a);
        }
        for i in 3..dim {
            c[(i, i - 3)] = 1.0;
        }
        c
    }

    /// Spectral radius of the companion matrix, `None` if the eigenvalue
    /// iteration fails.
    pub fn spectral_radius(&self) -> Option<f64> {
        companion_radius(self.companion())
    }

    /// True when every coefficient outside the configuration's pattern is zero.
    pub fn respects_mask(&self) -> bool {
        let allowed = self.configuration.allowed_entries();
        self.coefficients.iter().all(|a| {
            (0..3).all(|i| (0..3).all(|j| allowed.contains(&(i, j)) || a[(i, j)] == 0.0))
        })
    }
}

fn companion_radius(c: DMatrix<f64>) -> Option<f64> {
    if c.nrows() == 0 {
        return Some(0.0);
    }
    let radius = |m: DMatrix<f64>, shift: f64| {
        m.try_schur(f64::EPSILON, 10_000).map(|s| {
            s.complex_eigenvalues()
                .iter()
                .map(|z| (z - shift).norm())
                .fold(0.0, f64::max)
        })
    };
    // Francis steps stall on shift-like (nilpotent) companions; a unit shift
    // of the spectrum gets them moving.
    radius(c.clone(), 0.0).or_else(|| {
        let dim = c.nrows();
        radius(c + DMatrix::identity(dim, dim), 1.0)
    })
}

/// Companion of the scalar AR polynomial with lag coefficients `a`.
fn scalar_radius(a: &[f64]) -> Option<f64> {
    let p = a.len();
    let mut c = DMatrix::zeros(p, p);
    for (k, v) in a.iter().enumerate() {
        c[(0, k)] = *v;
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    companion_radius(c)
}

pub fn check_stability(model: &MvarModel) -> bool {
    model
        .spectral_radius()
        .is_some_and(|rho| rho < 1.0 - STABILITY_TOL)
}

/// Draws the allowed coefficients i.i.d. `N(0, 0.9²)` until the model is stable.
pub fn draw_mvar<R: Rng + ?Sized>(configuration: Configuration, rng: &mut R) -> Result<MvarModel> {
    draw_mvar_with_order(configuration, MVAR_ORDER, rng)
}

pub fn draw_mvar_with_order<R: Rng + ?Sized>(
    configuration: Configuration,
    order: usize,
    rng: &mut R,
) -> Result<MvarModel> {
    let normal = Normal::new(0.0, COEFFICIENT_STD).expect("valid normal");
    // Both masks are lower triangular, so the companion spectrum is the union
    // of the three diagonal AR polynomials' spectra. Rejecting each diagonal
    // channel separately and drawing the couplings freely gives the same law
    // as rejecting whole models, at a far higher acceptance rate.
    let mut model = MvarModel::zeros(configuration, order);
    for c in 0..3 {
        let mut lags = vec![0.0; order];
        let mut accepted = false;
        for _ in 0..DRAW_CAP {
            lags.iter_mut().for_each(|v| *v = normal.sample(rng));
            if scalar_radius(&lags).is_some_and(|rho| rho < 1.0 - STABILITY_TOL) {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::SamplingFailure {
                attempts: DRAW_CAP,
                reason: format!(
                    "no stable AR(order {order}) polynomial for channel {} of configuration {}",
                    c + 1,
                    configuration.number()
                ),
            });
        }
        for (a, v) in model.coefficients.iter_mut().zip(&lags) {
            a[(c, c)] = *v;
        }
    }
    for a in &mut model.coefficients {
        for &(i, j) in configuration.allowed_entries().iter().filter(|(i, j)| i != j) {
            a[(i, j)] = normal.sample(rng);
        }
    }
    if check_stability(&model) {
        Ok(model)
    } else {
        Err(Error::SamplingFailure {
            attempts: 1,
            reason: "assembled MVAR model failed the full companion check".into(),
        })
    }
}

/// Simulates `samples` points after discarding `burn_in`, starting from zero
/// initial conditions. Innovations are drawn time-major, channel-minor.
pub fn simulate_mvar<R: Rng + ?Sized>(
    model: &MvarModel,
    samples: usize,
    burn_in: usize,
    sampling_rate: f64,
    rng: &mut R,
) -> Result<TimeSeriesSet> {
    let total = samples + burn_in;
    let mut innovations = DMatrix::zeros(total, 3);
    for t in 0..total {
        for c in 0..3 {
            let e: f64 = StandardNormal.sample(rng);
            innovations[(t, c)] = model.innovation_std * e;
        }
    }
    simulate_mvar_with_innovations(model, &innovations, burn_in, sampling_rate)
}

/// Deterministic core of [`simulate_mvar`]: runs the recursion on given
/// innovations (`total × 3`) and drops the first `burn_in` samples.
pub fn simulate_mvar_with_innovations(
    model: &MvarModel,
    innovations: &DMatrix<f64>,
    burn_in: usize,
    sampling_rate: f64,
) -> Result<TimeSeriesSet> {
    if !check_stability(model) {
        return Err(Error::Input("MVAR model is not stable".into()));
    }
    if innovations.ncols() != 3 || innovations.nrows() <= burn_in {
        return Err(Error::Input(format!(
            "innovations must be (burn_in + T) x 3, got {}x{}",
            innovations.nrows(),
            innovations.ncols()
        )));
    }
    let total = innovations.nrows();
    let mut z = DMatrix::<f64>::zeros(total, 3);
    for t in 0..total {
        let mut next = [innovations[(t, 0)], innovations[(t, 1)], innovations[(t, 2)]];
        for (k, a) in model.coefficients.iter().enumerate() {
            let Some(past) = t.checked_sub(k + 1) else { break };
            for (i, slot) in next.iter_mut().enumerate() {
                *slot += a[(i, 0)] * z[(past, 0)] + a[(i, 1)] * z[(past, 1)] + a[(i, 2)] * z[(past, 2)];
            }
        }
        for (c, v) in next.into_iter().enumerate() {
            z[(t, c)] = v;
        }
    }
    TimeSeriesSet::new(z.rows(burn_in, total - burn_in).into_owned(), sampling_rate)
}
