//! Synthetic spherical head geometry, source-space decimation and source
//! placement.

use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kron::LeadField;

/// Radius of the source shell (m).
pub const SOURCE_RADIUS: f64 = 0.07;
/// Radius of the sensor shell (m).
pub const SENSOR_RADIUS: f64 = 0.11;
/// Minimum pairwise distance between active sources (m).
pub const MIN_SOURCE_DISTANCE: f64 = 0.04;
/// Accepted range of pairwise column-norm ratios.
pub const NORM_RATIO_RANGE: (f64, f64) = (0.8, 1.25);
pub const SELECTION_CAP: usize = 100_000;

/// `count` nearly uniform points on a sphere of the given radius.
pub fn fibonacci_sphere(count: usize, radius: f64) -> Vec<[f64; 3]> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden_angle * i as f64;
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

/// Unit dipole orientation tangential to the sphere at `position`:
/// `ẑ × r̂`, or `x̂ × r̂` close to the poles.
pub fn tangential_orientation(position: &[f64; 3]) -> Vector3<f64> {
    let r = Vector3::from(*position).normalize();
    let q = Vector3::z().cross(&r);
    if q.norm() > 1e-3 {
        q.normalize()
    } else {
        Vector3::x().cross(&r).normalize()
    }
}

/// Radial magnetic field at each sensor from a unit tangential dipole at each
/// source: `G_ij = n_i · (q_j × (s_i − r_j)) / |s_i − r_j|³`, unscaled.
pub fn leadfield_from_geometry(sensors: &[[f64; 3]], sources: &[[f64; 3]]) -> DMatrix<f64> {
    let orientations: Vec<_> = sources.iter().map(tangential_orientation).collect();
    DMatrix::from_fn(sensors.len(), sources.len(), |i, j| {
        let s = Vector3::from(sensors[i]);
        let d = s - Vector3::from(sources[j]);
        let dist = d.norm();
        s.normalize().dot(&orientations[j].cross(&d)) / (dist * dist * dist)
    })
}

/// Sensors on an outer shell, sources on a randomly rotated inner shell; the
/// gain is scaled so the mean column norm is one.
pub fn synthetic_leadfield(n_sensors: usize, n_sources: usize, seed: u64) -> Result<LeadField> {
    if n_sensors == 0 || n_sources == 0 {
        return Err(Error::Config(format!(
            "lead field needs m, n >= 1, got m = {n_sensors}, n = {n_sources}"
        )));
    }
    let mut rng = crate::rng::substream(seed, crate::rng::Stream::Geometry, 0);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(draw(), draw(), draw(), draw()));
    let sources: Vec<[f64; 3]> = fibonacci_sphere(n_sources, SOURCE_RADIUS)
        .into_iter()
        .map(|p| (rotation * Vector3::from(p)).into())
        .collect();
    let sensors = fibonacci_sphere(n_sensors, SENSOR_RADIUS);
    let mut gain = leadfield_from_geometry(&sensors, &sources);
    let mean_norm = gain.column_iter().map(|c| c.norm()).sum::<f64>() / n_sources as f64;
    if mean_norm > 0.0 {
        gain /= mean_norm;
    }
    LeadField::with_positions(gain, sources)
}

/// Decimated source space and the map from fine sources to their nearest
/// retained source.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLeadField {
    pub lead_field: LeadField,
    /// Fine indices of the retained columns.
    pub kept: Vec<usize>,
    /// For every fine source, the index (into `kept`) of the nearest coarse source.
    pub nearest: Vec<usize>,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (Vector3::from(*a) - Vector3::from(*b)).norm()
}

/// Keeps columns `0, factor, 2·factor, …` with their positions.
pub fn coarsen_leadfield(fine: &LeadField, factor: usize) -> Result<CoarseLeadField> {
    if factor == 0 {
        return Err(Error::Config("coarsening factor must be at least 1".into()));
    }
    let kept: Vec<usize> = (0..fine.n_sources()).step_by(factor).collect();
    let gain = fine.gain().select_columns(&kept);
    let Some(positions) = fine.positions() else {
        let lead_field = LeadField::new(gain)?;
        let nearest = (0..fine.n_sources()).map(|j| (j / factor).min(kept.len() - 1)).collect();
        return Ok(CoarseLeadField { lead_field, kept, nearest });
    };
    let coarse_positions: Vec<[f64; 3]> = kept.iter().map(|&j| positions[j]).collect();
    let nearest = positions
        .iter()
        .map(|p| {
            coarse_positions
                .iter()
                .enumerate()
                .map(|(k, q)| (k, distance(p, q)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                .0
        })
        .collect();
    Ok(CoarseLeadField {
        lead_field: LeadField::with_positions(gain, coarse_positions)?,
        kept,
        nearest,
    })
}

/// Outcome of one placement check, for error reporting.
#[derive(Debug, Default, Clone, Copy)]
struct Violations {
    distance: usize,
    norm_ratio: usize,
}

/// True iff all pairwise distances exceed 4 cm and all pairwise column-norm
/// ratios lie in `[0.8, 1.25]`.
pub fn placement_ok(positions: &[[f64; 3]], column_norms: &[f64], triplet: [usize; 3]) -> bool {
    check_triplet(positions, column_norms, triplet).is_none()
}

fn check_triplet(positions: &[[f64; 3]], norms: &[f64], t: [usize; 3]) -> Option<Violations> {
    let mut v = Violations::default();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (i, j) = (t[a], t[b]);
        if distance(&positions[i], &positions[j]) <= MIN_SOURCE_DISTANCE {
            v.distance += 1;
        }
        let ratio = norms[i] / norms[j];
        if !(NORM_RATIO_RANGE.0..=NORM_RATIO_RANGE.1).contains(&ratio) {
            v.norm_ratio += 1;
        }
    }
    (v.distance + v.norm_ratio > 0).then_some(v)
}

/// Rejection-samples three distinct sources satisfying [`placement_ok`].
pub fn select_sources<R: Rng + ?Sized>(
    positions: &[[f64; 3]],
    column_norms: &[f64],
    rng: &mut R,
) -> Result<[usize; 3]> {
    let n = positions.len();
    if n < 3 || column_norms.len() != n {
        return Err(Error::Input(format!(
            "source selection needs >= 3 sources with one norm each, got {n} positions and {} norms",
            column_norms.len()
        )));
    }
    let mut total = Violations::default();
    for _ in 0..SELECTION_CAP {
        let picked = sample(rng, n, 3);
        let triplet = [picked.index(0), picked.index(1), picked.index(2)];
        match check_triplet(positions, column_norms, triplet) {
            None => return Ok(triplet),
            Some(v) => {
                total.distance += v.distance;
                total.norm_ratio += v.norm_ratio;
            }
        }
    }
    Err(Error::SamplingFailure {
        attempts: SELECTION_CAP,
        reason: format!(
            "no admissible source triplet: {} pairs closer than {MIN_SOURCE_DISTANCE} m, {} pairs with norm ratio outside [{}, {}]",
            total.distance, total.norm_ratio, NORM_RATIO_RANGE.0, NORM_RATIO_RANGE.1
        ),
    })
}
