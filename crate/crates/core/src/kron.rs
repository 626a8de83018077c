//! Matrix-free action of `G ⊗ G` and of the block-diagonal operator
//! `diag(G ⊗ G, G ⊗ G)` acting on split real/imaginary vectorized spectra.
//!
//! Vectors are column-major vectorizations (`vec` stacks columns), so for an
//! `n × n` matrix `X` we have `(G ⊗ G) vec(X) = vec(G X Gᵀ)`. The product is
//! evaluated as
//!
//! ```text
//! (G ⊗ G) x = P_r (I_m ⊗ G) P_c (I_n ⊗ G) x
//! ```
//!
//! where `P_c` and `P_r` are the perfect-shuffle permutations returned by
//! [`build_permutations`]. The `m² × n²` matrix is never formed; the cost is
//! `O(max(m, n) · m n)` flops and `O(m n + m²)` scratch memory.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{check_len, Error, Result};

/// Sensor-by-source mixing matrix with optional source locations (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    gain: DMatrix<f64>,
    positions: Option<Vec<[f64; 3]>>,
}

impl LeadField {
    pub fn new(gain: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() == 0 || gain.ncols() == 0 {
            return Err(Error::Input(format!(
                "lead field must be non-empty, got {}x{}",
                gain.nrows(),
                gain.ncols()
            )));
        }
        if gain.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("lead field has non-finite entries".into()));
        }
        Ok(Self {
            gain,
            positions: None,
        })
    }

    pub fn with_positions(gain: DMatrix<f64>, positions: Vec<[f64; 3]>) -> Result<Self> {
        let mut lf = Self::new(gain)?;
        check_len("source positions", lf.n_sources(), positions.len())?;
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("source positions must be finite".into()));
        }
        lf.positions = Some(positions);
        Ok(lf)
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Number of sensors `m`.
    pub fn n_sensors(&self) -> usize {
        self.gain.nrows()
    }

    /// Number of sources `n`.
    pub fn n_sources(&self) -> usize {
        self.gain.ncols()
    }

    pub fn positions(&self) -> Option<&[[f64; 3]]> {
        self.positions.as_deref()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.gain.column_iter().map(|c| c.norm()).collect()
    }
}

/// Row and column permutations of the matrix-free product, 0-based.
///
/// `xi_r[i] = (i mod m)·m + ⌊i/m⌋` for `i < m²` and
/// `xi_c[j] = (j mod n)·m + ⌊j/n⌋` for `j < n·m`. Both are applied as gathers:
/// `out[i] = input[xi[i]]`, which transposes a column-major `m × n` (resp.
/// `m × m`) block into its `n × m` (resp. `m × m`) transpose.
pub fn build_permutations(m: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let xi_r = (0..m * m).map(|i| (i % m) * m + i / m).collect();
    let xi_c = (0..n * m).map(|j| (j % n) * m + j / n).collect();
    (xi_r, xi_c)
}

/// Scratch buffers for [`KronOperator::apply_into`] and
/// [`KronOperator::apply_transpose_into`]. Reusable across calls and sizes.
#[derive(Debug, Default, Clone)]
pub struct KronWorkspace {
    stage: Vec<f64>,
    shuffled: Vec<f64>,
    square: Vec<f64>,
}

impl KronWorkspace {
    fn prepare(&mut self, mixed: usize, square: usize) {
        self.stage.resize(mixed, 0.0);
        self.shuffled.resize(mixed, 0.0);
        self.square.resize(square, 0.0);
    }
}

/// One factor of the Kronecker square together with its permutation tables.
#[derive(Debug, Clone)]
struct KronFactor {
    matrix: DMatrix<f64>,
    xi_r: Vec<usize>,
    xi_c: Vec<usize>,
}

impl KronFactor {
    fn new(matrix: DMatrix<f64>) -> Self {
        let (xi_r, xi_c) = build_permutations(matrix.nrows(), matrix.ncols());
        Self { matrix, xi_r, xi_c }
    }

    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64], ws: &mut KronWorkspace) {
        let (rows, cols) = (self.rows(), self.cols());
        ws.prepare(rows * cols, rows * rows);
        // (I_cols ⊗ A) x: one A·(cols-vector) product per block of x
        multiply_blocks(&self.matrix, x, &mut ws.stage);
        gather(&ws.stage, &self.xi_c, &mut ws.shuffled);
        // (I_rows ⊗ A) ŷ: one A·(cols-vector) product per block of ŷ
        multiply_blocks(&self.matrix, &ws.shuffled, &mut ws.square);
        gather(&ws.square, &self.xi_r, out);
    }
}

/// Computes `A · B` where `B` is `input` read as a column-major matrix with
/// `A.ncols()` rows, i.e. one `A`-times-vector product per contiguous block.
fn multiply_blocks(a: &DMatrix<f64>, input: &[f64], out: &mut [f64]) {
    let blocks = input.len() / a.ncols();
    let b = DMatrixView::from_slice(input, a.ncols(), blocks);
    let mut c = DMatrixViewMut::from_slice(out, a.nrows(), blocks);
    c.gemm(1.0, a, &b, 0.0);
}

fn gather(input: &[f64], index: &[usize], out: &mut [f64]) {
    for (o, &i) in out.iter_mut().zip(index) {
        *o = input[i];
    }
}

/// Matrix-free `G ⊗ G`, its transpose, and the block-diagonal `𝒢`.
///
/// Immutable after construction; share freely across threads and give each
/// thread its own [`KronWorkspace`].
#[derive(Debug, Clone)]
pub struct KronOperator {
    lead_field: LeadField,
    forward: KronFactor,
    adjoint: KronFactor,
}

impl KronOperator {
    pub fn new(lead_field: LeadField) -> Self {
        let forward = KronFactor::new(lead_field.gain().clone());
        let adjoint = KronFactor::new(lead_field.gain().transpose());
        Self {
            lead_field,
            forward,
            adjoint,
        }
    }

    pub fn lead_field(&self) -> &LeadField {
        &self.lead_field
    }

    pub fn n_sensors(&self) -> usize {
        self.forward.rows()
    }

    pub fn n_sources(&self) -> usize {
        self.forward.cols()
    }

    /// Row permutation `xi_r` (0-based, length `m²`).
    pub fn row_permutation(&self) -> &[usize] {
        &self.forward.xi_r
    }

    /// Column permutation `xi_c` (0-based, length `n·m`).
    pub fn column_permutation(&self) -> &[usize] {
        &self.forward.xi_c
    }

    pub fn workspace(&self) -> KronWorkspace {
        let (m, n) = (self.n_sensors(), self.n_sources());
        let mut ws = KronWorkspace::default();
        ws.prepare(m * n, m.max(n).pow(2));
        ws
    }

    /// `(G ⊗ G) x` for `x` of length `n²`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_sensors().pow(2)];
        self.apply_into(x, &mut out, &mut KronWorkspace::default())?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64], ws: &mut KronWorkspace) -> Result<()> {
        check_len("Kronecker apply input", self.n_sources().pow(2), x.len())?;
        check_len("Kronecker apply output", self.n_sensors().pow(2), out.len())?;
        self.forward.apply(x, out, ws);
        Ok(())
    }

    /// `(Gᵀ ⊗ Gᵀ) y` for `y` of length `m²`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_sources().pow(2)];
        self.apply_transpose_into(y, &mut out, &mut KronWorkspace::default())?;
        Ok(out)
    }

    pub fn apply_transpose_into(
        &self,
        y: &[f64],
        out: &mut [f64],
        ws: &mut KronWorkspace,
    ) -> Result<()> {
        check_len("Kronecker transpose input", self.n_sensors().pow(2), y.len())?;
        check_len("Kronecker transpose output", self.n_sources().pow(2), out.len())?;
        self.adjoint.apply(y, out, ws);
        Ok(())
    }

    /// Action of the block-diagonal operator on the stacked pair `(s1, s2)`.
    pub fn apply_block(&self, s1: &[f64], s2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.apply(s1)?, self.apply(s2)?))
    }

    /// Transpose of [`apply_block`](Self::apply_block).
    pub fn apply_block_transpose(&self, r1: &[f64], r2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.apply_transpose(r1)?, self.apply_transpose(r2)?))
    }
}

pub const POWER_ITERATION_CAP: usize = 10_000;
pub const POWER_ITERATION_TOL: f64 = 1e-10;

/// Largest eigenvalue of `GᵀG` by power iteration, applying `GᵀG` as `Gᵀ(G v)`.
///
/// Starts from the normalized all-ones vector and stops once two successive
/// Rayleigh quotients agree to `tol` relatively.
pub fn gram_top_eigenvalue(gain: &DMatrix<f64>, tol: f64, max_iterations: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("power iteration tolerance must be positive, got {tol}")));
    }
    if gain.iter().all(|&v| v == 0.0) {
        return Err(Error::Input("power iteration on a zero matrix".into()));
    }
    let n = gain.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = f64::NAN;
    for iteration in 0..max_iterations {
        let mut w = gain.tr_mul(&(gain * &v));
        let norm = w.norm();
        if norm == 0.0 {
            if iteration > 0 {
                return Ok(0.0);
            }
            // start vector orthogonal to the row space: restart on the largest column
            let (j, _) = gain
                .column_iter()
                .map(|c| c.norm_squared())
                .enumerate()
                .fold((0, 0.0), |best, (j, s)| if s > best.1 { (j, s) } else { best });
            v = DVector::zeros(n);
            v[j] = 1.0;
            continue;
        }
        let rayleigh = v.dot(&w);
        w /= norm;
        v = w;
        if (rayleigh - estimate).abs() <= tol * rayleigh.abs() {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::EstimationFailure {
        iterations: max_iterations,
        last_estimate: estimate,
    })
}

/// Smallest Lipschitz constant of the gradient of `‖𝒢 s − d‖²`:
/// `L = 2 λ_max(𝒢ᵀ𝒢) = 2 [λ_max(GᵀG)]²`.
pub fn lipschitz_constant(lead_field: &LeadField, tol: f64) -> Result<f64> {
    let top = gram_top_eigenvalue(lead_field.gain(), tol, POWER_ITERATION_CAP)?;
    Ok(2.0 * top * top)
}
