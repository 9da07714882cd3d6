//! Dense Hermitian matrices and the eigen-decompositions built on them.
//!
//! Matrices are stored as nalgebra types; eigen-decompositions are delegated
//! to faer, whose self-adjoint solver stays at rounding-level residuals on
//! the clustered spectra of strongly modulated lattices.

use faer::{c64, Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

/// Double precision complex scalar used throughout the crate.
pub type C64 = Complex<f64>;

/// Absolute tolerance on `|H_ij - conj(H_ji)|`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Dense complex square matrix that is Hermitian to [`HERMITIAN_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

/// Eigenvalues in ascending order and the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let asym = max_asymmetry(&matrix);
        if asym > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self(matrix))
    }

    /// Builds a Hermitian matrix from a real symmetric one.
    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)))
    }

    /// Averages `M` with its adjoint. Used where Hermiticity holds only up to
    /// rounding in long perturbative sums.
    pub fn symmetrized(matrix: DMatrix<C64>) -> Result<Self> {
        let avg = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Self::new(avg)
    }

    pub(crate) fn from_raw(matrix: DMatrix<C64>) -> Self {
        debug_assert!(max_asymmetry(&matrix) <= HERMITIAN_TOLERANCE);
        Self(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * C64::new(factor, 0.0))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    /// Eigenvalues (ascending) and eigenvectors from faer.
    fn decompose(&self) -> (Vec<f64>, DMatrix<C64>) {
        let n = self.dim();
        if self.is_real() {
            let m = Mat::<f64>::from_fn(n, n, |i, j| self.0[(i, j)].re);
            let eig = m
                .self_adjoint_eigen(Side::Lower)
                .expect("self-adjoint eigensolver failed on a finite matrix");
            let u = eig.U();
            let s = eig.S();
            (
                (0..n).map(|i| s[i]).collect(),
                DMatrix::from_fn(n, n, |i, j| C64::new(u[(i, j)], 0.0)),
            )
        } else {
            let m = Mat::<c64>::from_fn(n, n, |i, j| {
                let z = self.0[(i, j)];
                c64::new(z.re, z.im)
            });
            let eig = m
                .self_adjoint_eigen(Side::Lower)
                .expect("self-adjoint eigensolver failed on a finite matrix");
            let u = eig.U();
            let s = eig.S();
            (
                (0..n).map(|i| s[i].re).collect(),
                DMatrix::from_fn(n, n, |i, j| {
                    let z = u[(i, j)];
                    C64::new(z.re, z.im)
                }),
            )
        }
    }

    /// Full eigen-decomposition. Eigenvalues ascend; every eigenvector is
    /// rotated so its largest-magnitude component is real and positive.
    pub fn eigh(&self) -> Eigen {
        let (values, mut vectors) = self.decompose();
        for j in 0..values.len() {
            let mut col = vectors.column(j).clone_owned();
            fix_phase(&mut col);
            vectors.set_column(j, &col);
        }
        Eigen { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().values
    }

    /// Spectral norm, i.e. the largest eigenvalue modulus.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.abs())
            .fold(0.0, f64::max)
    }

    /// Applies `exp(-i H dt)` to `state` in place, without the phase
    /// fixing of [`HermitianMatrix::eigh`].
    pub fn apply_exp(&self, dt: f64, state: &mut DVector<C64>) {
        let (values, vectors) = self.decompose();
        let mut coeffs = vectors.ad_mul(state);
        for (c, &e) in coeffs.iter_mut().zip(&values) {
            *c *= C64::from_polar(1.0, -e * dt);
        }
        vectors.mul_to(&coeffs, state);
    }

    /// `exp(-i H dt)` through the eigen-decomposition.
    pub fn propagator(&self, dt: f64) -> DMatrix<C64> {
        let eig = self.eigh();
        eig.propagator(dt)
    }
}

impl Eigen {
    pub fn propagator(&self, dt: f64) -> DMatrix<C64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &e) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * dt);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Applies `exp(-i H dt)` to `state` in place without forming the matrix.
    pub fn apply_propagator(&self, dt: f64, state: &mut DVector<C64>) {
        let mut coeffs = self.vectors.ad_mul(state);
        for (c, &e) in coeffs.iter_mut().zip(&self.values) {
            *c *= C64::from_polar(1.0, -e * dt);
        }
        self.vectors.mul_to(&coeffs, state);
    }
}

fn max_asymmetry(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Rotates a vector so that its largest-magnitude component is real positive.
pub fn fix_phase(v: &mut DVector<C64>) {
    let mut best = 0usize;
    let mut best_norm = -1.0;
    for (i, z) in v.iter().enumerate() {
        // ties broken towards the lower index to stay deterministic
        if z.norm() > best_norm * (1.0 + 1e-12) {
            best = i;
            best_norm = z.norm();
        }
    }
    if best_norm > 0.0 {
        let phase = v[best].conj() / best_norm;
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// `<a|b>` with the conjugate on the left.
pub fn inner(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.dotc(b)
}
