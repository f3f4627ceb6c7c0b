//! Dense numerical kernels shared by all matchers: symmetric
//! eigendecomposition, thin SVD, PSD square roots, regularized inversion
//! and orthonormalization.
//!
//! All decompositions use a deterministic eigenvector sign convention
//! (largest-magnitude component positive, ties broken by lowest index) so
//! spectra are reproducible across runs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative truncation threshold for eigenvalues and singular
/// values, relative to the largest one.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Maximum relative Frobenius asymmetry accepted by [`sym_eig`].
const SYMMETRY_TOL: f64 = 1e-10;

const EIG_MAX_ITER: usize = 10_000;

/// Rank-truncated eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending; `eigenvectors` is a `D x r` matrix
/// with orthonormal columns, column `i` paired with eigenvalue `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    /// Assembles a spectrum from raw parts. The caller is responsible for
    /// the ordering and orthonormality invariants; they are checked only
    /// in debug builds.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        if eigenvalues.len() != eigenvectors.ncols() {
            return Err(Error::dim(
                "eigenvalue count vs eigenvector columns",
                eigenvalues.len(),
                eigenvectors.ncols(),
            ));
        }
        if eigenvectors.nrows() == 0 {
            return Err(Error::input("spectrum ambient dimension must be positive"));
        }
        debug_assert!(eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Ambient dimension `D`.
    pub fn dimension(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Retained rank `r <= D`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `D x r` matrix of orthonormal eigenvector columns.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Sum of retained eigenvalues.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Reconstructs the dense matrix `V diag(lambda) V^T`.
    pub fn dense(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.eigenvectors, &self.eigenvalues);
        &scaled * self.eigenvectors.transpose()
    }
}

/// Stable serialized form: eigenvectors stored column-major.
#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    dimension: usize,
    eigenvalues: Vec<f64>,
    eigenvectors_col_major: Vec<f64>,
}

impl Serialize for SymmetricSpectrum {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpectrumRepr {
            dimension: self.dimension(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors_col_major: self.eigenvectors.as_slice().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymmetricSpectrum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SpectrumRepr::deserialize(deserializer)?;
        let rank = repr.eigenvalues.len();
        if repr.dimension == 0 {
            return Err(serde::de::Error::custom("spectrum dimension must be positive"));
        }
        if repr.eigenvectors_col_major.len() != repr.dimension * rank {
            return Err(serde::de::Error::custom(format!(
                "eigenvector payload has {} entries, expected {} x {}",
                repr.eigenvectors_col_major.len(),
                repr.dimension,
                rank
            )));
        }
        if !repr.eigenvectors_col_major.iter().all(|v| v.is_finite())
            || !repr.eigenvalues.iter().all(|v| v.is_finite())
        {
            return Err(serde::de::Error::custom("spectrum contains non-finite entries"));
        }
        let eigenvectors =
            DMatrix::from_column_slice(repr.dimension, rank, &repr.eigenvectors_col_major);
        Ok(SymmetricSpectrum {
            eigenvalues: repr.eigenvalues,
            eigenvectors,
        })
    }
}

/// Eigendecomposition of a symmetric matrix with relative rank truncation.
///
/// Eigenvalues with magnitude below `rank_tol * max(lambda_max, 0)` are
/// dropped; everything else (including genuinely negative eigenvalues) is
/// retained, so `rank_tol = 0` keeps the full spectrum.
pub fn sym_eig(matrix: &DMatrix<f64>, rank_tol: f64) -> Result<SymmetricSpectrum> {
    let d = matrix.nrows();
    if d == 0 || matrix.ncols() != d {
        return Err(Error::input(format!(
            "expected a square matrix with D >= 1, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if !matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::input("matrix contains non-finite entries"));
    }
    if !(0.0..1.0).contains(&rank_tol) {
        return Err(Error::param(format!("rank_tol must be in [0, 1), got {rank_tol}")));
    }
    let norm = matrix.norm();
    if norm > 0.0 {
        let asymmetry = (matrix - matrix.transpose()).norm() / norm;
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance: SYMMETRY_TOL,
            });
        }
    }
    // Purge floating-point asymmetry before decomposing.
    let sym = (matrix + matrix.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::EigenFailed)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda_max = eig.eigenvalues[order[0]];
    let threshold = rank_tol * lambda_max.max(0.0);

    let mut eigenvalues = Vec::new();
    let mut columns = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda.abs() < threshold {
            continue;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into();
        fix_sign(&mut v);
        eigenvalues.push(lambda);
        columns.push(v);
    }
    SymmetricSpectrum::from_parts(eigenvalues, matrix_from_columns(d, &columns))
}

/// Symmetric PSD square root `V diag(sqrt(lambda)) V^T` of a spectrum.
pub fn psd_sqrt(spec: &SymmetricSpectrum) -> Result<DMatrix<f64>> {
    if let Some(&lambda) = spec.eigenvalues.iter().find(|&&l| l < 0.0) {
        return Err(Error::input(format!(
            "cannot take the PSD square root of a spectrum with negative eigenvalue {lambda:.6e}"
        )));
    }
    let roots: Vec<f64> = spec.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let scaled = scale_columns(&spec.eigenvectors, &roots);
    Ok(&scaled * spec.eigenvectors.transpose())
}

/// Thin singular value decomposition with descending singular values.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `p x r` matrix with orthonormal columns.
    pub left: DMatrix<f64>,
    /// Singular values, non-negative, descending.
    pub singular_values: Vec<f64>,
    /// `q x r` matrix with orthonormal columns.
    pub right: DMatrix<f64>,
}

pub fn thin_svd(matrix: &DMatrix<f64>) -> Result<ThinSvd> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::input("thin_svd requires p, q >= 1"));
    }
    if !matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::input("matrix contains non-finite entries"));
    }
    let mut svd = nalgebra::SVD::try_new(matrix.clone(), true, true, f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::SvdFailed)?;
    svd.sort_by_singular_values();
    let mut left = svd.u.ok_or(Error::SvdFailed)?;
    let mut right = svd.v_t.ok_or(Error::SvdFailed)?.transpose();
    let singular_values: Vec<f64> = svd.singular_values.iter().map(|&s| s.max(0.0)).collect();
    // Deterministic signs, flipping each (u_i, v_i) pair together so the
    // product U S V^T is unchanged.
    for i in 0..singular_values.len() {
        let mut u: DVector<f64> = left.column(i).into();
        let flipped = fix_sign(&mut u);
        if flipped {
            left.set_column(i, &u);
            let v: DVector<f64> = -right.column(i);
            right.set_column(i, &v);
        }
    }
    Ok(ThinSvd {
        left,
        singular_values,
        right,
    })
}

/// Orthonormal basis of the numerical column span of `matrix`, preserving
/// the leading-column orientation (modified Gram-Schmidt with one
/// re-orthogonalization pass). Columns whose residual after projection is
/// below `rank_tol` times their original norm are dropped; the zero matrix
/// yields zero columns.
pub fn orthonormalize(matrix: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let d = matrix.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..matrix.ncols() {
        let column: DVector<f64> = matrix.column(j).into();
        let original_norm = column.norm();
        if original_norm == 0.0 {
            continue;
        }
        let mut residual = column;
        for _ in 0..2 {
            for q in &basis {
                let coeff = q.dot(&residual);
                residual.axpy(-coeff, q, 1.0);
            }
        }
        let norm = residual.norm();
        if norm > rank_tol * original_norm {
            basis.push(residual / norm);
        }
    }
    matrix_from_columns(d, &basis)
}

/// Regularized inverse `(V diag(lambda) V^T + delta I)^-1` with
/// `delta = ridge * trace(lambda) / D`, falling back to `delta = ridge`
/// when the trace is zero.
pub fn psd_inv_reg(spec: &SymmetricSpectrum, ridge: f64) -> Result<DMatrix<f64>> {
    if !(ridge > 0.0) {
        return Err(Error::param(format!("ridge must be positive, got {ridge}")));
    }
    if let Some(&lambda) = spec.eigenvalues.iter().find(|&&l| l < 0.0) {
        return Err(Error::input(format!(
            "regularized inverse requires non-negative eigenvalues, got {lambda:.6e}"
        )));
    }
    let d = spec.dimension();
    let trace = spec.trace();
    let delta = if trace > 0.0 { ridge * trace / d as f64 } else { ridge };
    // (V L V^T + dI)^-1 = (1/d) I + V (1/(L+d) - 1/d) V^T on the retained rank.
    let mut result = DMatrix::identity(d, d) / delta;
    if spec.rank() > 0 {
        let adjust: Vec<f64> = spec
            .eigenvalues
            .iter()
            .map(|&l| 1.0 / (l + delta) - 1.0 / delta)
            .collect();
        let scaled = scale_columns(&spec.eigenvectors, &adjust);
        result += &scaled * spec.eigenvectors.transpose();
    }
    Ok(result)
}

/// The regularizer actually applied by [`psd_inv_reg`] for this spectrum.
pub fn ridge_delta(spec: &SymmetricSpectrum, ridge: f64) -> f64 {
    let trace = spec.trace();
    if trace > 0.0 {
        ridge * trace / spec.dimension() as f64
    } else {
        ridge
    }
}

/// Flips `v` so its largest-magnitude component (lowest index on ties) is
/// positive. Returns whether a flip happened.
fn fix_sign(v: &mut DVector<f64>) -> bool {
    let mut pivot = 0;
    let mut best = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Multiplies column `i` of `matrix` by `factors[i]`.
fn scale_columns(matrix: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = matrix.clone();
    for (i, &f) in factors.iter().enumerate() {
        out.column_mut(i).scale_mut(f);
    }
    out
}

pub(crate) fn matrix_from_columns(d: usize, columns: &[DVector<f64>]) -> DMatrix<f64> {
    if columns.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(columns)
    }
}
