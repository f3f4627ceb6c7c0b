//! Extended CCA: deviation operators, extended canonical correlation
//! coefficients and the normalized trace similarity.
//!
//! For sets X and Y with covariance square roots ("deviation operators")
//! Ux and Uy, the similarity is Tr(Ux Uy) / sum_i sqrt(lx_i ly_i) with
//! the eigenvalue sequences paired by descending rank. Everything is
//! computed on low-rank cores; D x D matrices are never materialized
//! outside of [`deviation_operator`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixkit::{self, matrix_from_columns};
use crate::setcore::SetSpectrum;

/// Result of an extended (or discriminative extended) CCA comparison.
///
/// `similarity` is the ratio clamped to `[0, 1]`; the raw numerator and
/// denominator are kept so the unclamped ratio stays reportable (the
/// discriminative variant can legitimately leave `[0, 1]`).
#[derive(Debug, Clone, Copy)]
pub struct EccaResult {
    pub similarity: f64,
    pub numerator: f64,
    pub denominator: f64,
}

impl EccaResult {
    /// Unclamped ratio.
    pub fn raw_ratio(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// Common variability modes shared by two sets: the dominant right
/// eigenvectors of the (non-symmetric) product of deviation operators.
#[derive(Debug, Clone)]
pub struct CommonModes {
    /// `D x m` matrix, one unit-norm mode per column, `m <= k`.
    pub modes: DMatrix<f64>,
    /// Eigenvalue associated with each mode, descending.
    pub eigenvalues: Vec<f64>,
    /// Modes with (numerically) zero or non-real eigenvalues are emitted
    /// but flagged.
    pub degenerate: Vec<bool>,
}

/// Relative threshold below which a mode's eigenvalue counts as zero.
const MODE_EIGENVALUE_TOL: f64 = 1e-12;

/// Symmetric PSD square root of the set covariance (dense `D x D`).
pub fn deviation_operator(spec: &SetSpectrum) -> Result<DMatrix<f64>> {
    matrixkit::psd_sqrt(spec.spectrum())
}

/// Extended CCA similarity between two sets.
///
/// The numerator Tr(Ux Uy) is computed as the squared Frobenius norm of
/// the core K = diag(lx^1/4) Vx^T Vy diag(ly^1/4); the denominator pairs
/// the descending eigenvalue sequences by rank index (terms beyond the
/// shorter rank are zero).
pub fn ecca_similarity(sx: &SetSpectrum, sy: &SetSpectrum) -> Result<EccaResult> {
    check_dims(sx, sy)?;
    let core = quarter_core(sx, sy);
    let numerator = core.norm_squared();
    let denominator = paired_denominator(sx, sy);
    Ok(EccaResult {
        similarity: (numerator / denominator).clamp(0.0, 1.0),
        numerator,
        denominator,
    })
}

/// Top-`min(k, D)` extended canonical correlation coefficients: the
/// leading eigenvalues of Ux Uy, all real and non-negative, computed as
/// squared singular values of the low-rank core.
pub fn extended_coefficients(sx: &SetSpectrum, sy: &SetSpectrum, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    check_dims(sx, sy)?;
    let core = quarter_core(sx, sy);
    let svd = matrixkit::thin_svd(&core)?;
    let take = k.min(sx.dimension());
    let mut coeffs: Vec<f64> = svd
        .singular_values
        .iter()
        .take(take)
        .map(|&s| s * s)
        .collect();
    coeffs.resize(take, 0.0);
    Ok(coeffs)
}

/// Dominant right eigenvectors of Ux Uy.
///
/// The nonzero eigenpairs of the `D x D` product are recovered from the
/// symmetric core K^T K: a core eigenvector z lifts to
/// Vx diag(lx^1/2) Vx^T Vy diag(ly^1/4) z. Zero modes, which have no
/// amplified lift, are embedded through Vy diag(ly^-1/4) z instead and
/// flagged degenerate.
pub fn common_modes(sx: &SetSpectrum, sy: &SetSpectrum, k: usize) -> Result<CommonModes> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    check_dims(sx, sy)?;
    let core = quarter_core(sx, sy);
    let svd = matrixkit::thin_svd(&core)?;
    let available = k.min(svd.right.ncols());
    let psi_max = svd.singular_values.first().map_or(0.0, |s| s * s);

    // Lift operator A = Vx diag(lx^1/2) Vx^T Vy diag(ly^1/4), applied per mode.
    let g = sx.eigenvectors().transpose() * sy.eigenvectors();
    let d = sx.dimension();
    let mut modes = Vec::with_capacity(available);
    let mut eigenvalues = Vec::with_capacity(available);
    let mut degenerate = Vec::with_capacity(available);
    for i in 0..available {
        let psi = svd.singular_values[i].powi(2);
        let z: DVector<f64> = svd.right.column(i).into();
        let zero_mode = psi <= MODE_EIGENVALUE_TOL * psi_max.max(1e-300);
        let mut w = if zero_mode {
            embed_kernel_mode(sy, &z)
        } else {
            let scaled = scale_by(&z, sy.eigenvalues(), 0.25);
            let in_x = &g * scaled;
            let amplified = scale_entries(&in_x, sx.eigenvalues(), 0.5);
            sx.eigenvectors() * amplified
        };
        let norm = w.norm();
        let flagged = if norm > 0.0 && !zero_mode {
            w /= norm;
            false
        } else if norm > 0.0 {
            w /= norm;
            true
        } else {
            // No usable direction at all; fall back to the plain embedding.
            w = embed_kernel_mode(sy, &z);
            let n = w.norm();
            if n > 0.0 {
                w /= n;
            }
            true
        };
        fix_mode_sign(&mut w);
        modes.push(w);
        eigenvalues.push(psi);
        degenerate.push(flagged);
    }
    Ok(CommonModes {
        modes: matrix_from_columns(d, &modes),
        eigenvalues,
        degenerate,
    })
}

/// K = diag(lx^1/4) (Vx^T Vy) diag(ly^1/4).
fn quarter_core(sx: &SetSpectrum, sy: &SetSpectrum) -> DMatrix<f64> {
    let mut core = sx.eigenvectors().transpose() * sy.eigenvectors();
    for (i, &lx) in sx.eigenvalues().iter().enumerate() {
        let f = lx.powf(0.25);
        core.row_mut(i).scale_mut(f);
    }
    for (j, &ly) in sy.eigenvalues().iter().enumerate() {
        let f = ly.powf(0.25);
        core.column_mut(j).scale_mut(f);
    }
    core
}

/// sum_i sqrt(lx_i ly_i) over rank-paired descending eigenvalues.
pub(crate) fn paired_denominator(sx: &SetSpectrum, sy: &SetSpectrum) -> f64 {
    sx.eigenvalues()
        .iter()
        .zip(sy.eigenvalues())
        .map(|(&lx, &ly)| (lx * ly).sqrt())
        .sum()
}

pub(crate) fn check_dims(sx: &SetSpectrum, sy: &SetSpectrum) -> Result<()> {
    if sx.dimension() != sy.dimension() {
        return Err(Error::dim(
            "set spectra ambient dimension",
            sx.dimension(),
            sy.dimension(),
        ));
    }
    Ok(())
}

/// Vy diag(ly^-1/4) z, an exact eigenvector of Ux Uy for eigenvalue 0
/// when z lies in the kernel of the core.
fn embed_kernel_mode(sy: &SetSpectrum, z: &DVector<f64>) -> DVector<f64> {
    let scaled = scale_by(z, sy.eigenvalues(), -0.25);
    sy.eigenvectors() * scaled
}

fn scale_by(z: &DVector<f64>, eigenvalues: &[f64], power: f64) -> DVector<f64> {
    let mut out = z.clone();
    for (i, &l) in eigenvalues.iter().enumerate() {
        out[i] *= l.powf(power);
    }
    out
}

fn scale_entries(v: &DVector<f64>, eigenvalues: &[f64], power: f64) -> DVector<f64> {
    let mut out = v.clone();
    for (i, &l) in eigenvalues.iter().enumerate() {
        out[i] *= l.powf(power);
    }
    out
}

pub(crate) fn fix_mode_sign(v: &mut DVector<f64>) {
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
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::DEFAULT_RANK_TOL;
    use crate::setcore::{spectrum, VectorSet};
    use approx::assert_relative_eq;

    fn set(d: usize, n: usize, data: &[f64]) -> VectorSet {
        VectorSet::new(DMatrix::from_column_slice(d, n, data), "a", "t", "s").unwrap()
    }

    fn spec(d: usize, n: usize, data: &[f64]) -> SetSpectrum {
        spectrum(&set(d, n, data), DEFAULT_RANK_TOL).unwrap()
    }

    #[test]
    fn deviation_operator_examples() {
        // {(2,0)}: covariance diag(4,0), square root diag(2,0).
        let dev = deviation_operator(&spec(2, 1, &[2.0, 0.0])).unwrap();
        assert_relative_eq!(dev, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), epsilon = 1e-12);

        // {(1,0),(0,1)}: covariance I/2, square root I/sqrt(2).
        let dev = deviation_operator(&spec(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_relative_eq!(dev, DMatrix::identity(2, 2) / 2.0f64.sqrt(), epsilon = 1e-12);

        // {(1,1)}: covariance [[1,1],[1,1]], square root [[1,1],[1,1]]/sqrt(2).
        let dev = deviation_operator(&spec(2, 1, &[1.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]) / 2.0f64.sqrt();
        assert_relative_eq!(dev, expected, epsilon = 1e-12);
    }

    #[test]
    fn self_similarity_is_one() {
        let s = spec(3, 2, &[1.0, 0.3, -0.2, 0.4, 1.1, 0.0]);
        let r = ecca_similarity(&s, &s).unwrap();
        assert_relative_eq!(r.similarity, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn orthogonal_sets_score_zero() {
        let sx = spec(2, 1, &[2.0, 0.0]);
        let sy = spec(2, 1, &[0.0, 3.0]);
        let r = ecca_similarity(&sx, &sy).unwrap();
        assert_relative_eq!(r.similarity, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn hand_computed_pair() {
        // {(1,0)} vs {(1,1)}: numerator 1/sqrt(2), denominator sqrt(2),
        // similarity 0.5. Verified against the dense deviation product.
        let sx = spec(2, 1, &[1.0, 0.0]);
        let sy = spec(2, 1, &[1.0, 1.0]);
        let r = ecca_similarity(&sx, &sy).unwrap();
        assert_relative_eq!(r.numerator, 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.denominator, 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.similarity, 0.5, epsilon = 1e-12);

        let dense = deviation_operator(&sx).unwrap() * deviation_operator(&sy).unwrap();
        assert_relative_eq!(dense.trace(), r.numerator, epsilon = 1e-12);
    }

    #[test]
    fn extended_coefficients_examples() {
        // Self-match with covariance diag(4, 1): coefficients (4, 1).
        let sx = spec(2, 2, &[2.0 * 2.0f64.sqrt(), 0.0, 0.0, 2.0f64.sqrt()]);
        assert_relative_eq!(sx.eigenvalues()[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(sx.eigenvalues()[1], 1.0, epsilon = 1e-12);
        let coeffs = extended_coefficients(&sx, &sx, 2).unwrap();
        assert_relative_eq!(coeffs[0], 4.0, epsilon = 1e-10);
        assert_relative_eq!(coeffs[1], 1.0, epsilon = 1e-10);

        // Orthogonal rank-1 sets: zero coefficient.
        let a = spec(2, 1, &[2.0, 0.0]);
        let b = spec(2, 1, &[0.0, 3.0]);
        assert_relative_eq!(extended_coefficients(&a, &b, 1).unwrap()[0], 0.0, epsilon = 1e-14);

        // {(1,0)} vs {(1,1)}: top coefficient 1/sqrt(2).
        let sx = spec(2, 1, &[1.0, 0.0]);
        let sy = spec(2, 1, &[1.0, 1.0]);
        let coeffs = extended_coefficients(&sx, &sy, 1).unwrap();
        assert_relative_eq!(coeffs[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn common_modes_diagonal_self_match() {
        let sx = spec(2, 2, &[2.0 * 2.0f64.sqrt(), 0.0, 0.0, 2.0f64.sqrt()]);
        let m = common_modes(&sx, &sx, 1).unwrap();
        assert_relative_eq!(m.eigenvalues[0], 4.0, epsilon = 1e-10);
        assert!(!m.degenerate[0]);
        assert_relative_eq!(m.modes.column(0)[0].abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn common_modes_degenerate_zero_overlap() {
        let a = spec(2, 1, &[2.0, 0.0]);
        let b = spec(2, 1, &[0.0, 3.0]);
        let m = common_modes(&a, &b, 1).unwrap();
        assert_relative_eq!(m.eigenvalues[0], 0.0, epsilon = 1e-14);
        assert!(m.degenerate[0]);
        // The emitted direction is a genuine kernel eigenvector of Ux Uy.
        let phi = deviation_operator(&a).unwrap() * deviation_operator(&b).unwrap();
        let residual = &phi * m.modes.column(0);
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn common_modes_hand_pair() {
        // {(1,0)} vs {(1,1)}: Phi = [[1,1],[0,0]]/sqrt(2), dominant right
        // eigenvector e1.
        let sx = spec(2, 1, &[1.0, 0.0]);
        let sy = spec(2, 1, &[1.0, 1.0]);
        let m = common_modes(&sx, &sy, 1).unwrap();
        assert_relative_eq!(m.eigenvalues[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(m.modes.column(0)[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(m.modes.column(0)[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = spec(2, 1, &[1.0, 0.0]);
        let b = spec(3, 1, &[1.0, 0.0, 0.0]);
        assert!(ecca_similarity(&a, &b).is_err());
    }
}
