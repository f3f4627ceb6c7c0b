//! Data model for vector sets and their spectral summaries.
//!
//! A set's variability is summarized by the eigendecomposition of its
//! non-centred covariance `(1/N) X X^T`. When the sample count is below
//! the ambient dimension the decomposition goes through the `N x N` Gram
//! matrix instead of the `D x D` covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixkit::{self, SymmetricSpectrum};

/// A labeled finite collection of `D`-dimensional vectors, stored as the
/// columns of a `D x N` matrix.
#[derive(Debug, Clone)]
pub struct VectorSet {
    data: DMatrix<f64>,
    class_label: String,
    condition_tag: String,
    set_id: String,
}

impl VectorSet {
    pub fn new(
        data: DMatrix<f64>,
        class_label: impl Into<String>,
        condition_tag: impl Into<String>,
        set_id: impl Into<String>,
    ) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::input("a vector set needs D >= 1 and N >= 1"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::input("vector set contains non-finite entries"));
        }
        if (0..data.ncols()).all(|j| data.column(j).norm() == 0.0) {
            return Err(Error::input(
                "vector set has no variability: every column is zero",
            ));
        }
        Ok(Self {
            data,
            class_label: class_label.into(),
            condition_tag: condition_tag.into(),
            set_id: set_id.into(),
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Ambient dimension `D`.
    pub fn dimension(&self) -> usize {
        self.data.nrows()
    }

    /// Sample count `N`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn condition_tag(&self) -> &str {
        &self.condition_tag
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    /// Returns a copy with every vector scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            &self.data * factor,
            self.class_label.clone(),
            self.condition_tag.clone(),
            self.set_id.clone(),
        )
    }
}

/// Rank-truncated eigendecomposition of a set's non-centred covariance
/// `(1/N) X X^T`. Retained eigenvalues are strictly positive.
#[derive(Debug, Clone)]
pub struct SetSpectrum {
    spectrum: SymmetricSpectrum,
    source_id: String,
    sample_count: usize,
}

impl SetSpectrum {
    pub fn spectrum(&self) -> &SymmetricSpectrum {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.eigenvalues()
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        self.spectrum.eigenvectors()
    }

    pub fn dimension(&self) -> usize {
        self.spectrum.dimension()
    }

    pub fn rank(&self) -> usize {
        self.spectrum.rank()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
}

/// Orthonormal basis of a `d`-dimensional linear subspace of the input
/// space.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(Error::input("subspace ambient dimension must be positive"));
        }
        let gram = basis.transpose() * &basis;
        let identity = DMatrix::identity(basis.ncols(), basis.ncols());
        if (gram - identity).norm() > 1e-10 * (basis.ncols().max(1) as f64) {
            return Err(Error::input("basis columns are not orthonormal"));
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Ambient dimension `D`.
    pub fn ambient_dimension(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimensionality `d`.
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }
}

/// Scales every nonzero column to unit Euclidean norm and drops zero
/// columns. Idempotent.
pub fn l2_normalize(set: &VectorSet) -> Result<VectorSet> {
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(set.len());
    for j in 0..set.len() {
        let column: DVector<f64> = set.data().column(j).into();
        let norm = column.norm();
        if norm > 0.0 {
            columns.push(column / norm);
        }
    }
    if columns.is_empty() {
        return Err(Error::input(format!(
            "set '{}' has only zero columns; normalization undefined",
            set.set_id()
        )));
    }
    VectorSet::new(
        DMatrix::from_columns(&columns),
        set.class_label().to_owned(),
        set.condition_tag().to_owned(),
        set.set_id().to_owned(),
    )
}

/// Spectrum of the non-centred covariance `(1/N) X X^T`, computed through
/// the Gram matrix when `N < D`. Zero modes are truncated.
pub fn spectrum(set: &VectorSet, rank_tol: f64) -> Result<SetSpectrum> {
    let scaled = set.data() / (set.len() as f64).sqrt();
    let spectrum = scaled_gram_spectrum(&scaled, rank_tol)?;
    Ok(SetSpectrum {
        spectrum,
        source_id: set.set_id().to_owned(),
        sample_count: set.len(),
    })
}

/// Leading `min(d, rank)` eigenvectors of the non-centred covariance as an
/// orthonormal basis.
pub fn pca_basis(set: &VectorSet, d: usize, rank_tol: f64) -> Result<SubspaceBasis> {
    if d == 0 {
        return Err(Error::param("subspace dimensionality d must be >= 1"));
    }
    let spec = spectrum(set, rank_tol)?;
    let keep = d.min(spec.rank());
    let basis = spec.eigenvectors().columns(0, keep).into_owned();
    SubspaceBasis::new(basis)
}

/// Spectrum of `M M^T` for a pre-scaled data matrix `M`, using the Gram
/// path (`M^T M`) when the column count is below `D`. Only strictly
/// positive eigenvalues are retained.
pub(crate) fn scaled_gram_spectrum(m: &DMatrix<f64>, rank_tol: f64) -> Result<SymmetricSpectrum> {
    let (d, n) = (m.nrows(), m.ncols());
    if n < d {
        let gram = m.transpose() * m;
        let gram_spec = matrixkit::sym_eig(&gram, rank_tol)?;
        let mut eigenvalues = Vec::new();
        let mut columns = Vec::new();
        for (i, &lambda) in gram_spec.eigenvalues().iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            // Gram eigenpair (lambda, u) lifts to (lambda, M u / |M u|).
            let mut v = m * gram_spec.eigenvectors().column(i);
            let norm = v.norm();
            if norm == 0.0 {
                continue;
            }
            v /= norm;
            fix_sign_vec(&mut v);
            eigenvalues.push(lambda);
            columns.push(v);
        }
        SymmetricSpectrum::from_parts(eigenvalues, matrixkit::matrix_from_columns(d, &columns))
    } else {
        let cov = m * m.transpose();
        let spec = matrixkit::sym_eig(&cov, rank_tol)?;
        let keep = spec.eigenvalues().iter().take_while(|&&l| l > 0.0).count();
        SymmetricSpectrum::from_parts(
            spec.eigenvalues()[..keep].to_vec(),
            spec.eigenvectors().columns(0, keep).into_owned(),
        )
    }
}

fn fix_sign_vec(v: &mut DVector<f64>) {
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
