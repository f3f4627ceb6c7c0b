//! Classical CCA set similarity (principal angles between PCA subspaces)
//! and constrained CCA with its discriminative constraint subspace.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrixkit::{self, SymmetricSpectrum};
use crate::setcore::{self, SubspaceBasis, VectorSet};

/// Canonical correlation coefficients between two subspaces, i.e. the
/// cosines of their principal angles, descending in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CanonicalSpectrum {
    coefficients: Vec<f64>,
}

impl CanonicalSpectrum {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Constraint subspace for constrained CCA: the span of the eigenvectors
/// belonging to the smallest eigenvalues of the mean projection matrix.
#[derive(Debug, Clone)]
pub struct ConstraintSubspace {
    basis: DMatrix<f64>,
    source_eigenvalues: Vec<f64>,
}

impl ConstraintSubspace {
    /// `D x c` matrix with orthonormal columns, ascending by eigenvalue.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dimension(&self) -> usize {
        self.basis.nrows()
    }

    /// Constraint dimensionality `c`.
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    /// The `c` smallest eigenvalues of the mean projection matrix,
    /// ascending, paired with the basis columns.
    pub fn source_eigenvalues(&self) -> &[f64] {
        &self.source_eigenvalues
    }

    pub fn from_parts(basis: DMatrix<f64>, source_eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.ncols() != source_eigenvalues.len() {
            return Err(Error::dim(
                "constraint basis columns vs eigenvalues",
                source_eigenvalues.len(),
                basis.ncols(),
            ));
        }
        Ok(Self {
            basis,
            source_eigenvalues,
        })
    }
}

/// Singular values of `Bx^T By`, clamped to `[0, 1]`, descending.
pub fn canonical_correlations(
    bx: &SubspaceBasis,
    by: &SubspaceBasis,
) -> Result<CanonicalSpectrum> {
    if bx.ambient_dimension() != by.ambient_dimension() {
        return Err(Error::dim(
            "canonical correlations ambient dimension",
            bx.ambient_dimension(),
            by.ambient_dimension(),
        ));
    }
    let cross = bx.basis().transpose() * by.basis();
    let svd = matrixkit::thin_svd(&cross)?;
    let coefficients = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0))
        .collect();
    Ok(CanonicalSpectrum { coefficients })
}

/// Mean of the top `min(k, len)` canonical correlation coefficients.
pub fn cca_similarity(spec: &CanonicalSpectrum, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    if spec.is_empty() {
        return Err(Error::input("empty canonical spectrum"));
    }
    let take = k.min(spec.len());
    Ok(spec.coefficients[..take].iter().sum::<f64>() / take as f64)
}

/// Sum of projection matrices `sum_i B_i B_i^T` over all class bases.
pub fn mean_projection_matrix(bases: &[SubspaceBasis]) -> Result<DMatrix<f64>> {
    let first = bases
        .first()
        .ok_or_else(|| Error::input("mean projection matrix needs at least one basis"))?;
    let d = first.ambient_dimension();
    let mut sum = DMatrix::zeros(d, d);
    for basis in bases {
        if basis.ambient_dimension() != d {
            return Err(Error::dim(
                "mean projection matrix ambient dimension",
                d,
                basis.ambient_dimension(),
            ));
        }
        sum += basis.basis() * basis.basis().transpose();
    }
    Ok(sum)
}

/// Eigenvectors of the `c` smallest eigenvalues of the mean projection
/// matrix (full-spectrum decomposition; zero eigenvalues are valid
/// constraint directions).
pub fn constraint_subspace(pbar: &DMatrix<f64>, c: usize) -> Result<ConstraintSubspace> {
    let d = pbar.nrows();
    if c == 0 || c > d {
        return Err(Error::param(format!(
            "constraint dimensionality must satisfy 1 <= c <= {d}, got {c}"
        )));
    }
    let spec: SymmetricSpectrum = matrixkit::sym_eig(pbar, 0.0)?;
    // sym_eig sorts descending; the c smallest sit at the tail. Emit them
    // ascending by eigenvalue.
    let mut basis = DMatrix::zeros(d, c);
    let mut eigenvalues = Vec::with_capacity(c);
    for i in 0..c {
        let src = d - 1 - i;
        basis.set_column(i, &spec.eigenvectors().column(src));
        eigenvalues.push(spec.eigenvalues()[src]);
    }
    ConstraintSubspace::from_parts(basis, eigenvalues)
}

/// Outcome of a constrained CCA comparison. `degenerate` flags pairs where
/// a projected basis lost all numerical rank (the set lies entirely within
/// the discarded subspace); the similarity is 0 in that case.
#[derive(Debug, Clone, Copy)]
pub struct ConstrainedScore {
    pub similarity: f64,
    pub degenerate: bool,
}

/// Constrained CCA similarity: PCA bases at dimension `d`, projected into
/// the constraint subspace, re-orthonormalized, then the top-`k` mean of
/// the canonical correlations.
pub fn constrained_similarity(
    x: &VectorSet,
    y: &VectorSet,
    cs: &ConstraintSubspace,
    d: usize,
    k: usize,
    rank_tol: f64,
) -> Result<ConstrainedScore> {
    if x.dimension() != cs.ambient_dimension() || y.dimension() != cs.ambient_dimension() {
        return Err(Error::dim(
            "constrained similarity ambient dimension",
            cs.ambient_dimension(),
            x.dimension().max(y.dimension()),
        ));
    }
    let bx = setcore::pca_basis(x, d, rank_tol)?;
    let by = setcore::pca_basis(y, d, rank_tol)?;
    let px = matrixkit::orthonormalize(&(cs.basis().transpose() * bx.basis()), rank_tol);
    let py = matrixkit::orthonormalize(&(cs.basis().transpose() * by.basis()), rank_tol);
    if px.ncols() == 0 || py.ncols() == 0 {
        return Ok(ConstrainedScore {
            similarity: 0.0,
            degenerate: true,
        });
    }
    let spec = canonical_correlations(&SubspaceBasis::new(px)?, &SubspaceBasis::new(py)?)?;
    Ok(ConstrainedScore {
        similarity: cca_similarity(&spec, k)?,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::DEFAULT_RANK_TOL;
    use approx::assert_relative_eq;

    fn basis(cols: &[&[f64]]) -> SubspaceBasis {
        let columns: Vec<nalgebra::DVector<f64>> = cols
            .iter()
            .map(|c| nalgebra::DVector::from_column_slice(c))
            .collect();
        SubspaceBasis::new(DMatrix::from_columns(&columns)).unwrap()
    }

    #[test]
    fn identical_subspaces() {
        let b = basis(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let spec = canonical_correlations(&b, &b).unwrap();
        assert_relative_eq!(spec.coefficients()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(spec.coefficients()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_subspaces() {
        let bx = basis(&[&[1.0, 0.0]]);
        let by = basis(&[&[0.0, 1.0]]);
        let spec = canonical_correlations(&bx, &by).unwrap();
        assert_eq!(spec.len(), 1);
        assert_relative_eq!(spec.coefficients()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn forty_five_degrees() {
        let s = 0.5f64.sqrt();
        let bx = basis(&[&[1.0, 0.0]]);
        let by = basis(&[&[s, s]]);
        let spec = canonical_correlations(&bx, &by).unwrap();
        assert_relative_eq!(spec.coefficients()[0], 0.70711, epsilon = 1e-5);
    }

    #[test]
    fn similarity_mean_and_clamp() {
        let spec = CanonicalSpectrum {
            coefficients: vec![1.0, 1.0],
        };
        assert_relative_eq!(cca_similarity(&spec, 2).unwrap(), 1.0, epsilon = 1e-12);

        let spec = CanonicalSpectrum {
            coefficients: vec![0.70711],
        };
        assert_relative_eq!(cca_similarity(&spec, 3).unwrap(), 0.70711, epsilon = 1e-12);

        let spec = CanonicalSpectrum {
            coefficients: vec![0.9, 0.5, 0.1],
        };
        assert_relative_eq!(cca_similarity(&spec, 2).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn projection_sum_examples() {
        let e1 = basis(&[&[1.0, 0.0]]);
        let e2 = basis(&[&[0.0, 1.0]]);
        let pbar = mean_projection_matrix(&[e1.clone(), e2]).unwrap();
        assert_relative_eq!(pbar, DMatrix::identity(2, 2), epsilon = 1e-12);

        let pbar = mean_projection_matrix(&[e1.clone()]).unwrap();
        assert_relative_eq!(pbar, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-12);

        let s = 0.5f64.sqrt();
        let diag = basis(&[&[s, s]]);
        let pbar = mean_projection_matrix(&[e1, diag]).unwrap();
        assert_relative_eq!(
            pbar,
            DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 0.5]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn constraint_subspace_hand_case() {
        // Eigenvalues of [[1.5,0.5],[0.5,0.5]] are 1 +- sqrt(2)/2; the
        // smaller one is 0.29289 with eigenvector +-(0.38268, -0.92388).
        let pbar = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 0.5]);
        let cs = constraint_subspace(&pbar, 1).unwrap();
        assert_relative_eq!(cs.source_eigenvalues()[0], 0.29289, epsilon = 1e-5);
        let v = cs.basis().column(0);
        assert_relative_eq!(v[0].abs(), 0.38268, epsilon = 1e-5);
        assert_relative_eq!(v[1].abs(), 0.92388, epsilon = 1e-5);
        assert!(v[0] * v[1] < 0.0);
    }

    #[test]
    fn constraint_subspace_diagonal() {
        let pbar = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let cs = constraint_subspace(&pbar, 1).unwrap();
        assert_relative_eq!(cs.basis().column(0)[2].abs(), 1.0, epsilon = 1e-10);

        let cs = constraint_subspace(&DMatrix::identity(3, 3), 2).unwrap();
        assert_eq!(cs.dimension(), 2);
        let gram = cs.basis().transpose() * cs.basis();
        assert_relative_eq!(gram, DMatrix::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn constraint_subspace_rejects_oversize() {
        assert!(constraint_subspace(&DMatrix::identity(2, 2), 3).is_err());
    }

    #[test]
    fn constrained_full_space_reduces_to_plain() {
        let x = VectorSet::new(
            DMatrix::from_column_slice(3, 2, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3]),
            "a",
            "t",
            "x",
        )
        .unwrap();
        let y = VectorSet::new(
            DMatrix::from_column_slice(3, 2, &[0.9, 0.1, 0.2, 0.0, 1.0, 0.4]),
            "b",
            "t",
            "y",
        )
        .unwrap();
        let cs = ConstraintSubspace::from_parts(DMatrix::identity(3, 3), vec![0.0; 3]).unwrap();
        let constrained = constrained_similarity(&x, &y, &cs, 2, 2, DEFAULT_RANK_TOL).unwrap();

        let bx = setcore::pca_basis(&x, 2, DEFAULT_RANK_TOL).unwrap();
        let by = setcore::pca_basis(&y, 2, DEFAULT_RANK_TOL).unwrap();
        let plain = cca_similarity(&canonical_correlations(&bx, &by).unwrap(), 2).unwrap();
        assert!(!constrained.degenerate);
        assert_relative_eq!(constrained.similarity, plain, epsilon = 1e-10);
    }

    #[test]
    fn constrained_self_match() {
        let x = VectorSet::new(
            DMatrix::from_column_slice(3, 2, &[1.0, 0.2, 0.0, 0.1, 1.0, 0.3]),
            "a",
            "t",
            "x",
        )
        .unwrap();
        let s = 0.5f64.sqrt();
        let cs = ConstraintSubspace::from_parts(
            DMatrix::from_column_slice(3, 2, &[s, s, 0.0, 0.0, 0.0, 1.0]),
            vec![0.0, 0.0],
        )
        .unwrap();
        let score = constrained_similarity(&x, &x, &cs, 2, 2, DEFAULT_RANK_TOL).unwrap();
        assert!(!score.degenerate);
        assert_relative_eq!(score.similarity, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn constrained_hand_projection() {
        // x spans e1, y spans (1,1,0)/sqrt(2); constraint = span{e2, e3}.
        // Projections collapse to span{e2} on both sides: similarity 1.
        let x = VectorSet::new(
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            "a",
            "t",
            "x",
        )
        .unwrap();
        let y = VectorSet::new(
            DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]),
            "b",
            "t",
            "y",
        )
        .unwrap();
        let cs = ConstraintSubspace::from_parts(
            DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            vec![0.0, 0.0],
        )
        .unwrap();
        // x projects to zero: degenerate with similarity 0.
        let score = constrained_similarity(&x, &y, &cs, 1, 1, DEFAULT_RANK_TOL).unwrap();
        assert!(score.degenerate);
        assert_relative_eq!(score.similarity, 0.0);

        // Shift x into span{e1, e2} so its projection survives as e2.
        let x2 = VectorSet::new(
            DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]),
            "a",
            "t",
            "x2",
        )
        .unwrap();
        let score = constrained_similarity(&x2, &y, &cs, 1, 1, DEFAULT_RANK_TOL).unwrap();
        assert!(!score.degenerate);
        assert_relative_eq!(score.similarity, 1.0, epsilon = 1e-10);
    }
}
