//! Discriminative extended CCA: inter-class and intra-class scatter
//! estimation, the weighting operator and the weighted trace similarity.
//!
//! The weighting operator P = Sw^1/2 (Sb + delta I)^-1 Sw^1/2 is trained
//! from a labeled corpus and inserted between the deviation operators:
//! similarity = Tr(Ux P Uy) / sum_i sqrt(lx_i ly_i). With P = I this
//! reduces exactly to the extended CCA similarity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ecca::{self, CommonModes, EccaResult};
use crate::error::{Error, Result};
use crate::matrixkit::{self, matrix_from_columns, SymmetricSpectrum, DEFAULT_RANK_TOL};
use crate::setcore::{self, SetSpectrum, VectorSet};

/// Trained discriminative state: scatter spectra and the weighting
/// operator, kept as a spectrum so similarities run on low-rank cores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatterModel {
    sigma_w: SymmetricSpectrum,
    sigma_b: SymmetricSpectrum,
    p_operator: SymmetricSpectrum,
    ridge_rel: f64,
    delta: f64,
    class_count: usize,
    swapped: bool,
}

impl ScatterModel {
    /// Builds a model with a caller-supplied weighting operator spectrum.
    /// Mainly useful for the P = I reduction in tests and tooling.
    pub fn from_operator(
        p_operator: SymmetricSpectrum,
        sigma_w: SymmetricSpectrum,
        sigma_b: SymmetricSpectrum,
        ridge_rel: f64,
        delta: f64,
        class_count: usize,
        swapped: bool,
    ) -> Self {
        Self {
            sigma_w,
            sigma_b,
            p_operator,
            ridge_rel,
            delta,
            class_count,
            swapped,
        }
    }

    /// Identity weighting operator in dimension `d`; reduces the
    /// discriminative similarity to plain extended CCA.
    pub fn identity(d: usize) -> Result<Self> {
        let spec = matrixkit::sym_eig(&DMatrix::identity(d, d), DEFAULT_RANK_TOL)?;
        Ok(Self {
            sigma_w: spec.clone(),
            sigma_b: spec.clone(),
            p_operator: spec,
            ridge_rel: 0.0,
            delta: 0.0,
            class_count: 0,
            swapped: false,
        })
    }

    pub fn sigma_w(&self) -> &SymmetricSpectrum {
        &self.sigma_w
    }

    pub fn sigma_b(&self) -> &SymmetricSpectrum {
        &self.sigma_b
    }

    /// Spectrum of the symmetric PSD weighting operator P.
    pub fn p_operator(&self) -> &SymmetricSpectrum {
        &self.p_operator
    }

    /// The regularizer delta actually used when inverting the inner
    /// scatter.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn ridge_rel(&self) -> f64 {
        self.ridge_rel
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Whether the scatter roles were swapped (P built from Sb outside,
    /// Sw inside).
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    pub fn dimension(&self) -> usize {
        self.p_operator.dimension()
    }

    /// `D x r` factor F with P = F F^T.
    fn p_factor(&self) -> DMatrix<f64> {
        let mut f = self.p_operator.eigenvectors().clone();
        for (i, &l) in self.p_operator.eigenvalues().iter().enumerate() {
            f.column_mut(i).scale_mut(l.max(0.0).sqrt());
        }
        f
    }
}

/// Training options for [`train_scatter_model`].
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Relative ridge for the inner scatter inversion;
    /// delta = ridge_rel * trace / D.
    pub ridge_rel: f64,
    /// Build P' = Sb^1/2 (Sw + delta I)^-1 Sb^1/2 instead. The prose
    /// around the construction is ambiguous about which scatter
    /// amplifies; this exposes the alternative reading.
    pub swap_scatter_roles: bool,
    /// Additionally L2-normalize every training sample (class means are
    /// always normalized).
    pub normalize_samples: bool,
    pub rank_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            ridge_rel: 1e-3,
            swap_scatter_roles: false,
            normalize_samples: false,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Groups sets by class label (sorted for determinism).
pub fn group_by_class<'a>(sets: impl IntoIterator<Item = &'a VectorSet>) -> Vec<Vec<&'a VectorSet>> {
    let mut sorted: Vec<&VectorSet> = sets.into_iter().collect();
    sorted.sort_by(|a, b| (a.class_label(), a.set_id()).cmp(&(b.class_label(), b.set_id())));
    let mut groups: Vec<Vec<&VectorSet>> = Vec::new();
    for set in sorted {
        match groups.last_mut() {
            Some(group) if group[0].class_label() == set.class_label() => group.push(set),
            _ => groups.push(vec![set]),
        }
    }
    groups
}

/// Normalized inter-class scatter: the covariance of the unit-normalized
/// class means about their grand mean,
/// Sb = (1/Nc) sum_i (m_i - m)(m_i - m)^T.
pub fn inter_class_scatter(classes: &[Vec<&VectorSet>], rank_tol: f64) -> Result<SymmetricSpectrum> {
    if classes.len() < 2 {
        return Err(Error::input(format!(
            "inter-class scatter needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let d = common_dimension(classes)?;
    let means = normalized_class_means(classes, d)?;
    let mut grand = DVector::zeros(d);
    for m in &means {
        grand += m;
    }
    grand /= means.len() as f64;
    let deviations: Vec<DVector<f64>> = means.iter().map(|m| m - &grand).collect();
    let scaled = matrix_from_columns(d, &deviations) / (means.len() as f64).sqrt();
    setcore::scaled_gram_spectrum(&scaled, rank_tol)
}

/// Mean intra-class scatter: per-class non-centred covariances averaged
/// over classes, Sw = (1/Nc) sum_i (1/N_i) Z_i Z_i^T.
pub fn intra_class_scatter(classes: &[Vec<&VectorSet>], rank_tol: f64) -> Result<SymmetricSpectrum> {
    if classes.is_empty() {
        return Err(Error::input("intra-class scatter needs at least 1 class"));
    }
    let d = common_dimension(classes)?;
    let nc = classes.len() as f64;
    let mut columns: Vec<DVector<f64>> = Vec::new();
    for class in classes {
        let n_i: usize = class.iter().map(|s| s.len()).sum();
        let scale = 1.0 / (nc * n_i as f64).sqrt();
        for set in class {
            for j in 0..set.len() {
                columns.push(DVector::from(set.data().column(j)) * scale);
            }
        }
    }
    setcore::scaled_gram_spectrum(&matrix_from_columns(d, &columns), rank_tol)
}

/// Trains the weighting operator P = Sw^1/2 (Sb + delta I)^-1 Sw^1/2
/// (roles swapped when requested) and packages the scatter spectra.
pub fn train_scatter_model(classes: &[Vec<&VectorSet>], opts: TrainOptions) -> Result<ScatterModel> {
    if !(opts.ridge_rel > 0.0) {
        return Err(Error::param(format!(
            "ridge_rel must be positive, got {}",
            opts.ridge_rel
        )));
    }
    let normalized_storage: Vec<Vec<VectorSet>>;
    let normalized_views: Vec<Vec<&VectorSet>>;
    let classes = if opts.normalize_samples {
        normalized_storage = classes
            .iter()
            .map(|class| class.iter().map(|s| setcore::l2_normalize(s)).collect())
            .collect::<Result<_>>()?;
        normalized_views = normalized_storage
            .iter()
            .map(|class| class.iter().collect())
            .collect();
        normalized_views.as_slice()
    } else {
        classes
    };

    let sigma_w = intra_class_scatter(classes, opts.rank_tol)?;
    let sigma_b = inter_class_scatter(classes, opts.rank_tol)?;

    let (outer, inner) = if opts.swap_scatter_roles {
        (&sigma_b, &sigma_w)
    } else {
        (&sigma_w, &sigma_b)
    };
    let outer_half = matrixkit::psd_sqrt(outer)?;
    let inner_inv = matrixkit::psd_inv_reg(inner, opts.ridge_rel)?;
    let delta = matrixkit::ridge_delta(inner, opts.ridge_rel);
    let p = &outer_half * inner_inv * &outer_half;
    let p = (&p + p.transpose()) * 0.5;
    let p_operator = matrixkit::sym_eig(&p, opts.rank_tol)?;
    if let Some(&l) = p_operator.eigenvalues().iter().find(|&&l| l < 0.0) {
        return Err(Error::input(format!(
            "weighting operator has negative eigenvalue {l:.3e}; scatter inputs are inconsistent"
        )));
    }

    Ok(ScatterModel {
        sigma_w,
        sigma_b,
        p_operator,
        ridge_rel: opts.ridge_rel,
        delta,
        class_count: classes.len(),
        swapped: opts.swap_scatter_roles,
    })
}

/// Discriminative extended CCA similarity
/// Tr(Ux P Uy) / sum_i sqrt(lx_i ly_i).
///
/// The numerator runs on low-rank cores: with P = F F^T it equals the
/// Frobenius inner product of diag(lx^1/2) (Vx^T F)(F^T Vy) diag(ly^1/2)
/// with Vx^T Vy. The similarity is clamped to [0, 1] for classification;
/// the raw ratio (which can leave that interval for general P) stays
/// available through the numerator and denominator fields.
pub fn decca_similarity(
    sx: &SetSpectrum,
    sy: &SetSpectrum,
    model: &ScatterModel,
) -> Result<EccaResult> {
    ecca::check_dims(sx, sy)?;
    if model.dimension() != sx.dimension() {
        return Err(Error::dim(
            "scatter model ambient dimension",
            sx.dimension(),
            model.dimension(),
        ));
    }
    let f = model.p_factor();
    let xf = sx.eigenvectors().transpose() * &f;
    let fy = f.transpose() * sy.eigenvectors();
    let mut weighted = xf * fy;
    for (i, &lx) in sx.eigenvalues().iter().enumerate() {
        weighted.row_mut(i).scale_mut(lx.sqrt());
    }
    for (j, &ly) in sy.eigenvalues().iter().enumerate() {
        weighted.column_mut(j).scale_mut(ly.sqrt());
    }
    let overlap = sx.eigenvectors().transpose() * sy.eigenvectors();
    let numerator = weighted.dot(&overlap);
    let denominator = ecca::paired_denominator(sx, sy);
    Ok(EccaResult {
        similarity: (numerator / denominator).clamp(0.0, 1.0),
        numerator,
        denominator,
    })
}

/// Dominant right eigenvectors of the weighted product Ux P Uy.
///
/// The operator is collapsed to the non-symmetric core
/// C = diag(ly^1/4) Vy^T Ux P Vy diag(ly^1/4); its eigenpairs are the
/// nonzero eigenpairs of the full product, with eigenvectors lifted by
/// A = Ux P Vy diag(ly^1/4). Eigenvalues with a non-negligible imaginary
/// part (the product of three PSD operators need not have a real
/// spectrum) are flagged degenerate and reported by real part.
pub fn decca_common_modes(
    sx: &SetSpectrum,
    sy: &SetSpectrum,
    model: &ScatterModel,
    k: usize,
) -> Result<CommonModes> {
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    ecca::check_dims(sx, sy)?;
    if model.dimension() != sx.dimension() {
        return Err(Error::dim(
            "scatter model ambient dimension",
            sx.dimension(),
            model.dimension(),
        ));
    }
    let d = sx.dimension();
    let f = model.p_factor();
    // A = Vx diag(lx^1/2) Vx^T F F^T Vy diag(ly^1/4), D x r_y.
    let fy = f.transpose() * sy.eigenvectors();
    let xf = sx.eigenvectors().transpose() * &f;
    let mut inner = xf * fy;
    for (i, &lx) in sx.eigenvalues().iter().enumerate() {
        inner.row_mut(i).scale_mut(lx.sqrt());
    }
    let mut lift = sx.eigenvectors() * inner;
    for (j, &ly) in sy.eigenvalues().iter().enumerate() {
        lift.column_mut(j).scale_mut(ly.powf(0.25));
    }
    // Core C = diag(ly^1/4) Vy^T * lift.
    let mut core = sy.eigenvectors().transpose() * &lift;
    for (i, &ly) in sy.eigenvalues().iter().enumerate() {
        core.row_mut(i).scale_mut(ly.powf(0.25));
    }

    let eigenpairs = real_eigenpairs(&core)?;
    let available = k.min(eigenpairs.len());
    let psi_max = eigenpairs
        .iter()
        .map(|p| p.value.abs())
        .fold(0.0f64, f64::max);

    let mut modes = Vec::with_capacity(available);
    let mut eigenvalues = Vec::with_capacity(available);
    let mut degenerate = Vec::with_capacity(available);
    for pair in eigenpairs.into_iter().take(available) {
        let zero_mode = pair.value.abs() <= MODE_EIGENVALUE_TOL * psi_max.max(1e-300);
        let mut w = &lift * &pair.vector;
        let norm = w.norm();
        let mut flagged = pair.complex || zero_mode;
        if zero_mode || norm == 0.0 {
            // No amplified lift; embed through Vy instead.
            let mut scaled = pair.vector.clone();
            for (i, &ly) in sy.eigenvalues().iter().enumerate() {
                scaled[i] *= ly.powf(-0.25);
            }
            w = sy.eigenvectors() * scaled;
            flagged = true;
        }
        let n = w.norm();
        if n > 0.0 {
            w /= n;
        }
        ecca::fix_mode_sign(&mut w);
        modes.push(w);
        eigenvalues.push(pair.value);
        degenerate.push(flagged);
    }
    Ok(CommonModes {
        modes: matrix_from_columns(d, &modes),
        eigenvalues,
        degenerate,
    })
}

const MODE_EIGENVALUE_TOL: f64 = 1e-12;

struct RealEigenpair {
    value: f64,
    vector: DVector<f64>,
    complex: bool,
}

/// Real-part eigenpairs of a small non-symmetric real matrix, sorted by
/// real part descending. Eigenvectors are recovered as the least-singular
/// right direction of (C - lambda I).
fn real_eigenpairs(core: &DMatrix<f64>) -> Result<Vec<RealEigenpair>> {
    let n = core.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eigenvalues = core.clone().complex_eigenvalues();
    let scale = eigenvalues.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].re.partial_cmp(&eigenvalues[a].re).unwrap());

    let mut out = Vec::with_capacity(n);
    for idx in order {
        let lambda = eigenvalues[idx];
        let complex = lambda.im.abs() > 1e-8 * scale.max(1e-300);
        let shifted = core - DMatrix::identity(n, n) * lambda.re;
        let svd = matrixkit::thin_svd(&shifted)?;
        let vector: DVector<f64> = svd.right.column(svd.right.ncols() - 1).into();
        out.push(RealEigenpair {
            value: lambda.re,
            vector,
            complex,
        });
    }
    Ok(out)
}

fn common_dimension(classes: &[Vec<&VectorSet>]) -> Result<usize> {
    let first = classes
        .iter()
        .flat_map(|c| c.iter())
        .next()
        .ok_or_else(|| Error::input("no sets provided"))?;
    let d = first.dimension();
    for set in classes.iter().flat_map(|c| c.iter()) {
        if set.dimension() != d {
            return Err(Error::dim(
                format!("set '{}' ambient dimension", set.set_id()),
                d,
                set.dimension(),
            ));
        }
    }
    Ok(d)
}

/// Unit-normalized pooled mean per class.
fn normalized_class_means(classes: &[Vec<&VectorSet>], d: usize) -> Result<Vec<DVector<f64>>> {
    let mut means = Vec::with_capacity(classes.len());
    for (idx, class) in classes.iter().enumerate() {
        if class.is_empty() {
            return Err(Error::input(format!("class group {idx} is empty")));
        }
        let mut mean = DVector::zeros(d);
        let mut count = 0usize;
        for set in class {
            for j in 0..set.len() {
                mean += set.data().column(j);
            }
            count += set.len();
        }
        mean /= count as f64;
        let norm = mean.norm();
        if norm == 0.0 {
            return Err(Error::input(format!(
                "class '{}' has zero mean; normalization undefined",
                class[0].class_label()
            )));
        }
        means.push(mean / norm);
    }
    Ok(means)
}
