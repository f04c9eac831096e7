//! Dense symmetric eigen-analysis and the REDs solver.
//!
//! The solver maximizes `vᵀ A_c v` over unit vectors `v` lying in the
//! intersection of the truncated nullspaces of the fixed-feature Grams
//! `A_f^1 .. A_f^n`. Steps:
//!
//! 1. scale every Gram so its largest eigenvalue is 1;
//! 2. for each fixed Gram keep the leading eigenvectors that explain a
//!    fraction `beta_f` of the squared spectrum; their orthogonal complement
//!    is that constraint's truncated nullspace;
//! 3. intersect the nullspaces;
//! 4. eigen-decompose `Nᵀ A_c N` on the intersection basis `N` and keep the
//!    leading eigenvectors explaining a fraction `beta_c`;
//! 5. lift them back: `R = N Ṽ_c`.
//!
//! All eigenvector columns are sign-normalized so that their entry of largest
//! magnitude is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{RedsError, Result};

/// Default truncation for fixed features.
pub const DEFAULT_BETA_FIXED: f64 = 0.99;
/// Default truncation for the changing feature.
pub const DEFAULT_BETA_CHANGING: f64 = 0.999;

/// Relative singular-value threshold for the nullspace intersection.
pub const INTERSECTION_RTOL: f64 = 1e-10;

const PSD_RTOL: f64 = 1e-10;
const NULL_SCALE_PER_DIM: f64 = 1e-14;

/// A symmetric positive semidefinite quadratic form `A = Jᵀ J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates, symmetrizes and PSD-checks an arbitrary square matrix.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(RedsError::InvalidInput(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(RedsError::InvalidInput("gram matrix has non-finite entries".into()));
        }
        let gram = Self::symmetrized(entries);
        let spectrum = gram.spectrum();
        let max = spectrum.max_eigenvalue().max(0.0);
        let min = spectrum.min_eigenvalue();
        if min < -PSD_RTOL * max.max(f64::MIN_POSITIVE) && min < -f64::EPSILON {
            return Err(RedsError::InvalidInput(format!(
                "gram matrix is not positive semidefinite (lambda_min = {min:e}, lambda_max = {max:e})"
            )));
        }
        Ok(gram)
    }

    /// `Jᵀ J`, symmetrized. PSD by construction so no eigen check is done.
    pub fn from_jacobian(jacobian: &DMatrix<f64>) -> Self {
        Self::symmetrized(jacobian.transpose() * jacobian)
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    fn symmetrized(a: DMatrix<f64>) -> Self {
        let entries = (&a + a.transpose()) * 0.5;
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.entries * v))
    }

    pub fn spectrum(&self) -> SymmetricSpectrum {
        SymmetricSpectrum::of(&self.entries)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { entries: &self.entries * alpha }
    }

    /// Sum of Grams; all must share a dimension.
    pub fn sum<'a>(dim: usize, grams: impl IntoIterator<Item = &'a GramMatrix>) -> Result<Self> {
        let mut acc = DMatrix::zeros(dim, dim);
        for g in grams {
            if g.dim() != dim {
                return Err(RedsError::InvalidInput(format!(
                    "gram dimension {} does not match {dim}",
                    g.dim()
                )));
            }
            acc += &g.entries;
        }
        Ok(Self::symmetrized(acc))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub eigenvalues: DVector<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    pub fn of(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        if n == 0 {
            return Self { eigenvalues: DVector::zeros(0), eigenvectors: DMatrix::zeros(0, 0) };
        }
        let eig = SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        canonicalize_columns(&mut eigenvectors);
        Self { eigenvalues, eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().next().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().last().unwrap_or(0.0)
    }

    /// Eigenvalues with tiny negative round-off clamped to zero.
    pub fn clamped_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&x| x.max(0.0)).collect()
    }

    /// The leading `count` eigenvectors as a basis.
    pub fn leading(&self, count: usize) -> SubspaceBasis {
        let count = count.min(self.dim());
        SubspaceBasis { columns: self.eigenvectors.columns(0, count).into_owned() }
    }

    /// The trailing `count` eigenvectors as a basis.
    pub fn trailing(&self, count: usize) -> SubspaceBasis {
        let count = count.min(self.dim());
        let start = self.dim() - count;
        SubspaceBasis { columns: self.eigenvectors.columns(start, count).into_owned() }
    }
}

/// Flips `v` so that its entry of largest magnitude (first on ties) is positive.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    if let Some(k) = argmax_abs(v.iter().copied()) {
        if v[k] < 0.0 {
            v.neg_mut();
        }
    }
}

fn canonicalize_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut col = m.column_mut(j);
        if let Some(k) = argmax_abs(col.iter().copied()) {
            if col[k] < 0.0 {
                col.neg_mut();
            }
        }
    }
}

fn argmax_abs(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in values.enumerate() {
        match best {
            Some((_, b)) if x.abs() <= b => {}
            _ => best = Some((i, x.abs())),
        }
    }
    best.map(|(i, _)| i)
}

/// An orthonormal set of `rank` columns in `R^ambient_dim`. Rank 0 is legal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    columns: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn empty(ambient_dim: usize) -> Self {
        Self { columns: DMatrix::zeros(ambient_dim, 0) }
    }

    pub fn identity(ambient_dim: usize) -> Self {
        Self { columns: DMatrix::identity(ambient_dim, ambient_dim) }
    }

    /// Wraps columns that must already be orthonormal to `1e-10` per entry.
    pub fn from_orthonormal_columns(columns: DMatrix<f64>) -> Result<Self> {
        let gram = columns.transpose() * &columns;
        let err = (gram - DMatrix::identity(columns.ncols(), columns.ncols())).amax();
        if err > 1e-10 {
            return Err(RedsError::InvalidInput(format!(
                "basis columns are not orthonormal (max |BᵀB - I| = {err:e})"
            )));
        }
        Ok(Self { columns })
    }

    /// Orthonormalizes arbitrary columns (thin QR); the input must have full column rank.
    pub fn orthonormalize(columns: &DMatrix<f64>) -> Result<Self> {
        if columns.ncols() == 0 {
            return Ok(Self::empty(columns.nrows()));
        }
        let svd = SVD::new(columns.clone(), true, false);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= INTERSECTION_RTOL * smax {
            return Err(RedsError::InvalidInput("columns are linearly dependent".into()));
        }
        let mut q = columns.clone().qr().q();
        canonicalize_columns(&mut q);
        Ok(Self { columns: q })
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.rank() == 0
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.columns.column(j).into_owned()
    }

    /// Orthogonal projection `B Bᵀ v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.columns * (self.columns.transpose() * v)
    }

    /// Coordinates `Bᵀ v`.
    pub fn coordinates(&self, v: &DVector<f64>) -> DVector<f64> {
        self.columns.transpose() * v
    }
}

/// How many leading eigenvalues count toward the explained-variance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    /// Cumulative squared eigenvalues against `beta * sum(u^2)`.
    #[default]
    Squared,
    /// Cumulative *unsquared* eigenvalues against `beta * sum(u^2)`. Only
    /// meaningful for the changing-feature rank; kept for exact reproduction
    /// of the original rank_c inequality.
    Literal,
}

/// Result of [`spectral_normalize`].
#[derive(Debug, Clone)]
pub struct NormalizedGram {
    pub gram: GramMatrix,
    /// The largest eigenvalue of the input (the divisor, unless `null_scale`).
    pub scale: f64,
    /// True when the input was numerically zero and was returned unchanged.
    pub null_scale: bool,
}

/// Divides `a` by its spectral norm `lambda_max(a)`.
pub fn spectral_normalize(a: &GramMatrix) -> NormalizedGram {
    let scale = a.spectrum().max_eigenvalue();
    if scale <= NULL_SCALE_PER_DIM * a.dim() as f64 {
        return NormalizedGram { gram: a.clone(), scale, null_scale: true };
    }
    NormalizedGram { gram: a.scaled(1.0 / scale), scale, null_scale: false }
}

/// Smallest count `r >= 1` of leading eigenvalues whose cumulative (squared
/// or literal) sum reaches `beta * sum(u^2)`. Returns 0 for an all-zero spectrum.
pub fn explained_variance_rank(eigenvalues: &[f64], beta: f64, mode: RankMode) -> Result<usize> {
    check_beta(beta)?;
    let u: Vec<f64> = eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = u.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Ok(0);
    }
    let target = beta * total;
    let mut acc = 0.0;
    for (i, &x) in u.iter().enumerate() {
        acc += match mode {
            RankMode::Squared => x * x,
            RankMode::Literal => x,
        };
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(u.len())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(RedsError::InvalidConfig(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(())
}

/// The trailing `d - rank` eigenvectors.
pub fn nullspace_basis(spectrum: &SymmetricSpectrum, rank: usize) -> Result<SubspaceBasis> {
    let d = spectrum.dim();
    if rank > d {
        return Err(RedsError::InvalidInput(format!("rank {rank} exceeds dimension {d}")));
    }
    Ok(spectrum.trailing(d - rank))
}

/// Orthonormal basis of the orthogonal complement of the union of `range_bases`,
/// i.e. the intersection of their individual nullspaces.
///
/// The transposed bases are stacked (zero-padded to at least `d` rows) and the
/// right singular vectors with singular value `<= 1e-10 * sigma_max` form the
/// result. An empty list (or all-empty bases) yields the identity.
pub fn intersect_nullspaces(range_bases: &[SubspaceBasis], ambient_dim: usize) -> Result<SubspaceBasis> {
    for b in range_bases {
        if b.ambient_dim() != ambient_dim {
            return Err(RedsError::InvalidInput(format!(
                "range basis lives in R^{}, expected R^{ambient_dim}",
                b.ambient_dim()
            )));
        }
    }
    let total: usize = range_bases.iter().map(SubspaceBasis::rank).sum();
    if total == 0 {
        return Ok(SubspaceBasis::identity(ambient_dim));
    }
    let rows = total.max(ambient_dim);
    let mut stack = DMatrix::zeros(rows, ambient_dim);
    let mut r = 0;
    for b in range_bases {
        let bt = b.columns().transpose();
        stack.rows_mut(r, bt.nrows()).copy_from(&bt);
        r += bt.nrows();
    }
    let svd = SVD::new(stack, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= INTERSECTION_RTOL * sigma_max)
        .collect();
    let mut columns = DMatrix::zeros(ambient_dim, null_rows.len());
    for (j, &i) in null_rows.iter().enumerate() {
        columns.set_column(j, &v_t.row(i).transpose());
    }
    canonicalize_columns(&mut columns);
    Ok(SubspaceBasis { columns })
}

/// Outcome class of a REDs solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedsStatus {
    Ok,
    /// The fixed constraints leave no feasible direction (soft-constraint
    /// regime); lower `beta_f` to open up a truncated nullspace.
    EmptyNullspace,
    /// The changing feature is locally constant on the nullspace.
    FlatChanging,
}

#[derive(Debug, Clone)]
pub struct RedsResult {
    /// `R = N Ṽ_c[:, :changing_rank]`.
    pub basis: SubspaceBasis,
    /// The full spectrum of `Nᵀ A_c N` (normalized `A_c`), descending.
    pub projected_eigenvalues: Vec<f64>,
    pub fixed_ranks: Vec<usize>,
    pub changing_rank: usize,
    /// Intersection of the truncated fixed-feature nullspaces.
    pub nullspace: SubspaceBasis,
    /// Kept (range-side) eigenvectors of each fixed Gram.
    pub range_bases: Vec<SubspaceBasis>,
    pub status: RedsStatus,
}

impl RedsResult {
    /// The eigenvalues paired with the columns of `basis`.
    pub fn selected_eigenvalues(&self) -> &[f64] {
        &self.projected_eigenvalues[..self.changing_rank]
    }

    pub fn top_direction(&self) -> Option<DVector<f64>> {
        (!self.basis.is_empty()).then(|| self.basis.column(0))
    }
}

/// Computes the local REDs for fixed Grams `A_f^i` and changing Gram `A_c`.
///
/// An empty feasible set is reported through [`RedsStatus`], not as an error.
pub fn compute_reds(
    fixed_grams: &[GramMatrix],
    changing_gram: &GramMatrix,
    beta_f: &[f64],
    beta_c: f64,
    mode: RankMode,
) -> Result<RedsResult> {
    let d = changing_gram.dim();
    if fixed_grams.len() != beta_f.len() {
        return Err(RedsError::InvalidInput(format!(
            "{} fixed grams but {} beta_f values",
            fixed_grams.len(),
            beta_f.len()
        )));
    }
    if let Some(g) = fixed_grams.iter().find(|g| g.dim() != d) {
        return Err(RedsError::InvalidInput(format!(
            "fixed gram has dimension {}, changing gram has {d}",
            g.dim()
        )));
    }
    check_beta(beta_c)?;

    let mut fixed_ranks = Vec::with_capacity(fixed_grams.len());
    let mut range_bases = Vec::with_capacity(fixed_grams.len());
    let mut spectra = Vec::with_capacity(fixed_grams.len());
    for (g, &beta) in fixed_grams.iter().zip(beta_f) {
        let normalized = spectral_normalize(g);
        let spectrum = normalized.gram.spectrum();
        // A locally constant feature imposes no constraint.
        let rank = if normalized.null_scale {
            check_beta(beta)?;
            0
        } else {
            explained_variance_rank(&spectrum.clamped_eigenvalues(), beta, RankMode::Squared)?
        };
        fixed_ranks.push(rank);
        range_bases.push(spectrum.leading(rank));
        spectra.push((spectrum, rank));
    }

    let nullspace = match spectra.as_slice() {
        [(spectrum, rank)] => nullspace_basis(spectrum, *rank)?,
        _ => intersect_nullspaces(&range_bases, d)?,
    };

    let empty = |status, projected_eigenvalues| RedsResult {
        basis: SubspaceBasis::empty(d),
        projected_eigenvalues,
        fixed_ranks: fixed_ranks.clone(),
        changing_rank: 0,
        nullspace: nullspace.clone(),
        range_bases: range_bases.clone(),
        status,
    };
    if nullspace.is_empty() {
        return Ok(empty(RedsStatus::EmptyNullspace, Vec::new()));
    }

    let a_c = spectral_normalize(changing_gram).gram;
    let n = nullspace.columns();
    let projected = n.transpose() * a_c.as_matrix() * n;
    let projected = (&projected + projected.transpose()) * 0.5;
    let spectrum = SymmetricSpectrum::of(&projected);
    let eigenvalues = spectrum.clamped_eigenvalues();
    let changing_rank = explained_variance_rank(&eigenvalues, beta_c, mode)?;
    if changing_rank == 0 {
        return Ok(empty(RedsStatus::FlatChanging, eigenvalues));
    }
    let mut r = n * spectrum.eigenvectors.columns(0, changing_rank);
    canonicalize_columns(&mut r);

    Ok(RedsResult {
        basis: SubspaceBasis { columns: r },
        projected_eigenvalues: eigenvalues,
        fixed_ranks,
        changing_rank,
        nullspace,
        range_bases,
        status: RedsStatus::Ok,
    })
}

/// Principal eigenvector of `A_f⁻¹ A_c`, the unconstrained maximizer of the
/// Rayleigh quotient `(vᵀ A_c v) / (vᵀ A_f v)`. Cross-check path only: it
/// requires `A_f` to be strictly positive definite.
pub fn generalized_rayleigh_reference(a_f: &GramMatrix, a_c: &GramMatrix) -> Result<DVector<f64>> {
    if a_f.dim() != a_c.dim() {
        return Err(RedsError::InvalidInput("A_f and A_c dimensions differ".into()));
    }
    let spectrum = a_f.spectrum();
    let (max, min) = (spectrum.max_eigenvalue(), spectrum.min_eigenvalue());
    if max.is_nan() || max <= 0.0 || min <= PSD_RTOL * max {
        return Err(RedsError::SingularMatrix(format!(
            "A_f is not positive definite (lambda_min = {min:e}, lambda_max = {max:e}); use compute_reds"
        )));
    }
    let chol = a_f
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| RedsError::SingularMatrix("Cholesky factorization of A_f failed".into()))?;
    let l = chol.l();
    // M = L⁻¹ A_c L⁻ᵀ is symmetric with the same spectrum as A_f⁻¹ A_c.
    let x = l
        .solve_lower_triangular(a_c.as_matrix())
        .ok_or_else(|| RedsError::SingularMatrix("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| RedsError::SingularMatrix("triangular solve failed".into()))?;
    let m = (&m + m.transpose()) * 0.5;
    let w = SymmetricSpectrum::of(&m).eigenvectors.column(0).into_owned();
    let mut v = l
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or_else(|| RedsError::SingularMatrix("triangular solve failed".into()))?;
    v.normalize_mut();
    canonicalize_sign(&mut v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn diag(values: &[f64]) -> GramMatrix {
        GramMatrix::from_diagonal(values).unwrap()
    }

    fn random_jacobian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        rng::normal_matrix(&mut rng::seeded(seed), rows, cols, 1.0)
    }

    fn power_iteration_max(a: &DMatrix<f64>) -> f64 {
        let mut v = DVector::from_element(a.nrows(), 1.0).normalize();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = a * &v;
            lambda = v.dot(&w);
            v = w.normalize();
        }
        lambda
    }

    #[test]
    fn gram_rejects_non_finite_and_non_square() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(GramMatrix::new(m), Err(RedsError::InvalidInput(_))));
        assert!(GramMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn gram_rejects_indefinite() {
        assert!(GramMatrix::from_diagonal(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn gram_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let g = GramMatrix::new(m).unwrap();
        assert_eq!(g.as_matrix()[(0, 1)], 0.5);
        assert_eq!(g.as_matrix()[(1, 0)], 0.5);
    }

    #[test]
    fn normalize_diagonal() {
        let n = spectral_normalize(&diag(&[2.0, 1.0]));
        assert!(!n.null_scale);
        assert!((n.gram.as_matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]))).amax() < 1e-15);
    }

    #[test]
    fn normalize_identity_is_unchanged() {
        let n = spectral_normalize(&GramMatrix::identity(4));
        assert_eq!(n.gram, GramMatrix::identity(4));
    }

    #[test]
    fn normalize_random_gram_has_unit_top_eigenvalue() {
        let j = random_jacobian(3, 8, 7);
        let n = spectral_normalize(&GramMatrix::from_jacobian(&j));
        let top = power_iteration_max(n.gram.as_matrix());
        assert!((top - 1.0).abs() < 1e-10, "power-iteration lambda_max = {top}");
    }

    #[test]
    fn normalize_flags_zero_matrix() {
        let zero = GramMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let n = spectral_normalize(&zero);
        assert!(n.null_scale);
        assert_eq!(n.gram, zero);
    }

    #[test]
    fn spectrum_is_sorted_orthonormal_and_reconstructs() {
        let a = GramMatrix::from_jacobian(&random_jacobian(5, 6, 3));
        let s = a.spectrum();
        assert!(s.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let v = &s.eigenvectors;
        assert!((v.transpose() * v - DMatrix::identity(6, 6)).amax() < 1e-10);
        let rebuilt = v * DMatrix::from_diagonal(&s.eigenvalues) * v.transpose();
        assert!((rebuilt - a.as_matrix()).amax() <= 1e-8 * s.max_eigenvalue());
        for j in 0..6 {
            let col = v.column(j);
            let k = argmax_abs(col.iter().copied()).unwrap();
            assert!(col[k] > 0.0);
        }
    }

    #[test]
    fn rank_examples() {
        let sq = RankMode::Squared;
        assert_eq!(explained_variance_rank(&[1.0, 0.0, 0.0, 0.0], 0.99, sq).unwrap(), 1);
        assert_eq!(explained_variance_rank(&[1.0, 1.0, 1.0, 1.0], 0.99, sq).unwrap(), 4);
        // cumulative squared fractions 9/14, 13/14, 1
        assert_eq!(explained_variance_rank(&[3.0, 2.0, 1.0], 0.9, sq).unwrap(), 2);
        assert_eq!(explained_variance_rank(&[3.0, 2.0, 1.0], 0.95, sq).unwrap(), 3);
        assert_eq!(explained_variance_rank(&[3.0, 2.0, 1.0], 0.92, sq).unwrap(), 2);
        assert_eq!(explained_variance_rank(&[0.0, 0.0], 0.5, sq).unwrap(), 0);
        // tiny negatives are clamped
        assert_eq!(explained_variance_rank(&[1.0, -1e-17], 1.0, sq).unwrap(), 1);
    }

    #[test]
    fn rank_literal_mode_uses_unsquared_sums() {
        // normalized spectrum (1, 2/3, 1/3): sum u^2 = 14/9, target 0.999*14/9 = 1.554;
        // cumulative unsquared sums 1, 5/3 -> rank 2.
        let u = [1.0, 2.0 / 3.0, 1.0 / 3.0];
        assert_eq!(explained_variance_rank(&u, 0.999, RankMode::Literal).unwrap(), 2);
        assert_eq!(explained_variance_rank(&u, 0.999, RankMode::Squared).unwrap(), 3);
    }

    #[test]
    fn rank_rejects_bad_beta() {
        for beta in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                explained_variance_rank(&[1.0], beta, RankMode::Squared),
                Err(RedsError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn nullspace_of_rank_one_diagonal() {
        let s = diag(&[1.0, 0.0, 0.0]).spectrum();
        let n = nullspace_basis(&s, 1).unwrap();
        assert_eq!(n.rank(), 2);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(n.coordinates(&e1).amax() < 1e-15);
        for e in [DVector::from_vec(vec![0.0, 1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 1.0])] {
            assert!((n.project(&e) - &e).amax() < 1e-15);
        }
    }

    #[test]
    fn nullspace_full_rank_is_empty_and_overrank_errors() {
        let s = GramMatrix::identity(3).spectrum();
        assert!(nullspace_basis(&s, 3).unwrap().is_empty());
        assert!(nullspace_basis(&s, 4).is_err());
    }

    #[test]
    fn nullspace_annihilates_jacobian() {
        let j = random_jacobian(2, 6, 21);
        let s = GramMatrix::from_jacobian(&j).spectrum();
        let n = nullspace_basis(&s, 2).unwrap();
        let jnorm = j.norm();
        for c in 0..n.rank() {
            assert!((&j * n.column(c)).norm() <= 1e-8 * jnorm);
        }
    }

    #[test]
    fn intersect_coordinate_axes() {
        let e = |i: usize| SubspaceBasis::from_orthonormal_columns(DMatrix::from_fn(4, 1, |r, _| (r == i) as u8 as f64)).unwrap();
        let n = intersect_nullspaces(&[e(0), e(1)], 4).unwrap();
        assert_eq!(n.rank(), 2);
        for k in [2, 3] {
            let v = DVector::from_fn(4, |r, _| (r == k) as u8 as f64);
            assert!((n.project(&v) - &v).amax() < 1e-12);
        }
    }

    #[test]
    fn intersect_empty_list_is_identity() {
        let n = intersect_nullspaces(&[], 5).unwrap();
        assert_eq!(n.columns(), &DMatrix::<f64>::identity(5, 5));
    }

    #[test]
    fn intersect_rejects_mismatched_dims() {
        assert!(intersect_nullspaces(&[SubspaceBasis::identity(3)], 4).is_err());
    }

    #[test]
    fn reds_diagonal_example() {
        let a_f = diag(&[1.0, 0.0, 0.0, 0.0]);
        let a_c = diag(&[0.0, 3.0, 2.0, 1.0]);
        let r = compute_reds(&[a_f], &a_c, &[0.99], 0.999, RankMode::Squared).unwrap();
        assert_eq!(r.status, RedsStatus::Ok);
        assert_eq!(r.fixed_ranks, vec![1]);
        assert_eq!(r.nullspace.rank(), 3);
        assert_eq!(r.changing_rank, 3);
        let expect = [1.0, 2.0 / 3.0, 1.0 / 3.0];
        for (a, b) in r.projected_eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        for (j, axis) in [1usize, 2, 3].into_iter().enumerate() {
            let col = r.basis.column(j);
            assert!((col[axis] - 1.0).abs() < 1e-12, "column {j} = {col}");
        }
    }

    #[test]
    fn reds_defaults() {
        assert_eq!(DEFAULT_BETA_FIXED, 0.99);
        assert_eq!(DEFAULT_BETA_CHANGING, 0.999);
    }

    #[test]
    fn reds_no_constraints_is_plain_pca() {
        let a_c = diag(&[1.0, 4.0, 2.0]);
        let r = compute_reds(&[], &a_c, &[], 0.5, RankMode::Squared).unwrap();
        assert_eq!(r.nullspace.rank(), 3);
        assert_eq!(r.changing_rank, 1);
        assert!((r.basis.column(0)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reds_zero_fixed_gram_imposes_nothing() {
        let zero = GramMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let r = compute_reds(&[zero], &GramMatrix::identity(3), &[0.99], 0.99, RankMode::Squared).unwrap();
        assert_eq!(r.fixed_ranks, vec![0]);
        assert_eq!(r.nullspace.rank(), 3);
    }

    #[test]
    fn reds_full_rank_constraint_reports_empty_nullspace() {
        let a_f = diag(&[1.0, 1.0, 1.0]);
        let r = compute_reds(&[a_f], &GramMatrix::identity(3), &[1.0], 0.99, RankMode::Squared).unwrap();
        assert_eq!(r.status, RedsStatus::EmptyNullspace);
        assert!(r.basis.is_empty());
    }

    #[test]
    fn reds_flat_changing_feature() {
        let a_f = diag(&[1.0, 0.0]);
        let a_c = diag(&[1.0, 0.0]);
        let r = compute_reds(&[a_f], &a_c, &[0.99], 0.99, RankMode::Squared).unwrap();
        assert_eq!(r.status, RedsStatus::FlatChanging);
    }

    #[test]
    fn reds_rejects_dimension_mismatch() {
        let r = compute_reds(&[GramMatrix::identity(2)], &GramMatrix::identity(3), &[0.9], 0.9, RankMode::Squared);
        assert!(matches!(r, Err(RedsError::InvalidInput(_))));
        let r = compute_reds(&[GramMatrix::identity(3)], &GramMatrix::identity(3), &[], 0.9, RankMode::Squared);
        assert!(r.is_err());
    }

    #[test]
    fn reference_diagonal_examples() {
        let v = generalized_rayleigh_reference(&GramMatrix::identity(2), &diag(&[3.0, 1.0])).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-12);
        let v = generalized_rayleigh_reference(&diag(&[4.0, 1.0]), &diag(&[4.0, 2.0])).unwrap();
        assert!((v[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_rejects_singular() {
        let r = generalized_rayleigh_reference(&diag(&[1.0, 0.0]), &GramMatrix::identity(2));
        assert!(matches!(r, Err(RedsError::SingularMatrix(_))));
    }
}
