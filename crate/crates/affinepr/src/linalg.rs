//! Small dense linear algebra with explicit rank tolerances.
//!
//! Everything is desk scale (m <= ~24, d <= ~64), so the SVD / symmetric
//! eigendecomposition of nalgebra is used directly. Rank decisions always go
//! through [`RankTolerance`] so the discontinuous choices are explicit and
//! overridable.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative threshold for singular-value rank decisions.
///
/// The effective cutoff for a matrix with largest singular value s_max is
/// `relative * s_max * max(nrows, ncols)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankTolerance {
    relative: f64,
}

impl RankTolerance {
    pub const DEFAULT_RELATIVE: f64 = 1e-10;

    pub fn new(relative: f64) -> Result<Self> {
        if relative <= 0.0 || !relative.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rank tolerance must be strictly positive and finite, got {relative}"
            )));
        }
        Ok(RankTolerance { relative })
    }

    pub fn relative(self) -> f64 {
        self.relative
    }

    pub fn absolute(self, sigma_max: f64, nrows: usize, ncols: usize) -> f64 {
        self.relative * sigma_max * nrows.max(ncols) as f64
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance {
            relative: Self::DEFAULT_RELATIVE,
        }
    }
}

pub(crate) fn singular_values<T>(a: &DMatrix<T>) -> DVector<f64>
where
    T: ComplexField<RealField = f64>,
{
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

/// Numerical rank via singular values.
pub(crate) fn numerical_rank<T>(a: &DMatrix<T>, tol: RankTolerance) -> usize
where
    T: ComplexField<RealField = f64>,
{
    let sv = singular_values(a);
    if sv.is_empty() {
        return 0;
    }
    let sigma_max = sv.iter().fold(0.0_f64, |m, &s| m.max(s));
    let cutoff = tol.absolute(sigma_max, a.nrows(), a.ncols());
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Whether b lies in the column span of a, decided from the ranks of a and
/// [a | b] at a shared cutoff derived from the augmented matrix.
pub(crate) fn in_column_span<T>(a: &DMatrix<T>, b: &DVector<T>, tol: RankTolerance) -> bool
where
    T: ComplexField<RealField = f64> + Copy,
{
    if a.nrows() == 0 {
        return true;
    }
    let mut aug = DMatrix::zeros(a.nrows(), a.ncols() + 1);
    aug.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    aug.view_mut((0, a.ncols()), (a.nrows(), 1)).copy_from(b);
    let sv_aug = singular_values(&aug);
    let sigma_max = sv_aug.iter().fold(0.0_f64, |m, &s| m.max(s));
    let cutoff = tol.absolute(sigma_max, aug.nrows(), aug.ncols());
    let rank_aug = sv_aug.iter().filter(|&&s| s > cutoff).count();
    let rank_a = singular_values(a).iter().filter(|&&s| s > cutoff).count();
    rank_aug == rank_a
}

/// Minimum-norm least-squares solution of a x = b.
pub(crate) fn min_norm_solve<T>(a: &DMatrix<T>, b: &DVector<T>, tol: RankTolerance) -> Result<DVector<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    if a.nrows() == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let eps = tol.absolute(sigma_max, a.nrows(), a.ncols());
    svd.solve(b, eps)
        .map_err(|e| Error::Internal(format!("least-squares solve failed: {e}")))
}

/// Unit vector minimizing ||a v|| over the unit sphere, i.e. the right
/// singular direction of the smallest singular value (null-space direction
/// when the rank is deficient). Computed through the Gram matrix so the full
/// orthogonal complement is reachable even for wide matrices. The sign/phase
/// is canonicalized for reproducible fixtures.
pub(crate) fn smallest_right_singular_direction<T>(a: &DMatrix<T>) -> DVector<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = a.ncols();
    if a.nrows() == 0 {
        let mut e = DVector::zeros(n);
        e[0] = T::one();
        return e;
    }
    let gram = a.adjoint() * a;
    let eig = SymmetricEigen::new(gram);
    let mut idx = 0;
    for k in 1..n {
        if eig.eigenvalues[k] < eig.eigenvalues[idx] {
            idx = k;
        }
    }
    let mut v: DVector<T> = eig.eigenvectors.column(idx).into_owned();
    canonicalize_phase(&mut v);
    let norm = v.norm();
    if norm > 0.0 {
        v /= T::from_real(norm);
    }
    v
}

/// Orthonormal basis of the (numerical) null space, smallest eigenvalues of
/// the Gram matrix first. `rank` must come from a singular-value decision.
pub(crate) fn null_space_basis<T>(a: &DMatrix<T>, rank: usize) -> Vec<DVector<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = a.ncols();
    let nullity = n.saturating_sub(rank);
    if nullity == 0 {
        return Vec::new();
    }
    if a.nrows() == 0 {
        return (0..n)
            .map(|i| {
                let mut e: DVector<T> = DVector::zeros(n);
                e[i] = T::one();
                e
            })
            .collect();
    }
    let gram = a.adjoint() * a;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap()
            .then(i.cmp(&j))
    });
    order
        .into_iter()
        .take(nullity)
        .map(|k| {
            let mut v: DVector<T> = eig.eigenvectors.column(k).into_owned();
            canonicalize_phase(&mut v);
            v
        })
        .collect()
}

/// Multiplies by a unimodular scalar so the largest-modulus entry (first among
/// ties) is positive real.
pub(crate) fn canonicalize_phase<T>(v: &mut DVector<T>)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let mut best = 0;
    let mut best_mod = 0.0_f64;
    for (i, z) in v.iter().enumerate() {
        let m = z.modulus();
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if best_mod == 0.0 {
        return;
    }
    let z = v[best];
    let phase = z.conjugate() * T::from_real(1.0 / z.modulus());
    for entry in v.iter_mut() {
        *entry *= phase;
    }
}

/// Greedy row selection by largest pivot: modified Gram-Schmidt over the rows,
/// at each step picking the row with the largest residual norm (lowest index
/// on ties). Returns the selected row indices in ascending order.
pub(crate) fn greedy_pivot_rows(a: &DMatrix<Complex64>, count: usize) -> Vec<usize> {
    let m = a.nrows();
    let mut residuals: Vec<DVector<Complex64>> =
        (0..m).map(|j| a.row(j).transpose().into_owned()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut used = vec![false; m];
    for _ in 0..count {
        let mut best: Option<usize> = None;
        let mut best_norm = 0.0_f64;
        for j in 0..m {
            if used[j] {
                continue;
            }
            let n = residuals[j].norm();
            if n > best_norm {
                best_norm = n;
                best = Some(j);
            }
        }
        let Some(jb) = best else { break };
        used[jb] = true;
        chosen.push(jb);
        let q = residuals[jb].clone() / Complex64::new(best_norm, 0.0);
        for j in 0..m {
            if used[j] {
                continue;
            }
            let coeff = q.dotc(&residuals[j]);
            residuals[j] -= q.clone() * coeff;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Eigenpair with the largest eigenvalue of a Hermitian matrix (first index
/// wins ties).
pub(crate) fn top_hermitian_eigenpair<T>(h: DMatrix<T>) -> (f64, DVector<T>)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = h.nrows();
    let eig = SymmetricEigen::new(h);
    let mut idx = 0;
    for k in 1..n {
        if eig.eigenvalues[k] > eig.eigenvalues[idx] {
            idx = k;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}
