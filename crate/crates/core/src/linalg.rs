//! Dense symmetric matrix primitives.
//!
//! [`SymMatrix`] is the carrier for every covariance and correlation estimate
//! in the crate. Construction checks that the entries are finite and exactly
//! symmetric, so downstream code never re-validates.
//!
//! Eigendecompositions are delegated to `nalgebra`; norms, the PSD square root
//! and the Gershgorin-style operator-norm bounds are built on top of it.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_domain, CovError, Result};

/// Relative clamp for tiny negative eigenvalues in [`psd_sqrt`].
pub const PSD_CLAMP_TOL: f64 = 1e-10;

/// Dense symmetric `d x d` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates `m` as square, finite and exactly symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let d = m.nrows();
        for j in 0..d {
            for i in (j + 1)..d {
                if m[(i, j)] != m[(j, i)] {
                    return Err(CovError::Asymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds a symmetric matrix from `(m + m^T) / 2`.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self::from_trusted(symmetric_part(m)))
    }

    /// Builds a matrix by evaluating `f(i, j)` on the lower triangle (`i >= j`)
    /// and mirroring.
    pub fn from_lower_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(CovError::NonFinite { row: i, col: j });
                }
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self(m))
    }

    /// Row-major nested slices, for tests and small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(CovError::NotSquare {
                    rows: d,
                    cols: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::new(m)
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if let Some(i) = diag.iter().position(|v| !v.is_finite()) {
            return Err(CovError::NonFinite { row: i, col: i });
        }
        Ok(Self(DMatrix::from_diagonal(&DVector::from_column_slice(
            diag,
        ))))
    }

    /// Caller guarantees symmetry and finiteness.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square());
        debug_assert!(m.iter().all(|v| v.is_finite()));
        Self(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// Applies `f` to every strictly-lower entry `(i, j, value)` and mirrors
    /// the result; the diagonal is copied unchanged.
    pub fn map_off_diagonal(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let d = self.dim();
        let mut out = self.0.clone();
        for j in 0..d {
            for i in (j + 1)..d {
                let v = f(i, j, self.0[(i, j)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Self::from_trusted(out)
    }

    /// Absolute values of the strictly-lower entries, column by column.
    pub fn off_diagonal_magnitudes(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
        for j in 0..d {
            for i in (j + 1)..d {
                out.push(self.0[(i, j)].abs());
            }
        }
        out
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        self.off_diagonal_magnitudes()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Same matrix with every off-diagonal entry set to zero.
    pub fn diagonal_part(&self) -> Self {
        self.map_off_diagonal(|_, _, _| 0.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        same_dim(self, other)?;
        Ok(Self::from_trusted(&self.0 - &other.0))
    }

    /// `D * self * D` for `D = diag(scale)`.
    pub fn scale_both(&self, scale: &[f64]) -> Result<Self> {
        if scale.len() != self.dim() {
            return Err(CovError::DimensionMismatch {
                expected: self.dim(),
                actual: scale.len(),
            });
        }
        let m = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            scale[i] * self.0[(i, j)] * scale[j]
        });
        if let Some((i, j)) = first_non_finite(&m) {
            return Err(CovError::NonFinite { row: i, col: j });
        }
        Ok(Self::from_trusted(m))
    }

    /// `P * self * P^T` where row `k` of the result is row `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim() {
            return Err(CovError::DimensionMismatch {
                expected: self.dim(),
                actual: perm.len(),
            });
        }
        let d = self.dim();
        Ok(Self::from_trusted(DMatrix::from_fn(d, d, |i, j| {
            self.0[(perm[i], perm[j])]
        })))
    }

    /// Eigenvalues in non-increasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Largest absolute eigenvalue, i.e. the spectral norm.
    pub fn operator_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Schatten norm via the absolute eigenvalues, which are the singular
    /// values of a symmetric matrix.
    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        check_norm_exponent("p", p)?;
        let sv: Vec<f64> = self.eigenvalues().into_iter().map(f64::abs).collect();
        Ok(lp_norm(&sv, p))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `min eigenvalue >= -tol * max(|eigenvalue|)`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        ev.last().is_none_or(|&min| min >= -rel_tol * scale)
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigen-decomposition `m = vectors * diag(values) * vectors^T` with values
/// sorted non-increasing.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn sym_eigen(m: &SymMatrix) -> EigenPair {
    let d = m.dim();
    let eig = m.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    EigenPair { values, vectors }
}

/// Schatten `p`-norm of an arbitrary (possibly rectangular) matrix.
///
/// Symmetric input uses absolute eigenvalues; anything else goes through a
/// singular value decomposition. `p = f64::INFINITY` selects the operator
/// norm.
pub fn schatten_norm(m: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_norm_exponent("p", p)?;
    if let Some((i, j)) = first_non_finite(m) {
        return Err(CovError::NonFinite { row: i, col: j });
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let sv: Vec<f64> = if m.is_square() && *m == m.transpose() {
        m.symmetric_eigenvalues().iter().map(|v| v.abs()).collect()
    } else {
        m.singular_values().iter().copied().collect()
    };
    Ok(lp_norm(&sv, p))
}

/// `(p, q)`-entrywise norm: the `l^p` norm over rows of the `l^q` norms of
/// each row's absolute entries.
pub fn entrywise_norm(m: &DMatrix<f64>, p: f64, q: f64) -> Result<f64> {
    check_norm_exponent("p", p)?;
    check_norm_exponent("q", q)?;
    let row_norms: Vec<f64> = m
        .row_iter()
        .map(|row| {
            let abs: Vec<f64> = row.iter().map(|v| v.abs()).collect();
            lp_norm(&abs, q)
        })
        .collect();
    Ok(lp_norm(&row_norms, p))
}

/// Unique symmetric PSD square root `U D^{1/2} U^T`.
///
/// Eigenvalues in `[-tol, 0)` with `tol = 1e-10 * max eigenvalue` are clamped
/// to zero; anything more negative is rejected.
pub fn psd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(m);
    let d = m.dim();
    if d == 0 {
        return Ok(SymMatrix::zeros(0));
    }
    let max = eig.values[0].max(0.0);
    let min = eig.values[d - 1];
    if min < -PSD_CLAMP_TOL * max || (max == 0.0 && min < 0.0) {
        return Err(CovError::NotPsd {
            min_eigenvalue: min,
        });
    }
    let roots = eig.values.map(|v| v.max(0.0).sqrt());
    let root = &eig.vectors * DMatrix::from_diagonal(&roots) * eig.vectors.transpose();
    Ok(SymMatrix::from_trusted(symmetric_part(root)))
}

/// Cheap bracket on the spectral norm: the largest column `l^2` norm from
/// below and the largest column `l^1` norm (Gershgorin) from above.
pub fn opnorm_bounds(m: &SymMatrix) -> (f64, f64) {
    m.0.column_iter().fold((0.0_f64, 0.0_f64), |(lo, hi), col| {
        let l2 = col.norm();
        let l1 = col.iter().map(|v| v.abs()).sum::<f64>();
        (lo.max(l2), hi.max(l1))
    })
}

/// `l^p` norm of a nonnegative vector, scaled by its maximum to keep large
/// `p` from overflowing.
pub(crate) fn lp_norm(abs_values: &[f64], p: f64) -> f64 {
    let max = abs_values.iter().fold(0.0_f64, |a, v| a.max(*v));
    if p.is_infinite() || max == 0.0 {
        return max;
    }
    if p == 1.0 {
        return abs_values.iter().sum();
    }
    let s: f64 = abs_values.iter().map(|v| (v / max).powf(p)).sum();
    max * s.powf(1.0 / p)
}

fn check_norm_exponent(name: &'static str, p: f64) -> Result<()> {
    check_domain(name, p, p >= 1.0, "norm exponent must be >= 1 or infinity")
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(CovError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if let Some((i, j)) = first_non_finite(m) {
        return Err(CovError::NonFinite { row: i, col: j });
    }
    Ok(())
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    let idx = m.iter().position(|v| !v.is_finite())?;
    // column-major storage
    Some((idx % m.nrows(), idx / m.nrows()))
}

fn symmetric_part(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(CovError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn construction_rejects_asymmetry_and_nan() {
        assert!(matches!(
            SymMatrix::from_rows(&[&[1.0, 2.0], &[2.5, 1.0]]),
            Err(CovError::Asymmetric { row: 1, col: 0 })
        ));
        assert!(matches!(
            SymMatrix::from_rows(&[&[f64::NAN, 0.0], &[0.0, 1.0]]),
            Err(CovError::NonFinite { row: 0, col: 0 })
        ));
        assert!(matches!(
            SymMatrix::new(DMatrix::zeros(2, 3)),
            Err(CovError::NotSquare { .. })
        ));
    }

    #[test]
    fn eigen_of_diagonal_is_sorted_permuted_identity() {
        let m = SymMatrix::from_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let e = sym_eigen(&m);
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        // columns are +/- unit vectors e0, e2, e1
        let expect = [0usize, 2, 1];
        for (col, &row) in expect.iter().enumerate() {
            assert!(close(e.vectors[(row, col)].abs(), 1.0, 1e-12));
        }
    }

    #[test]
    fn eigen_of_swap_matrix() {
        let m = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let e = sym_eigen(&m);
        assert!(close(e.values[0], 1.0, 1e-12));
        assert!(close(e.values[1], -1.0, 1e-12));
    }

    #[test]
    fn eigen_reconstructs_random_matrices() {
        let mut r = rng(7);
        for _ in 0..20 {
            let m = random_symmetric(&mut r, 5);
            let e = sym_eigen(&m);
            let scale = 1.0 + m.as_matrix().amax();
            assert!((e.reconstruct() - m.as_matrix()).amax() <= 1e-8 * scale);
            let gram = e.vectors.transpose() * &e.vectors;
            assert!((gram - DMatrix::identity(5, 5)).amax() <= 1e-8);
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn schatten_examples() {
        let i3 = SymMatrix::identity(3);
        assert!(close(i3.schatten_norm(1.0).unwrap(), 3.0, 1e-12));
        assert!(close(
            schatten_norm(i3.as_matrix(), 1.0).unwrap(),
            3.0,
            1e-12
        ));

        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let xxt = &x * x.transpose();
        let sq = x.norm_squared();
        for p in [1.0, 1.5, 2.0, 3.0, 10.0, f64::INFINITY] {
            assert!(close(schatten_norm(&xxt, p).unwrap(), sq, 1e-10 * sq));
        }
        assert!(matches!(
            schatten_norm(&xxt, 0.5),
            Err(CovError::Domain { name: "p", .. })
        ));
    }

    #[test]
    fn schatten_handles_rectangular() {
        // singular values of [[3,0,0],[0,4,0]] are 4 and 3
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        assert!(close(schatten_norm(&m, 1.0).unwrap(), 7.0, 1e-12));
        assert!(close(schatten_norm(&m, 2.0).unwrap(), 5.0, 1e-12));
        assert!(close(schatten_norm(&m, f64::INFINITY).unwrap(), 4.0, 1e-12));
        let mt = m.transpose();
        assert!(close(schatten_norm(&mt, 1.0).unwrap(), 7.0, 1e-12));
    }

    #[test]
    fn entrywise_examples() {
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert!(close(entrywise_norm(&ones, 1.0, 1.0).unwrap(), 4.0, 1e-15));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(
            entrywise_norm(&m, f64::INFINITY, f64::INFINITY).unwrap(),
            4.0
        );
        assert!(close(
            entrywise_norm(&m, 1.0, 2.0).unwrap(),
            5.0_f64.sqrt() + 5.0,
            1e-12
        ));
        assert!(entrywise_norm(&m, 2.0, 0.9).is_err());
    }

    #[test]
    fn psd_sqrt_examples() {
        let i = SymMatrix::identity(4);
        assert!((psd_sqrt(&i).unwrap().as_matrix() - i.as_matrix()).amax() < 1e-14);
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = psd_sqrt(&d).unwrap();
        assert!(close(r.get(0, 0), 2.0, 1e-12) && close(r.get(1, 1), 3.0, 1e-12));
        assert!(r.get(0, 1).abs() < 1e-14);

        let mut g = rng(11);
        for _ in 0..20 {
            let m = random_psd(&mut g, 3);
            let root = psd_sqrt(&m).unwrap();
            let sq = root.as_matrix() * root.as_matrix();
            let scale = m.as_matrix().amax().max(1.0);
            assert!((sq - m.as_matrix()).amax() <= 1e-8 * scale);
            assert!(root.is_psd(1e-10));
        }
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(matches!(psd_sqrt(&m), Err(CovError::NotPsd { .. })));
        assert!(psd_sqrt(&SymMatrix::zeros(3)).is_ok());
    }

    #[test]
    fn opnorm_bounds_examples() {
        let d = SymMatrix::from_diagonal(&[1.0, 5.0, 2.0]).unwrap();
        assert_eq!(opnorm_bounds(&d), (5.0, 5.0));
        let ones = SymMatrix::from_lower_fn(3, |_, _| 1.0).unwrap();
        let (lo, hi) = opnorm_bounds(&ones);
        assert!(close(lo, 3.0_f64.sqrt(), 1e-15));
        assert!(close(hi, 3.0, 1e-15));
        assert!(close(ones.operator_norm(), 3.0, 1e-12));
        assert_eq!(opnorm_bounds(&SymMatrix::zeros(4)), (0.0, 0.0));
    }

    #[test]
    fn norm_identities_on_random_matrices() {
        let mut r = rng(2024);
        for k in 0..200 {
            let d = 2 + k % 7;
            let m = random_symmetric(&mut r, d);
            let s1 = m.schatten_norm(1.0).unwrap();
            let s2 = m.schatten_norm(2.0).unwrap();
            let sinf = m.schatten_norm(f64::INFINITY).unwrap();
            assert!(sinf <= s2 * (1.0 + 1e-12) && s2 <= s1 * (1.0 + 1e-12));
            let e22 = entrywise_norm(m.as_matrix(), 2.0, 2.0).unwrap();
            assert!((s2 - e22).abs() <= 1e-10 * e22);
            let (lo, hi) = opnorm_bounds(&m);
            assert!(lo <= sinf * (1.0 + 1e-12) && sinf <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn schatten_is_rotation_invariant() {
        let mut r = rng(5);
        for _ in 0..30 {
            let m = random_symmetric(&mut r, 6);
            let q = random_orthogonal(&mut r, 6);
            let rotated = SymMatrix::symmetrize(q.transpose() * m.as_matrix() * &q).unwrap();
            for p in [1.0, 2.0, 3.5, f64::INFINITY] {
                let a = m.schatten_norm(p).unwrap();
                let b = rotated.schatten_norm(p).unwrap();
                assert!((a - b).abs() <= 1e-8, "p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn permute_and_scale() {
        let m =
            SymMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]).unwrap();
        let p = m.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(0, 0), 6.0);
        assert_eq!(p.get(0, 1), 3.0);
        assert_eq!(p.get(1, 2), 2.0);
        let s = m.scale_both(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.get(1, 2), 30.0);
    }
}
