//! Empirical covariance, correlation normalization and the ground-truth
//! covariance models used by the simulations.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{CovError, Result};
use crate::linalg::SymMatrix;

/// `n x d` data matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: DMatrix<f64>,
}

impl Sample {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(CovError::SampleSize {
                required: 2,
                actual: data.nrows(),
            });
        }
        if data.ncols() < 1 {
            return Err(CovError::TooFewVariables {
                required: 1,
                actual: 0,
            });
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(CovError::NonFinite {
                row: idx % data.nrows(),
                col: idx / data.nrows(),
            });
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(CovError::DimensionMismatch {
                expected: d,
                actual: rows[bad].len(),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Observations at the given row indices, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.data.select_rows(rows.iter()))
    }

    /// Variables at the given column indices, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        Self::new(self.data.select_columns(cols.iter()))
    }
}

/// `n^{-1} sum_i (X_i - mean)(X_i - mean)^T`.
///
/// Each entry is an independent dot product over centered columns, so the
/// result is exactly symmetric and exactly permutation-equivariant.
pub fn empirical_cov(s: &Sample) -> SymMatrix {
    let n = s.n();
    let d = s.d();
    let mut centered = s.data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let inv_n = 1.0 / n as f64;
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let cj = centered.column(j);
        for i in j..d {
            let v = centered.column(i).dot(&cj) * inv_n;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymMatrix::from_trusted(out)
}

/// Unit-diagonal correlation matrix together with the standard deviations
/// that undo the normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub corr: SymMatrix,
    pub scale: Vec<f64>,
}

impl Correlation {
    /// `diag(scale) * corr * diag(scale)`.
    pub fn rescale(&self, corr_like: &SymMatrix) -> Result<SymMatrix> {
        let out = corr_like.scale_both(&self.scale)?;
        // keep the diagonal bit-identical to the source covariance
        let mut m = out.into_inner();
        for i in 0..self.scale.len() {
            m[(i, i)] = corr_like.get(i, i) * self.scale[i] * self.scale[i];
        }
        Ok(SymMatrix::from_trusted(m))
    }
}

pub fn to_correlation(m: &SymMatrix) -> Result<Correlation> {
    let diag = m.diagonal();
    if let Some((index, &variance)) = diag.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(CovError::DegenerateVariable { index, variance });
    }
    let scale: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let d = m.dim();
    let corr = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            m.get(i, j) / (scale[i] * scale[j])
        }
    });
    Ok(Correlation {
        corr: SymMatrix::from_trusted(corr),
        scale,
    })
}

/// Ground-truth covariance structures for simulations.
#[derive(Debug, Clone, PartialEq)]
pub enum CovModel {
    /// `sigma_ij = rho^|i-j|`
    Ar(f64),
    /// Unit diagonal, `rho` on the first off-diagonals.
    Ma(f64),
    /// Same matrix as [`CovModel::Ma`].
    TriDiag(f64),
    Custom(SymMatrix),
}

impl CovModel {
    pub fn matrix(&self, d: usize) -> Result<SymMatrix> {
        model_matrix(self, d)
    }
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovModel::Ar(r) => write!(f, "ar:{r}"),
            CovModel::Ma(r) => write!(f, "ma:{r}"),
            CovModel::TriDiag(r) => write!(f, "tridiag:{r}"),
            CovModel::Custom(m) => write!(f, "custom:{}", m.dim()),
        }
    }
}

impl FromStr for CovModel {
    type Err = CovError;

    /// Parses `ar:0.3`, `ma:0.3` or `tridiag:0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rho) = s
            .split_once(':')
            .ok_or_else(|| CovError::ModelParameter(format!("expected kind:rho, got `{s}`")))?;
        let rho: f64 = rho
            .trim()
            .parse()
            .map_err(|_| CovError::ModelParameter(format!("bad rho in `{s}`")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "ar" => Ok(CovModel::Ar(rho)),
            "ma" => Ok(CovModel::Ma(rho)),
            "tridiag" => Ok(CovModel::TriDiag(rho)),
            other => Err(CovError::ModelParameter(format!(
                "unknown covariance model `{other}`"
            ))),
        }
    }
}

/// Materializes `model` at dimension `d`, rejecting parameters whose matrix
/// is not PSD.
pub fn model_matrix(model: &CovModel, d: usize) -> Result<SymMatrix> {
    if d == 0 {
        return Err(CovError::TooFewVariables {
            required: 1,
            actual: 0,
        });
    }
    let m = match model {
        CovModel::Ar(rho) => {
            check_rho(*rho)?;
            SymMatrix::from_lower_fn(d, |i, j| rho.powi((i - j) as i32))?
        }
        CovModel::Ma(rho) | CovModel::TriDiag(rho) => {
            check_rho(*rho)?;
            SymMatrix::from_lower_fn(d, |i, j| match i - j {
                0 => 1.0,
                1 => *rho,
                _ => 0.0,
            })?
        }
        CovModel::Custom(m) => {
            if m.dim() != d {
                return Err(CovError::DimensionMismatch {
                    expected: d,
                    actual: m.dim(),
                });
            }
            m.clone()
        }
    };
    if !m.is_psd(1e-10) {
        let min = m.eigenvalues().last().copied().unwrap_or(0.0);
        return Err(CovError::ModelParameter(format!(
            "{model} at d = {d} is not positive semi-definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(m)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(CovError::ModelParameter(format!(
            "rho = {rho} must lie in (-1, 1)"
        )))
    }
}
