use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{find_dependencies, DesignError, DesignMatrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OlsError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("{rows} observations cannot identify {cols} coefficients")]
    Underidentified { rows: usize, cols: usize },
    #[error("column `{column}` is linearly dependent on {}", depends_on.join(", "))]
    RankDeficient { column: String, depends_on: Vec<String> },
    #[error("observation {row} has leverage 1")]
    PerfectLeverage { row: usize },
}

/// Least squares with heteroscedasticity-robust (HC3) standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `None` where the standard error is zero.
    pub t_stats: Vec<Option<f64>>,
    pub residuals: Vec<f64>,
    pub leverage: Vec<f64>,
}

impl OlsFit {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Relative tolerance for rank and leverage checks.
const RANK_TOL: f64 = 1e-10;

pub fn ols_hc3(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit, OlsError> {
    let yv = x.check_response(y)?;
    let (n, k) = (x.nrows(), x.ncols());
    if n <= k {
        return Err(OlsError::Underidentified { rows: n, cols: k });
    }
    if let Some(d) = find_dependencies(x.matrix(), RANK_TOL).into_iter().next() {
        return Err(OlsError::RankDeficient {
            column: x.labels()[d.column].clone(),
            depends_on: d.on.iter().map(|&j| x.labels()[j].clone()).collect(),
        });
    }
    let qr = x.matrix().clone().qr();
    let q = qr.q();
    let r = qr.r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("full-rank design has an invertible R");
    let beta = &r_inv * (q.transpose() * &yv);
    let leverage: Vec<f64> = (0..n).map(|i| q.row(i).norm_squared()).collect();
    if let Some(row) = leverage.iter().position(|&h| h >= 1.0 - RANK_TOL) {
        return Err(OlsError::PerfectLeverage { row });
    }
    let mut resid: DVector<f64> = &yv - x.matrix() * &beta;
    // an exact fit leaves only rounding noise
    if resid.norm() <= 1e-12 * yv.norm() {
        resid.fill(0.0);
    }
    let omega: Vec<f64> = (0..n).map(|i| (resid[i] / (1.0 - leverage[i])).powi(2)).collect();
    let weighted = DMatrix::from_fn(n, k, |i, j| q[(i, j)] * omega[i]);
    let meat = q.tr_mul(&weighted);
    let cov = &r_inv * meat * r_inv.transpose();
    let std_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t_stats = beta.iter().zip(&std_errors).map(|(b, &s)| (s > 0.0).then(|| b / s)).collect();
    Ok(OlsFit {
        labels: x.labels().to_vec(),
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_stats,
        residuals: resid.iter().copied().collect(),
        leverage,
    })
}
