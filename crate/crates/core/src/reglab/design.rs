use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DesignError {
    #[error("design has {0} rows, need at least 2")]
    TooFewRows(usize),
    #[error("design has {cols} columns but {labels} labels")]
    LabelCount { cols: usize, labels: usize },
    #[error("duplicate column label `{0}`")]
    DuplicateLabel(String),
    #[error("missing value in column `{label}` row {row}")]
    Missing { label: String, row: usize },
    #[error("response has {got} values, design has {rows} rows")]
    ResponseLength { got: usize, rows: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A complete real matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self, DesignError> {
        if data.nrows() < 2 {
            return Err(DesignError::TooFewRows(data.nrows()));
        }
        if labels.len() != data.ncols() {
            return Err(DesignError::LabelCount {
                cols: data.ncols(),
                labels: labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(DesignError::DuplicateLabel(l.clone()));
            }
        }
        for (j, col) in data.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DesignError::Missing {
                    label: labels[j].clone(),
                    row,
                });
            }
        }
        Ok(Self { data, labels })
    }

    /// Columns labelled `x0, x1, ...`.
    pub fn unlabeled(data: DMatrix<f64>) -> Result<Self, DesignError> {
        let labels = (0..data.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(data, labels)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DesignError> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        Self::unlabeled(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            data: self.data.select_rows(rows.iter()),
            labels: self.labels.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            data: self.data.select_columns(cols.iter()),
            labels: cols.iter().map(|&j| self.labels[j].clone()).collect(),
        }
    }

    /// Columns of `self` followed by those of `other`.
    pub fn hstack(&self, other: &DesignMatrix) -> Result<DesignMatrix, DesignError> {
        let n = self.nrows();
        let p = self.ncols() + other.ncols();
        let data = DMatrix::from_fn(n, p, |i, j| {
            if j < self.ncols() {
                self.data[(i, j)]
            } else {
                other.data[(i, j - self.ncols())]
            }
        });
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        DesignMatrix::new(data, labels)
    }

    /// A leading column of ones labelled `intercept`.
    pub fn with_intercept(&self) -> Result<DesignMatrix, DesignError> {
        let ones = DesignMatrix {
            data: DMatrix::from_element(self.nrows(), 1, 1.0),
            labels: vec!["intercept".into()],
        };
        ones.hstack(self)
    }

    pub fn check_response(&self, y: &[f64]) -> Result<DVector<f64>, DesignError> {
        if y.len() != self.nrows() {
            return Err(DesignError::ResponseLength {
                got: y.len(),
                rows: self.nrows(),
            });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(DesignError::Missing {
                label: "response".into(),
                row,
            });
        }
        Ok(DVector::from_column_slice(y))
    }
}

/// A column lying in the span of earlier, independent columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dependence {
    pub column: usize,
    pub on: Vec<usize>,
}

/// Scans columns left to right with modified Gram–Schmidt and reports every
/// column whose residual norm is at most `rel_tol` times its own norm.
/// Dependent columns are not added to the basis.
pub fn find_dependencies(x: &DMatrix<f64>, rel_tol: f64) -> Vec<Dependence> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).clone_owned();
        let norm = col.norm();
        let mut v = col.clone();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let resid = v.norm();
        if norm == 0.0 || resid <= rel_tol * norm {
            let on = if accepted.is_empty() || norm == 0.0 {
                Vec::new()
            } else {
                let a = x.select_columns(accepted.iter());
                let coef = a.svd(true, true).solve(&col, 1e-12).unwrap_or_else(|_| DVector::zeros(accepted.len()));
                let scale = coef.amax().max(f64::MIN_POSITIVE);
                accepted
                    .iter()
                    .zip(coef.iter())
                    .filter(|(_, c)| c.abs() > 1e-8 * scale)
                    .map(|(&k, _)| k)
                    .collect()
            };
            out.push(Dependence { column: j, on });
        } else {
            basis.push(v / resid);
            accepted.push(j);
        }
    }
    out
}
