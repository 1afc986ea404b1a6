//! Double-selection estimation of factor risk premia from test-asset moments.
//!
//! 1. Lasso of mean returns on the control covariances selects `I1`.
//! 2. For each candidate alpha, a lasso of its covariance column on all
//!    control covariances selects a set; their union is `I2`.
//! 3. OLS of mean returns on an intercept, the controls in `I1 ∪ I2` and
//!    every alpha, with HC3 standard errors.
//!
//! Single selection (stage 1 only), elastic-net selection and principal
//! components of the controls are available as benchmarks.

mod moments;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::reglab::{
    elastic_net_cv, find_dependencies, lasso_cv, ols_hc3, pca_reduce, CvOptions, DesignError, DesignMatrix, OlsError,
    OlsFit,
};

pub use moments::{compute_moments, AssetReturns, MomentOptions, MomentSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid moments: {0}")]
    Invalid(String),
    #[error("insufficient overlap: {0}")]
    InsufficientOverlap(String),
    #[error("factor {0} has zero variance on the common sample")]
    ZeroVarianceFactor(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("final regression failed: {0}")]
    Regression(#[from] OlsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "DS")]
    Ds,
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "ENET")]
    Enet,
    #[serde(rename = "PCA")]
    Pca,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ds => "DS",
            Estimator::Ss => "SS",
            Estimator::Enet => "ENET",
            Estimator::Pca => "PCA",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ds" => Ok(Estimator::Ds),
            "ss" => Ok(Estimator::Ss),
            "enet" => Ok(Estimator::Enet),
            "pca" => Ok(Estimator::Pca),
            _ => Err(format!("unknown estimator `{s}`")),
        }
    }
}

/// Critical |t| values for one and two stars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub five_percent: f64,
    pub one_percent: f64,
}

impl Default for Significance {
    fn default() -> Self {
        Self {
            five_percent: 1.96,
            one_percent: 2.576,
        }
    }
}

impl Significance {
    pub fn stars(&self, t: Option<f64>) -> &'static str {
        match t.map(f64::abs) {
            Some(a) if a >= self.one_percent => "**",
            Some(a) if a >= self.five_percent => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub cv: CvOptions,
    pub l1_ratios: Vec<f64>,
    pub pca_target: f64,
    pub significance: Significance,
    /// Relative residual below which a selected control counts as a linear
    /// combination of earlier ones and is left out of the final regression.
    pub collinearity_tol: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            cv: CvOptions::default(),
            l1_ratios: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            pca_target: 0.9,
            significance: Significance::default(),
            collinearity_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumRow {
    pub factor: String,
    pub coefficient: f64,
    pub t: Option<f64>,
    pub std_error: f64,
}

impl PremiumRow {
    /// Coefficient in basis points.
    pub fn lambda_bp(&self) -> f64 {
        self.coefficient * 1e4
    }
}

/// Final-regression estimates of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumTable {
    pub estimator: Estimator,
    pub significance: Significance,
    /// One row per candidate alpha, in input order.
    pub alphas: Vec<PremiumRow>,
    pub intercept: PremiumRow,
    /// Controls (or components) that entered the final regression.
    pub controls: Vec<PremiumRow>,
    pub n_assets: usize,
}

impl PremiumTable {
    pub fn alpha(&self, name: &str) -> Option<&PremiumRow> {
        self.alphas.iter().find(|r| r.factor == name)
    }

    pub fn stars(&self, row: &PremiumRow) -> &'static str {
        self.significance.stars(row.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSets {
    pub stage1: Vec<usize>,
    pub stage1_tau: f64,
    /// Active control set and penalty for each alpha.
    pub stage2: Vec<Vec<usize>>,
    pub stage2_taus: Vec<f64>,
    pub stage2_union: Vec<usize>,
}

impl SelectionSets {
    /// `I1 ∪ I2`, sorted.
    pub fn union(&self) -> Vec<usize> {
        union_sorted(&self.stage1, &self.stage2_union)
    }
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn control_design(m: &MomentSet) -> Result<DesignMatrix, DesignError> {
    DesignMatrix::new(m.c_h.clone(), m.control_labels.clone())
}

/// Stage 1: controls that price the cross-section of mean returns.
pub fn stage1_select(m: &MomentSet, opts: &PipelineOptions) -> Result<(Vec<usize>, f64), PipelineError> {
    let cv = lasso_cv(&control_design(m)?, &m.rbar, &opts.cv)?;
    Ok((cv.fit.active_set, cv.curve.tau_1se))
}

/// Stage 2: per-alpha lasso of its covariance column on all controls.
pub fn stage2_select(m: &MomentSet, opts: &PipelineOptions) -> Result<(Vec<Vec<usize>>, Vec<f64>), PipelineError> {
    let x = control_design(m)?;
    let fits: Vec<(Vec<usize>, f64)> = (0..m.n_alphas())
        .into_par_iter()
        .map(|j| {
            let y: Vec<f64> = m.c_g.column(j).iter().copied().collect();
            lasso_cv(&x, &y, &opts.cv).map(|cv| (cv.fit.active_set, cv.curve.tau_1se))
        })
        .collect::<Result<_, _>>()?;
    Ok(fits.into_iter().unzip())
}

pub fn select(m: &MomentSet, opts: &PipelineOptions) -> Result<SelectionSets, PipelineError> {
    let (stage1, stage1_tau) = stage1_select(m, opts)?;
    let (stage2, stage2_taus) = stage2_select(m, opts)?;
    let stage2_union = stage2.iter().fold(Vec::new(), |acc, s| union_sorted(&acc, s));
    Ok(SelectionSets {
        stage1,
        stage1_tau,
        stage2,
        stage2_taus,
        stage2_union,
    })
}

/// OLS of `rbar` on an intercept, the given control block and every alpha.
/// Control columns that are linear combinations of the intercept and earlier
/// controls are dropped with a warning; dependence involving an alpha is an
/// error.
fn final_regression(
    m: &MomentSet,
    controls: DMatrix<f64>,
    control_labels: Vec<String>,
    estimator: Estimator,
    opts: &PipelineOptions,
) -> Result<PremiumTable, PipelineError> {
    let n = m.n_assets();
    let mut head = DMatrix::from_element(n, 1, 1.0);
    head = head.resize_horizontally(1 + controls.ncols(), 0.0);
    head.view_mut((0, 1), (n, controls.ncols())).copy_from(&controls);
    let dropped: Vec<usize> = find_dependencies(&head, opts.collinearity_tol)
        .into_iter()
        .filter(|d| d.column > 0)
        .map(|d| d.column - 1)
        .collect();
    for &j in &dropped {
        log::warn!("{estimator}: control {} duplicates earlier selected controls; left out", control_labels[j]);
    }
    let keep: Vec<usize> = (0..controls.ncols()).filter(|j| !dropped.contains(j)).collect();
    let kept_labels: Vec<String> = keep.iter().map(|&j| control_labels[j].clone()).collect();
    let mut labels = vec!["intercept".to_string()];
    labels.extend(kept_labels.iter().cloned());
    labels.extend(m.alpha_labels.iter().cloned());
    let kc = keep.len();
    let data = DMatrix::from_fn(n, 1 + kc + m.n_alphas(), |i, j| {
        if j == 0 {
            1.0
        } else if j <= kc {
            controls[(i, keep[j - 1])]
        } else {
            m.c_g[(i, j - 1 - kc)]
        }
    });
    let fit = ols_hc3(&DesignMatrix::new(data, labels)?, &m.rbar)?;
    Ok(table_from_fit(&fit, kc, estimator, opts, n))
}

fn table_from_fit(fit: &OlsFit, n_controls: usize, estimator: Estimator, opts: &PipelineOptions, n: usize) -> PremiumTable {
    let row = |j: usize| PremiumRow {
        factor: fit.labels[j].clone(),
        coefficient: fit.coefficients[j],
        t: fit.t_stats[j],
        std_error: fit.std_errors[j],
    };
    PremiumTable {
        estimator,
        significance: opts.significance,
        intercept: row(0),
        controls: (1..=n_controls).map(row).collect(),
        alphas: (1 + n_controls..fit.labels.len()).map(row).collect(),
        n_assets: n,
    }
}

fn control_block(m: &MomentSet, set: &[usize]) -> (DMatrix<f64>, Vec<String>) {
    (m.c_h.select_columns(set.iter()), set.iter().map(|&j| m.control_labels[j].clone()).collect())
}

/// Final regression on a given set of control columns.
pub fn infer_with_controls(
    m: &MomentSet,
    controls: &[usize],
    estimator: Estimator,
    opts: &PipelineOptions,
) -> Result<PremiumTable, PipelineError> {
    let (c, l) = control_block(m, controls);
    final_regression(m, c, l, estimator, opts)
}

/// Stage 3 on given selection sets.
pub fn stage3_infer(m: &MomentSet, sets: &SelectionSets, opts: &PipelineOptions) -> Result<PremiumTable, PipelineError> {
    infer_with_controls(m, &sets.union(), Estimator::Ds, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsResult {
    pub sets: SelectionSets,
    pub table: PremiumTable,
}

pub fn run_double_selection(m: &MomentSet, opts: &PipelineOptions) -> Result<DsResult, PipelineError> {
    let sets = select(m, opts)?;
    let table = stage3_infer(m, &sets, opts)?;
    Ok(DsResult { sets, table })
}

pub fn run_single_selection(m: &MomentSet, opts: &PipelineOptions) -> Result<PremiumTable, PipelineError> {
    let (set, _) = stage1_select(m, opts)?;
    infer_with_controls(m, &set, Estimator::Ss, opts)
}

pub fn run_enet_benchmark(m: &MomentSet, opts: &PipelineOptions) -> Result<PremiumTable, PipelineError> {
    let cv = elastic_net_cv(&control_design(m)?, &m.rbar, &opts.l1_ratios, &opts.cv)?;
    log::info!("elastic net chose l1_ratio {} at tau {}", cv.l1_ratio, cv.tau);
    infer_with_controls(m, &cv.fit.active_set, Estimator::Enet, opts)
}

pub fn run_pca_benchmark(m: &MomentSet, opts: &PipelineOptions) -> Result<PremiumTable, PipelineError> {
    let pca = pca_reduce(&m.c_h, opts.pca_target);
    let labels = (1..=pca.retained).map(|k| format!("pc{k}")).collect();
    final_regression(m, pca.scores, labels, Estimator::Pca, opts)
}

pub fn run_estimator(m: &MomentSet, estimator: Estimator, opts: &PipelineOptions) -> Result<PremiumTable, PipelineError> {
    match estimator {
        Estimator::Ds => run_double_selection(m, opts).map(|r| r.table),
        Estimator::Ss => run_single_selection(m, opts),
        Estimator::Enet => run_enet_benchmark(m, opts),
        Estimator::Pca => run_pca_benchmark(m, opts),
    }
}
