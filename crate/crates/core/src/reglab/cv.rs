//! K-fold cross-validation with the one-standard-error rule.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{DesignError, DesignMatrix};
use super::lasso::{finish, path_on, path_solutions, tau_grid, LassoFit, LassoPath, PenaltyOptions, Prepared};
use super::{DEFAULT_PATH_EPS, DEFAULT_PATH_LEN};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub path_len: usize,
    pub path_eps: f64,
    pub penalty: PenaltyOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            path_len: DEFAULT_PATH_LEN,
            path_eps: DEFAULT_PATH_EPS,
            penalty: PenaltyOptions::default(),
        }
    }
}

/// Held-out rows of each fold: a seeded permutation cut into contiguous
/// blocks, the first `n % k` blocks one row longer.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let perm = SeededRng::new(seed).permutation(n);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut rows = perm[start..start + len].to_vec();
        rows.sort_unstable();
        out.push(rows);
        start += len;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    /// Decreasing penalty grid.
    pub taus: Vec<f64>,
    pub l1_ratio: f64,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `fold_errors[f][t]`: held-out mean squared error.
    pub fold_errors: Vec<Vec<f64>>,
    pub index_min: usize,
    pub index_1se: usize,
    pub tau_min: f64,
    pub tau_1se: f64,
}

/// Indices of the error minimizer and of the largest penalty whose mean
/// error is within one standard error of that minimum. `taus` must be
/// decreasing; ties go to the larger penalty.
pub fn select_one_se(taus: &[f64], mean: &[f64], se: &[f64]) -> (usize, usize) {
    assert!(!taus.is_empty() && taus.len() == mean.len() && mean.len() == se.len());
    let mut best = 0;
    for t in 1..mean.len() {
        if mean[t] < mean[best] {
            best = t;
        }
    }
    let threshold = mean[best] + se[best];
    let one_se = (0..=best).find(|&t| mean[t] <= threshold).unwrap_or(best);
    (best, one_se)
}

fn check_folds(n: usize, k: usize) -> Result<(), DesignError> {
    if k < 2 || k > n {
        return Err(DesignError::InvalidParameter(format!("{k} folds cannot split {n} rows")));
    }
    Ok(())
}

/// Cross-validated error along a fixed penalty grid.
pub fn kfold_cv(x: &DesignMatrix, y: &[f64], taus: &[f64], l1_ratio: f64, opts: &CvOptions) -> Result<CvCurve, DesignError> {
    let yv = x.check_response(y)?;
    let n = x.nrows();
    check_folds(n, opts.folds)?;
    let folds = fold_assignment(n, opts.folds, opts.seed);
    let fold_errors: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let xt = x.matrix().select_rows(train.iter());
            let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| yv[i]));
            let prep = Prepared::new(&xt, &yt, opts.penalty.standardize);
            let xh = x.matrix().select_rows(test.iter());
            path_solutions(&prep, taus, l1_ratio, &opts.penalty)
                .into_iter()
                .zip(taus)
                .map(|(s, &tau)| {
                    let fit = finish(&prep, s, tau, l1_ratio);
                    let pred = fit.predict(&xh);
                    test.iter().zip(pred.iter()).map(|(&i, p)| (yv[i] - p).powi(2)).sum::<f64>() / test.len() as f64
                })
                .collect()
        })
        .collect();
    let k = opts.folds as f64;
    let mut mean_error = Vec::with_capacity(taus.len());
    let mut std_error = Vec::with_capacity(taus.len());
    for t in 0..taus.len() {
        let m = fold_errors.iter().map(|f| f[t]).sum::<f64>() / k;
        let var = fold_errors.iter().map(|f| (f[t] - m).powi(2)).sum::<f64>() / (k - 1.0);
        mean_error.push(m);
        std_error.push(var.sqrt() / k.sqrt());
    }
    let (index_min, index_1se) = select_one_se(taus, &mean_error, &std_error);
    Ok(CvCurve {
        taus: taus.to_vec(),
        l1_ratio,
        tau_min: taus[index_min],
        tau_1se: taus[index_1se],
        mean_error,
        std_error,
        fold_errors,
        index_min,
        index_1se,
    })
}

/// Path, CV curve and the fit at the one-standard-error penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoCv {
    pub path: LassoPath,
    pub curve: CvCurve,
    pub fit: LassoFit,
}

fn penalized_cv(x: &DesignMatrix, y: &[f64], l1_ratio: f64, opts: &CvOptions) -> Result<LassoCv, DesignError> {
    let yv = x.check_response(y)?;
    let prep = Prepared::new(x.matrix(), &yv, opts.penalty.standardize);
    let taus = tau_grid(prep.tau_max(l1_ratio), opts.path_len, opts.path_eps);
    let path = path_on(&prep, &taus, l1_ratio, &opts.penalty);
    let curve = kfold_cv(x, y, &taus, l1_ratio, opts)?;
    let fit = path.fits[curve.index_1se].clone();
    Ok(LassoCv { path, curve, fit })
}

pub fn lasso_cv(x: &DesignMatrix, y: &[f64], opts: &CvOptions) -> Result<LassoCv, DesignError> {
    penalized_cv(x, y, 1.0, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetCv {
    pub l1_ratio: f64,
    pub tau: f64,
    /// One curve per candidate ratio, in input order.
    pub curves: Vec<CvCurve>,
    pub fit: LassoFit,
}

/// Chooses the mixing ratio with the lowest minimum CV error (ties to the
/// larger ratio), then the one-standard-error penalty for that ratio.
pub fn elastic_net_cv(x: &DesignMatrix, y: &[f64], l1_ratios: &[f64], opts: &CvOptions) -> Result<ElasticNetCv, DesignError> {
    if l1_ratios.is_empty() {
        return Err(DesignError::InvalidParameter("no l1 ratios given".into()));
    }
    if let Some(r) = l1_ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(DesignError::InvalidParameter(format!("l1_ratio must lie in [0, 1], got {r}")));
    }
    let runs: Vec<LassoCv> = l1_ratios
        .iter()
        .map(|&r| penalized_cv(x, y, r, opts))
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (i, run) in runs.iter().enumerate().skip(1) {
        let e = run.curve.mean_error[run.curve.index_min];
        let b = runs[best].curve.mean_error[runs[best].curve.index_min];
        if e < b || (e == b && l1_ratios[i] > l1_ratios[best]) {
            best = i;
        }
    }
    let chosen = runs[best].clone();
    Ok(ElasticNetCv {
        l1_ratio: l1_ratios[best],
        tau: chosen.curve.tau_1se,
        curves: runs.into_iter().map(|r| r.curve).collect(),
        fit: chosen.fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_se_hand_grids() {
        let taus = [1.0, 0.5, 0.1];
        assert_eq!(select_one_se(&taus, &[1.0, 0.8, 0.8], &[0.05; 3]), (1, 1));
        assert_eq!(select_one_se(&taus, &[1.0, 0.84, 0.8], &[0.05; 3]), (2, 1));
        assert_eq!(select_one_se(&taus, &[0.7; 3], &[0.0; 3]), (0, 0));
    }

    #[test]
    fn folds_partition_rows() {
        let f = fold_assignment(23, 10, 7);
        assert_eq!(f.len(), 10);
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(f, fold_assignment(23, 10, 7));
        assert_ne!(f, fold_assignment(23, 10, 8));
    }

    #[test]
    fn too_many_folds() {
        let x = DesignMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(kfold_cv(&x, &[1.0, 2.0, 3.0], &[1.0], 1.0, &CvOptions::default()).is_err());
    }
}
