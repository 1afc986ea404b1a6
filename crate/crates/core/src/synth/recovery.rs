use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, SyntheticDgp};
use crate::pipeline::{
    compute_moments, infer_with_controls, run_enet_benchmark, run_pca_benchmark, select, stage1_select, stage3_infer,
    Estimator, MomentOptions, PipelineError, PipelineOptions,
};

/// Seed of run `r` in a Monte-Carlo batch.
fn run_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub stage1: Vec<usize>,
    pub recovered: bool,
    pub false_discoveries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub support: Vec<usize>,
    pub runs: Vec<RunRecord>,
    /// Share of runs whose first-stage set contains the true support.
    pub rate: f64,
    pub median_false_discoveries: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Frequency with which the first-stage selection covers the true control
/// support over `runs` seeds starting at `dgp.seed`.
pub fn support_recovery_rate(dgp: &SyntheticDgp, runs: usize, opts: &PipelineOptions) -> Result<RecoveryReport, PipelineError> {
    let support: Vec<usize> = {
        let mut s: Vec<usize> = dgp.control_premia.iter().filter(|p| p.value != 0.0).map(|p| p.index).collect();
        s.sort_unstable();
        s
    };
    let records: Vec<RunRecord> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = run_seed(dgp.seed, r);
            let sample = generate(&dgp.with_seed(seed)).map_err(|e| PipelineError::Invalid(e.to_string()))?;
            let m = compute_moments(&sample.assets, &sample.controls, &sample.alphas, &MomentOptions::default())?;
            let (stage1, _) = stage1_select(&m, opts)?;
            let record = RunRecord {
                seed,
                recovered: support.iter().all(|k| stage1.contains(k)),
                false_discoveries: stage1.iter().filter(|k| !support.contains(k)).count(),
                stage1,
            };
            log::debug!("recovery run seed {seed}: {:?}", record.stage1);
            Ok(record)
        })
        .collect::<Result<_, PipelineError>>()?;
    let rate = records.iter().filter(|r| r.recovered).count() as f64 / runs.max(1) as f64;
    let median_false_discoveries = median(records.iter().map(|r| r.false_discoveries as f64).collect());
    Ok(RecoveryReport {
        support,
        runs: records,
        rate,
        median_false_discoveries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPremia {
    pub estimator: Estimator,
    pub premia: Vec<f64>,
    pub t: Vec<Option<f64>>,
}

/// Estimates from one seeded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub stage1: Vec<usize>,
    pub selected: Vec<usize>,
    pub estimates: Vec<EstimatorPremia>,
}

impl RunSummary {
    pub fn premia(&self, estimator: Estimator) -> Option<&[f64]> {
        self.estimates.iter().find(|e| e.estimator == estimator).map(|e| e.premia.as_slice())
    }
}

/// Runs the requested estimators on `runs` seeded samples.
pub fn monte_carlo(
    dgp: &SyntheticDgp,
    runs: usize,
    estimators: &[Estimator],
    opts: &PipelineOptions,
) -> Result<Vec<RunSummary>, PipelineError> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = run_seed(dgp.seed, r);
            let sample = generate(&dgp.with_seed(seed)).map_err(|e| PipelineError::Invalid(e.to_string()))?;
            let m = compute_moments(&sample.assets, &sample.controls, &sample.alphas, &MomentOptions::default())?;
            let sets = select(&m, opts)?;
            let mut estimates = Vec::new();
            for &e in estimators {
                let table = match e {
                    Estimator::Ds => stage3_infer(&m, &sets, opts)?,
                    Estimator::Ss => infer_with_controls(&m, &sets.stage1, Estimator::Ss, opts)?,
                    Estimator::Enet => run_enet_benchmark(&m, opts)?,
                    Estimator::Pca => run_pca_benchmark(&m, opts)?,
                };
                estimates.push(EstimatorPremia {
                    estimator: e,
                    premia: table.alphas.iter().map(|r| r.coefficient).collect(),
                    t: table.alphas.iter().map(|r| r.t).collect(),
                });
            }
            Ok(RunSummary {
                seed,
                selected: sets.union(),
                stage1: sets.stage1,
                estimates,
            })
        })
        .collect()
}
