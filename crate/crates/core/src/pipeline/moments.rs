use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::io::WideTable;
use crate::portfolio::{FactorSeries, TestAssetPanel};

type MonthKey = (i32, u32);

fn key(d: NaiveDate) -> MonthKey {
    (d.year(), d.month())
}

/// Monthly returns of test assets, one row per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetReturns {
    pub ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `returns[asset][month]`; `NaN` marks a missing month.
    pub returns: Vec<Vec<f64>>,
}

impl AssetReturns {
    /// Stacks the cells of several sorts onto the union of their months.
    pub fn from_panels(panels: &[TestAssetPanel]) -> Self {
        Self::stack(panels.iter().map(|p| (p.dates.as_slice(), p.portfolio_ids.as_slice(), p.returns.as_slice())))
    }

    /// Same as [`AssetReturns::from_panels`] for wide files read back from disk.
    pub fn from_tables(tables: &[WideTable]) -> Self {
        Self::stack(tables.iter().map(|t| (t.dates.as_slice(), t.names.as_slice(), t.columns.as_slice())))
    }

    fn stack<'a>(groups: impl Iterator<Item = (&'a [NaiveDate], &'a [String], &'a [Vec<f64>])> + Clone) -> Self {
        let mut months: BTreeMap<MonthKey, NaiveDate> = BTreeMap::new();
        for (dates, _, _) in groups.clone() {
            for &d in dates {
                let e = months.entry(key(d)).or_insert(d);
                *e = (*e).max(d);
            }
        }
        let index: BTreeMap<MonthKey, usize> = months.keys().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut ids = Vec::new();
        let mut returns = Vec::new();
        for (dates, names, columns) in groups {
            for (id, series) in names.iter().zip(columns) {
                let mut row = vec![f64::NAN; index.len()];
                for (&d, &r) in dates.iter().zip(series) {
                    row[index[&key(d)]] = r;
                }
                ids.push(id.clone());
                returns.push(row);
            }
        }
        AssetReturns {
            ids,
            dates: months.into_values().collect(),
            returns,
        }
    }

    pub fn to_table(&self) -> WideTable {
        WideTable {
            dates: self.dates.clone(),
            names: self.ids.clone(),
            columns: self.returns.clone(),
        }
    }
}

/// Mean returns and return–factor covariances of the test assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub asset_ids: Vec<String>,
    pub control_labels: Vec<String>,
    pub alpha_labels: Vec<String>,
    pub rbar: Vec<f64>,
    /// Assets × controls.
    pub c_h: DMatrix<f64>,
    /// Assets × alphas.
    pub c_g: DMatrix<f64>,
    /// Months in the common sample.
    pub months: usize,
    /// Assets dropped for insufficient overlap.
    pub dropped_assets: Vec<String>,
}

impl MomentSet {
    pub fn new(
        asset_ids: Vec<String>,
        control_labels: Vec<String>,
        alpha_labels: Vec<String>,
        rbar: Vec<f64>,
        c_h: DMatrix<f64>,
        c_g: DMatrix<f64>,
        months: usize,
    ) -> Result<Self, PipelineError> {
        let n = rbar.len();
        let ok = asset_ids.len() == n
            && c_h.nrows() == n
            && c_g.nrows() == n
            && c_h.ncols() == control_labels.len()
            && c_g.ncols() == alpha_labels.len();
        if !ok {
            return Err(PipelineError::Invalid("moment blocks have inconsistent shapes".into()));
        }
        if n < 2 || control_labels.is_empty() {
            return Err(PipelineError::Invalid("need at least 2 assets and 1 control".into()));
        }
        if rbar.iter().chain(c_h.iter()).chain(c_g.iter()).any(|v| !v.is_finite()) {
            return Err(PipelineError::Invalid("moments contain missing values".into()));
        }
        Ok(Self {
            asset_ids,
            control_labels,
            alpha_labels,
            rbar,
            c_h,
            c_g,
            months,
            dropped_assets: Vec::new(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.rbar.len()
    }

    pub fn n_controls(&self) -> usize {
        self.c_h.ncols()
    }

    pub fn n_alphas(&self) -> usize {
        self.c_g.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentOptions {
    pub min_months: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self { min_months: 24 }
    }
}

fn factor_months(f: &FactorSeries) -> BTreeMap<MonthKey, f64> {
    f.dates
        .iter()
        .zip(&f.values)
        .filter(|(_, v)| v.is_finite())
        .map(|(&d, &v)| (key(d), v))
        .collect()
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Aligns assets and factors on their common months, rescales every factor
/// to unit sample variance there, and computes `rbar` and the covariances.
pub fn compute_moments(
    assets: &AssetReturns,
    controls: &[FactorSeries],
    alphas: &[FactorSeries],
    opts: &MomentOptions,
) -> Result<MomentSet, PipelineError> {
    let min = opts.min_months.max(2);
    let factors: Vec<&FactorSeries> = controls.iter().chain(alphas).collect();
    if controls.is_empty() {
        return Err(PipelineError::Invalid("no control factors".into()));
    }
    let factor_data: Vec<BTreeMap<MonthKey, f64>> = factors.iter().map(|f| factor_months(f)).collect();
    let mut common: BTreeSet<MonthKey> = factor_data[0].keys().copied().collect();
    for fd in &factor_data[1..] {
        common.retain(|k| fd.contains_key(k));
    }
    let asset_months: Vec<BTreeMap<MonthKey, f64>> = assets
        .returns
        .iter()
        .map(|row| {
            assets
                .dates
                .iter()
                .zip(row)
                .filter(|(_, v)| v.is_finite())
                .map(|(&d, &v)| (key(d), v))
                .collect()
        })
        .collect();
    let mut kept = Vec::new();
    let mut dropped_assets = Vec::new();
    for (i, am) in asset_months.iter().enumerate() {
        let overlap = common.iter().filter(|k| am.contains_key(k)).count();
        if overlap < min {
            log::warn!("dropping test asset {}: {overlap} months overlap the factors, need {min}", assets.ids[i]);
            dropped_assets.push(assets.ids[i].clone());
        } else {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(PipelineError::InsufficientOverlap(format!(
            "{} test assets have at least {min} months of overlap",
            kept.len()
        )));
    }
    for &i in &kept {
        common.retain(|k| asset_months[i].contains_key(k));
    }
    let t = common.len();
    if t < min {
        return Err(PipelineError::InsufficientOverlap(format!("common sample has {t} months, need {min}")));
    }
    let months: Vec<MonthKey> = common.into_iter().collect();
    let tf = t as f64;

    let mut fcols: Vec<Vec<f64>> = Vec::with_capacity(factors.len());
    for (f, fd) in factors.iter().zip(&factor_data) {
        let xs: Vec<f64> = months.iter().map(|k| fd[k]).collect();
        let sd = sample_sd(&xs);
        if !(sd > 0.0) {
            return Err(PipelineError::ZeroVarianceFactor(f.name.clone()));
        }
        let xs: Vec<f64> = xs.iter().map(|x| x / sd).collect();
        let m = xs.iter().sum::<f64>() / tf;
        fcols.push(xs.iter().map(|x| x - m).collect());
    }
    let n = kept.len();
    let mut rbar = Vec::with_capacity(n);
    let mut rc: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &i in &kept {
        let xs: Vec<f64> = months.iter().map(|k| asset_months[i][k]).collect();
        let m = xs.iter().sum::<f64>() / tf;
        rbar.push(m);
        rc.push(xs.iter().map(|x| x - m).collect());
    }
    let cov = |a: usize, k: usize| rc[a].iter().zip(&fcols[k]).map(|(x, y)| x * y).sum::<f64>() / (tf - 1.0);
    let p = controls.len();
    let c_h = DMatrix::from_fn(n, p, |a, k| cov(a, k));
    let c_g = DMatrix::from_fn(n, alphas.len(), |a, k| cov(a, p + k));
    let mut out = MomentSet::new(
        kept.iter().map(|&i| assets.ids[i].clone()).collect(),
        controls.iter().map(|f| f.name.clone()).collect(),
        alphas.iter().map(|f| f.name.clone()).collect(),
        rbar,
        c_h,
        c_g,
        t,
    )?;
    out.dropped_assets = dropped_assets;
    Ok(out)
}
