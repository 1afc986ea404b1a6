//! Factor portfolios: value-weighted high-minus-low decile factors,
//! bivariate independent size × signal sorts, and monthly aggregation.
//!
//! Portfolios are formed on the last trading day of each calendar month and
//! held from the next trading day through the following formation date.
//! Weights use the market capitalization observed on the formation date.

mod bins;
mod series;

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::SignalPanel;
use crate::grid::Grid;
use crate::panel::{PricePanel, ReturnPanel};

pub use bins::{assign_bins, TiePolicy};
pub use series::{aggregate_daily_to_monthly, standardize, FactorSeries, Frequency, TRADING_DAYS_PER_MONTH};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PortfolioError {
    #[error("inputs are not aligned: {0}")]
    Misaligned(String),
    #[error("series {0} needs at least two observations")]
    TooFewObservations(String),
    #[error("series {0} has zero variance")]
    ZeroVariance(String),
    #[error("invalid sort spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Value,
    Equal,
}

impl FromStr for Weighting {
    type Err = PortfolioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "value" | "vw" => Ok(Weighting::Value),
            "equal" | "ew" => Ok(Weighting::Equal),
            _ => Err(PortfolioError::InvalidSpec(format!("unknown weighting `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rebalance {
    Monthly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortSpec {
    pub size_bins: usize,
    pub signal_bins: usize,
    pub weighting: Weighting,
    pub rebalance: Rebalance,
    pub tie_policy: TiePolicy,
}

impl SortSpec {
    pub fn new(size_bins: usize, signal_bins: usize) -> Result<Self, PortfolioError> {
        let spec = SortSpec {
            size_bins,
            signal_bins,
            weighting: Weighting::Value,
            rebalance: Rebalance::Monthly,
            tie_policy: TiePolicy::OverlappingBins,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PortfolioError> {
        if self.size_bins < 2 || self.signal_bins < 2 {
            return Err(PortfolioError::InvalidSpec("each dimension needs at least 2 bins".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.size_bins * self.signal_bins
    }
}

impl FromStr for SortSpec {
    type Err = PortfolioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PortfolioError::InvalidSpec(format!("expected `<size>x<signal>`, got `{s}`"));
        let (a, b) = s.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(bad)?;
        let size = a.trim().parse().map_err(|_| bad())?;
        let signal = b.trim().parse().map_err(|_| bad())?;
        SortSpec::new(size, signal)
    }
}

impl fmt::Display for SortSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.size_bins, self.signal_bins)
    }
}

/// Returns and capitalizations on a shared asset × date layout.
#[derive(Debug, Clone)]
pub struct MarketData {
    pub asset_ids: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub returns: Grid,
    pub market_cap: Grid,
}

impl MarketData {
    pub fn new(asset_ids: Vec<String>, calendar: Vec<NaiveDate>, returns: Grid, market_cap: Grid) -> Result<Self, PortfolioError> {
        let shape = (asset_ids.len(), calendar.len());
        if (returns.n_assets(), returns.n_dates()) != shape || (market_cap.n_assets(), market_cap.n_dates()) != shape {
            return Err(PortfolioError::Misaligned("returns and market cap must match the asset ids and calendar".into()));
        }
        Ok(Self {
            asset_ids,
            calendar,
            returns,
            market_cap,
        })
    }

    pub fn from_panel(prices: &PricePanel, returns: &ReturnPanel) -> Result<Self, PortfolioError> {
        if prices.asset_ids() != returns.asset_ids || prices.calendar() != returns.calendar.as_slice() {
            return Err(PortfolioError::Misaligned("price and return panels differ".into()));
        }
        Self::new(returns.asset_ids.clone(), returns.calendar.clone(), returns.returns.clone(), prices.market_cap().clone())
    }

    fn check(&self, signal: &SignalPanel) -> Result<(), PortfolioError> {
        if signal.asset_ids != self.asset_ids || signal.calendar != self.calendar {
            return Err(PortfolioError::Misaligned(format!("signal {} is on a different layout", signal.name)));
        }
        Ok(())
    }
}

/// Formation dates: the last calendar entry of each month.
pub fn rebalance_dates(calendar: &[NaiveDate]) -> Vec<usize> {
    (0..calendar.len())
        .filter(|&d| d + 1 == calendar.len() || calendar[d + 1].month() != calendar[d].month() || calendar[d + 1].year() != calendar[d].year())
        .collect()
}

/// Formation options shared by both constructions.
#[derive(Debug, Clone, Default)]
pub struct Universe {
    /// Asset × date membership; a present nonzero cell means eligible.
    /// `None` admits every asset.
    pub mask: Option<Grid>,
}

impl Universe {
    fn admits(&self, a: usize, d: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m.value(a, d).is_some_and(|v| v != 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HmlOptions {
    pub bins: usize,
    pub min_assets: usize,
    pub tie_policy: TiePolicy,
    pub weighting: Weighting,
}

impl Default for HmlOptions {
    fn default() -> Self {
        Self {
            bins: 10,
            min_assets: 10,
            tie_policy: TiePolicy::OverlappingBins,
            weighting: Weighting::Value,
        }
    }
}

/// Why a holding period produced no factor return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPeriod {
    pub formation: NaiveDate,
    pub eligible: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmlFactor {
    pub series: FactorSeries,
    pub skipped: Vec<SkippedPeriod>,
}

fn weight_of(cap: f64, weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Value => cap,
        Weighting::Equal => 1.0,
    }
}

/// Weights normalized to sum to one over `members` (caps must be positive).
pub fn normalized_weights(members: &[usize], caps: &[f64], weighting: Weighting) -> Vec<f64> {
    let raw: Vec<f64> = members.iter().map(|&a| weight_of(caps[a], weighting)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Weighted mean over members whose `value` is present; `NaN` if none is.
fn weighted_return(members: &[usize], weights: &[f64], value: impl Fn(usize) -> Option<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &w) in members.iter().zip(weights) {
        if let Some(r) = value(a) {
            num += w * r;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Eligible assets at a formation date in ascending asset order.
fn eligible(data: &MarketData, chars: &[&Grid], universe: &Universe, d: usize) -> Vec<usize> {
    (0..data.asset_ids.len())
        .filter(|&a| {
            universe.admits(a, d)
                && data.market_cap.value(a, d).is_some_and(|c| c > 0.0)
                && chars.iter().all(|g| g.is_present(a, d))
        })
        .collect()
}

/// Daily long–short return of the top signal decile minus the bottom one.
pub fn hml_decile_factor(
    signal: &SignalPanel,
    data: &MarketData,
    universe: &Universe,
    opts: &HmlOptions,
) -> Result<HmlFactor, PortfolioError> {
    data.check(signal)?;
    if opts.bins < 2 {
        return Err(PortfolioError::InvalidSpec("a long–short factor needs at least 2 bins".into()));
    }
    let n_dates = data.calendar.len();
    let mut values = vec![f64::NAN; n_dates];
    let mut skipped = Vec::new();
    let formations = rebalance_dates(&data.calendar);
    for (k, &r) in formations.iter().enumerate() {
        let end = formations.get(k + 1).copied().unwrap_or(n_dates - 1);
        if end <= r {
            continue;
        }
        let members = eligible(data, &[&signal.values], universe, r);
        let skip = |reason: String| SkippedPeriod {
            formation: data.calendar[r],
            eligible: members.len(),
            reason,
        };
        if members.len() < opts.min_assets.max(1) {
            skipped.push(skip(format!("{} eligible assets, need {}", members.len(), opts.min_assets)));
            continue;
        }
        let sig: Vec<f64> = members.iter().map(|&a| signal.values.get(a, r)).collect();
        let assigned = assign_bins(&sig, opts.bins, opts.tie_policy);
        let pick = |bin: usize| -> Vec<usize> {
            members.iter().zip(&assigned).filter(|(_, b)| b.contains(&bin)).map(|(&a, _)| a).collect()
        };
        let long = pick(opts.bins - 1);
        let short = pick(0);
        if long.is_empty() || short.is_empty() {
            skipped.push(skip("an extreme bin is empty".into()));
            continue;
        }
        let caps: Vec<f64> = (0..data.asset_ids.len()).map(|a| data.market_cap.get(a, r)).collect();
        let wl = normalized_weights(&long, &caps, opts.weighting);
        let ws = normalized_weights(&short, &caps, opts.weighting);
        for (t, v) in values.iter_mut().enumerate().take(end + 1).skip(r + 1) {
            let ret = |a: usize| data.returns.value(a, t);
            *v = weighted_return(&long, &wl, ret) - weighted_return(&short, &ws, ret);
        }
    }
    for s in &skipped {
        log::info!("{}: skipped holding period after {} ({})", signal.name, s.formation, s.reason);
    }
    let values = values.into_iter().map(crate::grid::sanitize).collect();
    Ok(HmlFactor {
        series: FactorSeries::new(signal.name.clone(), Frequency::Daily, data.calendar.clone(), values),
        skipped,
    })
}

/// Decile factors for many signals in parallel; output order follows input.
pub fn hml_decile_factors(
    signals: &[SignalPanel],
    data: &MarketData,
    universe: &Universe,
    opts: &HmlOptions,
) -> Result<Vec<HmlFactor>, PortfolioError> {
    signals.par_iter().map(|s| hml_decile_factor(s, data, universe, opts)).collect()
}

/// Cell members for one formation: `cells[i * signal_bins + j]` lists the
/// indices (into the inputs) in size bin `i` and signal bin `j`.
pub fn sort_cells(size: &[f64], signal: &[f64], spec: &SortSpec) -> Vec<Vec<usize>> {
    assert_eq!(size.len(), signal.len());
    let sb = assign_bins(size, spec.size_bins, spec.tie_policy);
    let gb = assign_bins(signal, spec.signal_bins, spec.tie_policy);
    let mut cells = vec![Vec::new(); spec.cells()];
    for idx in 0..size.len() {
        for &i in &sb[idx] {
            for &j in &gb[idx] {
                cells[i * spec.signal_bins + j].push(idx);
            }
        }
    }
    cells
}

/// Monthly returns of the size × signal cells of one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TestAssetPanel {
    pub factor: String,
    pub spec: SortSpec,
    pub portfolio_ids: Vec<String>,
    /// End date of each holding period.
    pub dates: Vec<NaiveDate>,
    /// `returns[p][m]`; `NaN` marks an empty cell-month.
    pub returns: Vec<Vec<f64>>,
    /// Constituents with a return in each cell-month.
    pub constituents: Vec<Vec<usize>>,
    pub empty_cells: usize,
}

impl TestAssetPanel {
    pub fn portfolio_id(factor: &str, size_bin: usize, signal_bin: usize) -> String {
        format!("{factor}_s{}_f{}", size_bin + 1, signal_bin + 1)
    }
}

/// Compounded return of each asset over days `start..=end`; `None` if no
/// day in the span has a return.
fn period_return(data: &MarketData, a: usize, start: usize, end: usize) -> Option<f64> {
    let mut growth = 1.0;
    let mut any = false;
    for t in start..=end {
        if let Some(r) = data.returns.value(a, t) {
            growth *= 1.0 + r;
            any = true;
        }
    }
    any.then_some(growth - 1.0)
}

pub fn bivariate_independent_sort(
    size: &SignalPanel,
    signal: &SignalPanel,
    data: &MarketData,
    universe: &Universe,
    spec: &SortSpec,
) -> Result<TestAssetPanel, PortfolioError> {
    spec.validate()?;
    data.check(size)?;
    data.check(signal)?;
    let n_dates = data.calendar.len();
    let formations = rebalance_dates(&data.calendar);
    let cells = spec.cells();
    let mut dates = Vec::new();
    let mut returns = vec![Vec::new(); cells];
    let mut constituents = vec![Vec::new(); cells];
    let mut empty_cells = 0;
    for (k, &r) in formations.iter().enumerate() {
        let end = formations.get(k + 1).copied().unwrap_or(n_dates - 1);
        if end <= r {
            continue;
        }
        dates.push(data.calendar[end]);
        let members = eligible(data, &[&size.values, &signal.values], universe, r);
        let sz: Vec<f64> = members.iter().map(|&a| size.values.get(a, r)).collect();
        let sg: Vec<f64> = members.iter().map(|&a| signal.values.get(a, r)).collect();
        let grouped = sort_cells(&sz, &sg, spec);
        let period: Vec<Option<f64>> = members.iter().map(|&a| period_return(data, a, r + 1, end)).collect();
        for (c, idx) in grouped.iter().enumerate() {
            let live: Vec<usize> = idx.iter().copied().filter(|&i| period[i].is_some()).collect();
            constituents[c].push(live.len());
            if live.is_empty() {
                empty_cells += 1;
                returns[c].push(f64::NAN);
                continue;
            }
            let caps: Vec<f64> = live.iter().map(|&i| data.market_cap.get(members[i], r)).collect();
            let w = normalized_weights(&(0..live.len()).collect::<Vec<_>>(), &caps, spec.weighting);
            returns[c].push(crate::grid::sanitize(weighted_return(&live, &w, |i| period[i])));
        }
    }
    if empty_cells > 0 {
        log::info!("{} {}: {empty_cells} empty cell-months", signal.name, spec);
    }
    let portfolio_ids = (0..spec.size_bins)
        .flat_map(|i| (0..spec.signal_bins).map(move |j| (i, j)))
        .map(|(i, j)| TestAssetPanel::portfolio_id(&signal.name, i, j))
        .collect();
    Ok(TestAssetPanel {
        factor: signal.name.clone(),
        spec: *spec,
        portfolio_ids,
        dates,
        returns,
        constituents,
        empty_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calendar(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64 * 3)).collect()
    }

    fn signal(name: &str, cal: &[NaiveDate], values: Grid) -> SignalPanel {
        SignalPanel {
            name: name.into(),
            window: 1,
            asset_ids: (0..values.n_assets()).map(|a| format!("A{a}")).collect(),
            calendar: cal.to_vec(),
            values,
        }
    }

    fn market(cal: &[NaiveDate], returns: Grid, caps: Grid) -> MarketData {
        MarketData::new((0..returns.n_assets()).map(|a| format!("A{a}")).collect(), cal.to_vec(), returns, caps).unwrap()
    }

    #[test]
    fn rebalances_at_month_ends() {
        let cal = calendar(25);
        let r = rebalance_dates(&cal);
        assert!(r.iter().all(|&d| d + 1 == cal.len() || cal[d + 1].month() != cal[d].month()));
        assert_eq!(*r.last().unwrap(), cal.len() - 1);
    }

    #[test]
    fn monotone_signal_gives_positive_spread() {
        let cal = calendar(40);
        let n = 10;
        // asset a earns 0.001·(a+1) every day; the signal ranks the same way
        let rets = Grid::from_rows((0..n).map(|a| vec![0.001 * (a + 1) as f64; cal.len()]).collect());
        let sig = Grid::from_rows((0..n).map(|a| vec![a as f64; cal.len()]).collect());
        let data = market(&cal, rets, Grid::filled(n, cal.len(), 1.0));
        let out = hml_decile_factor(&signal("s", &cal, sig), &data, &Universe::default(), &HmlOptions::default()).unwrap();
        let first = rebalance_dates(&cal)[0];
        assert!(out.series.values[first + 1..].iter().all(|&v| v > 0.0));
        assert!(out.series.values[..=first].iter().all(|v| v.is_nan()));
    }

    #[test]
    fn two_asset_value_weight() {
        let w = normalized_weights(&[0, 1], &[1.0, 3.0], Weighting::Value);
        let r = weighted_return(&[0, 1], &w, |a| Some([0.10, 0.20][a]));
        assert!((r - 0.175).abs() < 1e-15);
    }

    #[test]
    fn constant_signal_depends_on_tie_policy() {
        let cal = calendar(40);
        let n = 12;
        let data = market(&cal, Grid::filled(n, cal.len(), 0.01), Grid::filled(n, cal.len(), 2.0));
        let s = signal("c", &cal, Grid::filled(n, cal.len(), 1.0));
        let strict = HmlOptions {
            tie_policy: TiePolicy::Strict,
            ..HmlOptions::default()
        };
        let out = hml_decile_factor(&s, &data, &Universe::default(), &strict).unwrap();
        assert!(out.series.values.iter().all(|v| v.is_nan()));
        assert!(!out.skipped.is_empty());
        let out = hml_decile_factor(&s, &data, &Universe::default(), &HmlOptions::default()).unwrap();
        assert!(out.series.present().all(|v| v == 0.0));
    }

    #[test]
    fn too_few_assets_skip_the_period() {
        let cal = calendar(30);
        let data = market(&cal, Grid::filled(9, cal.len(), 0.0), Grid::filled(9, cal.len(), 1.0));
        let s = signal("s", &cal, Grid::from_rows((0..9).map(|a| vec![a as f64; cal.len()]).collect()));
        let out = hml_decile_factor(&s, &data, &Universe::default(), &HmlOptions::default()).unwrap();
        assert!(out.series.values.iter().all(|v| v.is_nan()));
        assert_eq!(out.skipped.len(), rebalance_dates(&cal).len() - 1);
    }

    #[test]
    fn six_assets_fill_a_three_by_two_sort() {
        // brute force: sizes by tercile, signals by half, arranged so each cell gets one asset
        let size = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let sig = [1.0, 6.0, 2.0, 5.0, 3.0, 4.0];
        let spec = SortSpec::from_str("3x2").unwrap();
        let cells = sort_cells(&size, &sig, &spec);
        assert!(cells.iter().all(|c| c.len() == 1));
        // reference: tercile = position / 2, half = position / 3
        for (idx, (&s, &g)) in size.iter().zip(&sig).enumerate() {
            let sp = size.iter().filter(|&&x| x < s).count();
            let gp = sig.iter().filter(|&&x| x < g).count();
            assert_eq!(cells[(sp / 2) * 2 + gp / 3], vec![idx]);
        }
    }

    #[test]
    fn identical_sizes_join_every_size_bin() {
        let spec = SortSpec::from_str("3x2").unwrap();
        let cells = sort_cells(&[5.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &spec);
        for i in 0..3 {
            assert_eq!(cells[i * 2], vec![0, 1, 2]);
            assert_eq!(cells[i * 2 + 1], vec![3, 4, 5]);
        }
    }

    #[test]
    fn sort_spec_parsing() {
        let s: SortSpec = "5x5".parse().unwrap();
        assert_eq!((s.size_bins, s.signal_bins), (5, 5));
        assert_eq!(s.to_string(), "5x5");
        assert!("1x5".parse::<SortSpec>().is_err());
        assert!("five".parse::<SortSpec>().is_err());
    }

    #[test]
    fn bivariate_sort_reports_empty_cells() {
        let cal = calendar(40);
        let n = 6;
        let caps = Grid::from_rows((0..n).map(|a| vec![(a + 1) as f64; cal.len()]).collect());
        let data = market(&cal, Grid::filled(n, cal.len(), 0.01), caps.clone());
        let size = signal("market_cap", &cal, caps);
        let sig = signal("f", &cal, Grid::from_rows((0..n).map(|a| vec![[1.0, 6.0, 2.0, 5.0, 3.0, 4.0][a]; cal.len()]).collect()));
        let panel = bivariate_independent_sort(&size, &sig, &data, &Universe::default(), &"3x2".parse().unwrap()).unwrap();
        assert_eq!(panel.portfolio_ids[0], "f_s1_f1");
        assert_eq!(panel.empty_cells, 0);
        let m = panel.dates.len();
        assert!(m >= 2);
        for p in &panel.returns {
            assert!(p.iter().all(|r| r.is_finite()));
        }
        assert!(panel.constituents.iter().all(|c| c.iter().all(|&k| k == 1)));

        let sparse = Universe {
            mask: Some(Grid::from_rows((0..n).map(|a| vec![if a < 2 { 1.0 } else { 0.0 }; cal.len()]).collect())),
        };
        let panel = bivariate_independent_sort(&size, &sig, &data, &sparse, &"3x2".parse().unwrap()).unwrap();
        assert!(panel.empty_cells > 0);
    }
}
