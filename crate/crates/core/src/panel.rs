//! Daily equity panel: ingestion, screening filters and simple returns.
//!
//! The store is columnar. Each OHLCV field is a [`Grid`] over the union of
//! every asset's trading dates, with gaps left explicitly missing.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;

#[derive(Debug, thiserror::Error)]
pub enum PanelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("required column \"{0}\" not found in header")]
    MissingColumn(String),
    #[error("panel is empty after parsing")]
    Empty,
    #[error("invalid filter policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid panel: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Exchange {
    Nyse,
    Amex,
    Nasdaq,
    Other,
}

impl FromStr for Exchange {
    type Err = std::convert::Infallible;

    /// Accepts names and CRSP `exchcd` codes (1 = NYSE, 2 = AMEX, 3 = NASDAQ).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "NYSE" | "N" | "1" => Exchange::Nyse,
            "AMEX" | "A" | "NYSE AMERICAN" | "2" => Exchange::Amex,
            "NASDAQ" | "Q" | "3" => Exchange::Nasdaq,
            _ => Exchange::Other,
        })
    }
}

impl fmt::Display for Exchange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exchange::Nyse => "NYSE",
            Exchange::Amex => "AMEX",
            Exchange::Nasdaq => "NASDAQ",
            Exchange::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ShareClass {
    Common,
    Other,
}

impl FromStr for ShareClass {
    type Err = std::convert::Infallible;

    /// Accepts names and CRSP `shrcd` codes 10/11 for ordinary common shares.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "COMMON" | "CS" | "10" | "11" => ShareClass::Common,
            _ => ShareClass::Other,
        })
    }
}

impl fmt::Display for ShareClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareClass::Common => "COMMON",
            ShareClass::Other => "OTHER",
        })
    }
}

/// Per-cell numeric fields of the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Open,
    High,
    Low,
    Close,
    Vwap,
    Volume,
    MarketCap,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::Open,
        Field::High,
        Field::Low,
        Field::Close,
        Field::Vwap,
        Field::Volume,
        Field::MarketCap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Open => "open",
            Field::High => "high",
            Field::Low => "low",
            Field::Close => "close",
            Field::Vwap => "vwap",
            Field::Volume => "volume",
            Field::MarketCap => "market_cap",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetInfo {
    pub id: String,
    pub exchange: Exchange,
    pub share_class: ShareClass,
}

/// Immutable daily panel. Construct through [`load_panel`] or [`PricePanel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    assets: Vec<AssetInfo>,
    calendar: Vec<NaiveDate>,
    fields: [Grid; 7],
    has_vwap: bool,
}

/// Raw per-field grids used to assemble a [`PricePanel`].
#[derive(Debug, Clone)]
pub struct PanelColumns {
    pub open: Grid,
    pub high: Grid,
    pub low: Grid,
    pub close: Grid,
    /// `None` when the source carries no VWAP column.
    pub vwap: Option<Grid>,
    pub volume: Grid,
    pub market_cap: Grid,
}

impl PricePanel {
    /// Validates the calendar, shapes, positivity and OHLC ordering.
    pub fn new(
        assets: Vec<AssetInfo>,
        calendar: Vec<NaiveDate>,
        columns: PanelColumns,
    ) -> Result<Self, PanelError> {
        if calendar.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PanelError::Invalid(
                "calendar must be strictly increasing".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for a in &assets {
            if !ids.insert(a.id.as_str()) {
                return Err(PanelError::Invalid(format!("duplicate asset id {}", a.id)));
            }
        }
        let (n, t) = (assets.len(), calendar.len());
        let has_vwap = columns.vwap.is_some();
        let fields = [
            columns.open,
            columns.high,
            columns.low,
            columns.close,
            columns.vwap.unwrap_or_else(|| Grid::missing(n, t)),
            columns.volume,
            columns.market_cap,
        ];
        for (f, g) in Field::ALL.iter().zip(&fields) {
            if g.n_assets() != n || g.n_dates() != t {
                return Err(PanelError::Invalid(format!("{} grid has wrong shape", f.name())));
            }
        }
        let panel = Self {
            assets,
            calendar,
            fields,
            has_vwap,
        };
        for a in 0..n {
            for d in 0..t {
                if let Some(reason) = panel.cell_violation(a, d) {
                    return Err(PanelError::Invalid(format!(
                        "{} on {}: {reason}",
                        panel.assets[a].id, panel.calendar[d]
                    )));
                }
            }
        }
        Ok(panel)
    }

    fn cell_violation(&self, a: usize, d: usize) -> Option<&'static str> {
        let v = |f: Field| self.fields[f.index()].value(a, d);
        let prices = [Field::Open, Field::High, Field::Low, Field::Close, Field::Vwap, Field::Volume];
        if prices.iter().any(|&f| v(f).is_some_and(|x| x <= 0.0)) {
            return Some("non-positive price or volume");
        }
        ohlc_violation(v(Field::Open), v(Field::High), v(Field::Low), v(Field::Close))
    }

    pub fn assets(&self) -> &[AssetInfo] {
        &self.assets
    }

    pub fn asset_ids(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.id.clone()).collect()
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.calendar.len()
    }

    pub fn field(&self, f: Field) -> &Grid {
        &self.fields[f.index()]
    }

    /// Whether the source supplied this field at all.
    pub fn has_field(&self, f: Field) -> bool {
        f != Field::Vwap || self.has_vwap
    }

    pub fn close(&self) -> &Grid {
        self.field(Field::Close)
    }

    pub fn market_cap(&self) -> &Grid {
        self.field(Field::MarketCap)
    }

    /// A cell is an observation when any field is present.
    pub fn is_observed(&self, a: usize, d: usize) -> bool {
        self.fields.iter().any(|g| g.is_present(a, d))
    }

    pub fn count_observations(&self) -> usize {
        (0..self.n_assets())
            .map(|a| (0..self.n_dates()).filter(|&d| self.is_observed(a, d)).count())
            .sum()
    }

    fn clear_cell(&mut self, a: usize, d: usize) {
        for g in &mut self.fields {
            g.set(a, d, f64::NAN);
        }
    }

    fn retain_assets(&mut self, keep: &[usize]) {
        self.assets = keep.iter().map(|&a| self.assets[a].clone()).collect();
        for g in &mut self.fields {
            *g = g.select_assets(keep);
        }
    }

    /// Writes the panel in the canonical comma-separated layout read back by
    /// [`load_panel`] with [`ColumnMapping::default`].
    pub fn write_csv(&self, path: &Path) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "date", "asset", "open", "high", "low", "close", "vwap", "volume", "market_cap",
            "exchange", "share_class",
        ])?;
        for (a, info) in self.assets.iter().enumerate() {
            for (d, date) in self.calendar.iter().enumerate() {
                if !self.is_observed(a, d) {
                    continue;
                }
                let mut rec = vec![date.format("%Y-%m-%d").to_string(), info.id.clone()];
                for f in Field::ALL {
                    rec.push(self.field(f).value(a, d).map_or_else(String::new, |v| format!("{v}")));
                }
                rec.push(info.exchange.to_string());
                rec.push(info.share_class.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| PanelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

fn ohlc_violation(
    open: Option<f64>,
    high: Option<f64>,
    low: Option<f64>,
    close: Option<f64>,
) -> Option<&'static str> {
    let body: Vec<f64> = [open, close].into_iter().flatten().collect();
    if let Some(h) = high {
        if body.iter().any(|&x| x > h) || low.is_some_and(|l| l > h) {
            return Some("high below open/close/low");
        }
    }
    if let Some(l) = low {
        if body.iter().any(|&x| x < l) {
            return Some("low above open/close");
        }
    }
    None
}

/// Maps canonical field names to the header names used in a source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub date: String,
    pub asset: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    /// Optional: a missing VWAP column yields a panel without VWAP.
    pub vwap: String,
    pub volume: String,
    pub market_cap: String,
    pub exchange: String,
    pub share_class: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            date: "date".into(),
            asset: "asset".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            vwap: "vwap".into(),
            volume: "volume".into(),
            market_cap: "market_cap".into(),
            exchange: "exchange".into(),
            share_class: "share_class".into(),
        }
    }
}

/// Row accounting from [`load_panel`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub duplicates: usize,
    pub dropped_nonpositive: usize,
    pub dropped_inconsistent: usize,
    pub dropped_malformed: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: PricePanel,
    pub report: LoadReport,
}

struct RawRow {
    values: [Option<f64>; 7],
    exchange: Exchange,
    share_class: ShareClass,
}

fn parse_number(s: &str) -> Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(|v| v.is_finite().then_some(v)).map_err(|_| ())
}

/// Reads a comma- or tab-delimited panel with a header row.
pub fn load_panel(path: &Path, schema: &ColumnMapping) -> Result<LoadedPanel, PanelError> {
    let text = std::fs::read_to_string(path).map_err(|e| PanelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_panel(&text, schema)
}

/// [`load_panel`] over in-memory text.
pub fn parse_panel(text: &str, schema: &ColumnMapping) -> Result<LoadedPanel, PanelError> {
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let locate = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| locate(name).ok_or_else(|| PanelError::MissingColumn(name.to_string()));

    let date_col = require(&schema.date)?;
    let asset_col = require(&schema.asset)?;
    let field_cols = [
        Some(require(&schema.open)?),
        Some(require(&schema.high)?),
        Some(require(&schema.low)?),
        Some(require(&schema.close)?),
        locate(&schema.vwap),
        Some(require(&schema.volume)?),
        Some(require(&schema.market_cap)?),
    ];
    let exchange_col = require(&schema.exchange)?;
    let share_col = require(&schema.share_class)?;

    let mut report = LoadReport::default();
    let mut rows: HashMap<(String, NaiveDate), RawRow> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        let get = |i: usize| record.get(i).unwrap_or("");
        let Ok(date) = NaiveDate::parse_from_str(get(date_col).trim(), "%Y-%m-%d") else {
            report.dropped_malformed += 1;
            continue;
        };
        let asset = get(asset_col).trim().to_string();
        if asset.is_empty() {
            report.dropped_malformed += 1;
            continue;
        }
        let mut values = [None; 7];
        let mut malformed = false;
        for (slot, col) in values.iter_mut().zip(field_cols) {
            if let Some(c) = col {
                match parse_number(get(c)) {
                    Ok(v) => *slot = v,
                    Err(()) => malformed = true,
                }
            }
        }
        if malformed {
            report.dropped_malformed += 1;
            continue;
        }
        // Market cap positivity is a filter predicate, not a load invariant.
        if values[..6].iter().flatten().any(|&v| v <= 0.0) {
            report.dropped_nonpositive += 1;
            continue;
        }
        if ohlc_violation(values[0], values[1], values[2], values[3]).is_some() {
            report.dropped_inconsistent += 1;
            continue;
        }
        let row = RawRow {
            values,
            exchange: get(exchange_col).parse().unwrap_or(Exchange::Other),
            share_class: get(share_col).parse().unwrap_or(ShareClass::Other),
        };
        if rows.insert((asset, date), row).is_some() {
            report.duplicates += 1;
        }
    }
    if rows.is_empty() {
        return Err(PanelError::Empty);
    }
    if report.duplicates > 0 {
        log::warn!("collapsed {} duplicate (asset, date) rows, keeping the last", report.duplicates);
    }
    report.rows_kept = rows.len();

    let ids: BTreeSet<&String> = rows.keys().map(|(a, _)| a).collect();
    let ids: Vec<String> = ids.into_iter().cloned().collect();
    let dates: BTreeSet<NaiveDate> = rows.keys().map(|(_, d)| *d).collect();
    let calendar: Vec<NaiveDate> = dates.into_iter().collect();
    let asset_pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let date_pos: HashMap<NaiveDate, usize> = calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let (n, t) = (ids.len(), calendar.len());
    let mut grids: Vec<Grid> = (0..7).map(|_| Grid::missing(n, t)).collect();
    // Latest row per asset decides its static attributes.
    let mut attrs: Vec<Option<(NaiveDate, Exchange, ShareClass)>> = vec![None; n];
    for ((asset, date), row) in &rows {
        let (a, d) = (asset_pos[asset.as_str()], date_pos[date]);
        for (g, v) in grids.iter_mut().zip(row.values) {
            if let Some(v) = v {
                g.set(a, d, v);
            }
        }
        if attrs[a].is_none_or(|(seen, _, _)| *date > seen) {
            attrs[a] = Some((*date, row.exchange, row.share_class));
        }
    }
    let assets = ids
        .into_iter()
        .zip(attrs)
        .map(|(id, attr)| {
            let (_, exchange, share_class) = attr.expect("every asset has a row");
            AssetInfo {
                id,
                exchange,
                share_class,
            }
        })
        .collect();
    let mut it = grids.into_iter();
    let mut next = || it.next().expect("seven grids");
    let columns = PanelColumns {
        open: next(),
        high: next(),
        low: next(),
        close: next(),
        vwap: {
            let g = next();
            field_cols[4].map(|_| g)
        },
        volume: next(),
        market_cap: next(),
    };
    let panel = PricePanel::new(assets, calendar, columns)?;
    Ok(LoadedPanel { panel, report })
}

/// Screening rules applied after ingestion. `None` disables a predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    /// Asset-dates whose close is below this are removed.
    pub min_price: Option<f64>,
    pub allowed_exchanges: Option<BTreeSet<Exchange>>,
    pub common_equity_only: bool,
    /// Drop assets whose close and volume history duplicates another asset's.
    pub drop_duplicates: bool,
    /// Drop asset-dates with a non-positive or missing market cap.
    pub drop_nonpositive: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_price: Some(5.0),
            allowed_exchanges: Some([Exchange::Nyse, Exchange::Amex, Exchange::Nasdaq].into()),
            common_equity_only: true,
            drop_duplicates: true,
            drop_nonpositive: true,
        }
    }
}

impl FilterPolicy {
    pub fn disabled() -> Self {
        Self {
            min_price: None,
            allowed_exchanges: None,
            common_equity_only: false,
            drop_duplicates: false,
            drop_nonpositive: false,
        }
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        if let Some(p) = self.min_price {
            if !(p > 0.0) {
                return Err(PanelError::InvalidPolicy(format!("min_price must be > 0, got {p}")));
            }
        }
        if self.allowed_exchanges.as_ref().is_some_and(BTreeSet::is_empty) {
            return Err(PanelError::InvalidPolicy("allowed_exchanges is empty".into()));
        }
        Ok(())
    }
}

/// Asset-date removal counts per predicate, in application order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterAudit {
    pub assets_in: usize,
    pub assets_out: usize,
    pub observations_in: usize,
    pub observations_out: usize,
    pub removed_exchange: usize,
    pub removed_share_class: usize,
    pub removed_nonpositive: usize,
    pub removed_min_price: usize,
    pub removed_duplicate: usize,
    pub empty: bool,
}

/// Keeps exactly the asset-dates passing every enabled predicate.
///
/// Predicates run in the order exchange, share class, market cap, price,
/// duplicates; each count covers only what earlier predicates left. Assets
/// with no remaining observation are dropped. The calendar is unchanged.
pub fn apply_filters(
    panel: &PricePanel,
    policy: &FilterPolicy,
) -> Result<(PricePanel, FilterAudit), PanelError> {
    policy.validate()?;
    let mut out = panel.clone();
    let mut audit = FilterAudit {
        assets_in: panel.n_assets(),
        observations_in: panel.count_observations(),
        ..Default::default()
    };
    let (n, t) = (out.n_assets(), out.n_dates());

    let clear_asset = |p: &mut PricePanel, a: usize| -> usize {
        let mut removed = 0;
        for d in 0..t {
            if p.is_observed(a, d) {
                p.clear_cell(a, d);
                removed += 1;
            }
        }
        removed
    };

    for a in 0..n {
        let info = out.assets[a].clone();
        if let Some(allowed) = &policy.allowed_exchanges {
            if !allowed.contains(&info.exchange) {
                audit.removed_exchange += clear_asset(&mut out, a);
                continue;
            }
        }
        if policy.common_equity_only && info.share_class != ShareClass::Common {
            audit.removed_share_class += clear_asset(&mut out, a);
        }
    }

    for a in 0..n {
        for d in 0..t {
            if !out.is_observed(a, d) {
                continue;
            }
            if policy.drop_nonpositive && !out.market_cap().value(a, d).is_some_and(|c| c > 0.0) {
                out.clear_cell(a, d);
                audit.removed_nonpositive += 1;
                continue;
            }
            if let Some(min) = policy.min_price {
                if out.close().value(a, d).is_some_and(|c| c < min) {
                    out.clear_cell(a, d);
                    audit.removed_min_price += 1;
                }
            }
        }
    }

    if policy.drop_duplicates {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        for a in 0..n {
            let key: Vec<u64> = out
                .close()
                .row(a)
                .iter()
                .chain(out.field(Field::Volume).row(a))
                .map(|v| if v.is_finite() { v.to_bits() } else { u64::MAX })
                .collect();
            if key.iter().all(|&b| b == u64::MAX) {
                continue;
            }
            if seen.contains_key(&key) {
                audit.removed_duplicate += clear_asset(&mut out, a);
            } else {
                seen.insert(key, a);
            }
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&a| (0..t).any(|d| out.is_observed(a, d))).collect();
    out.retain_assets(&keep);
    audit.assets_out = out.n_assets();
    audit.observations_out = out.count_observations();
    audit.empty = audit.assets_out == 0;
    if audit.empty {
        log::warn!("filter policy removed every observation");
    }
    Ok((out, audit))
}

/// Simple net daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub asset_ids: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub returns: Grid,
}

/// `close(t) / close(t-1) - 1` where both closes exist on adjacent calendar dates.
pub fn compute_returns(panel: &PricePanel) -> ReturnPanel {
    let close = panel.close();
    let mut returns = Grid::missing(panel.n_assets(), panel.n_dates());
    for a in 0..panel.n_assets() {
        for d in 1..panel.n_dates() {
            if let (Some(prev), Some(cur)) = (close.value(a, d - 1), close.value(a, d)) {
                returns.set(a, d, cur / prev - 1.0);
            }
        }
    }
    ReturnPanel {
        asset_ids: panel.asset_ids(),
        calendar: panel.calendar().to_vec(),
        returns,
    }
}
