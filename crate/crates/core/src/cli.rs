//! Command-line entry point.
//!
//! Every invocation resolves to a [`RunConfig`] (defaults, then an optional
//! JSON config file, then flags), runs one stage, and writes a manifest next
//! to its outputs recording input hashes, the resolved config, the seed and
//! stage timings. Exit status: 0 on success, 2 for usage or configuration
//! errors, 1 when a stage fails (the manifest is then marked `failed` and
//! lists whatever was written before the failure).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alpha::{evaluate, load_expression_bundle, representative_bundle, EvalInputs, EvalOptions, SignalPanel};
use crate::grid::Grid;
use crate::io::{self, csv_files, read_series_dir, read_wide, write_series, write_wide, WideTable};
use crate::panel::{apply_filters, compute_returns, load_panel, ColumnMapping, FilterPolicy};
use crate::pipeline::{
    compute_moments, run_double_selection, run_estimator, AssetReturns, Estimator, MomentOptions, PipelineOptions,
    PremiumTable,
};
use crate::portfolio::{
    aggregate_daily_to_monthly, bivariate_independent_sort, hml_decile_factor, Frequency, HmlOptions, MarketData,
    SortSpec, TiePolicy, Universe, Weighting,
};
use crate::report::{render_tables, Style};
use crate::synth::monte_carlo;
use crate::synth::{generate, scenarios, SyntheticDgp, SyntheticSample};

pub const THREADS_ENV: &str = "FACTORSIEVE_THREADS";
pub const EXIT_STAGE_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Stage(_) => EXIT_STAGE_FAILURE,
        }
    }
}

fn stage_err(e: impl std::fmt::Display) -> CliError {
    CliError::Stage(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Signals,
    Portfolios,
    #[default]
    Ds,
    Ss,
    Enet,
    Pca,
    Synth,
    Report,
}

impl Stage {
    fn estimator(self) -> Option<Estimator> {
        match self {
            Stage::Ds => Some(Estimator::Ds),
            Stage::Ss => Some(Estimator::Ss),
            Stage::Enet => Some(Estimator::Enet),
            Stage::Pca => Some(Estimator::Pca),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Signals => "signals",
            Stage::Portfolios => "portfolios",
            Stage::Ds => "ds",
            Stage::Ss => "ss",
            Stage::Enet => "enet",
            Stage::Pca => "pca",
            Stage::Synth => "synth",
            Stage::Report => "report",
        }
    }
}

/// Built-in synthetic designs selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    StrongSignal,
    PureNoise,
    Confounded,
    PlantedAlpha,
}

impl Scenario {
    pub fn dgp(self, seed: u64) -> SyntheticDgp {
        match self {
            Scenario::StrongSignal => scenarios::strong_signal(seed),
            Scenario::PureNoise => scenarios::pure_noise(seed),
            Scenario::Confounded => scenarios::confounded(seed),
            Scenario::PlantedAlpha => scenarios::planted_alpha(seed),
        }
    }
}

/// Everything a run depends on besides the input files themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Stage,
    /// Named input paths. Keys by stage: `panel` (ingest, signals),
    /// `bundle` (signals, optional), `signals` (portfolios), `assets`,
    /// `controls`, `alphas` (estimators), `spec` (synth, optional),
    /// `table0`, `table1`, ... (report).
    pub inputs: BTreeMap<String, PathBuf>,
    /// Output directory, or the report file for estimator and report stages.
    pub output: PathBuf,
    pub mapping: ColumnMapping,
    pub filters: FilterPolicy,
    pub eval: EvalOptions,
    /// Signals whose share of observed cells falls below this are skipped.
    pub min_coverage: f64,
    pub sort: SortSpec,
    pub hml: HmlOptions,
    pub moments: MomentOptions,
    /// Cross-validation (folds, seed, path length and depth), elastic-net
    /// mixing grid, PCA variance target and significance thresholds.
    pub pipeline: PipelineOptions,
    /// Estimators evaluated per synthetic run.
    pub estimators: Vec<Estimator>,
    pub scenario: Option<Scenario>,
    /// Overrides the design's base seed for synthetic runs.
    pub synth_seed: Option<u64>,
    pub runs: usize,
    /// Number of leading synthetic runs whose data are written to disk.
    pub fixtures: usize,
    pub style: Style,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Stage::default(),
            inputs: BTreeMap::new(),
            output: PathBuf::new(),
            mapping: ColumnMapping::default(),
            filters: FilterPolicy::default(),
            eval: EvalOptions::default(),
            min_coverage: 0.0,
            sort: SortSpec::new(3, 2).expect("3x2 is valid"),
            hml: HmlOptions::default(),
            moments: MomentOptions::default(),
            pipeline: PipelineOptions::default(),
            estimators: vec![Estimator::Ds, Estimator::Ss, Estimator::Enet, Estimator::Pca],
            scenario: None,
            synth_seed: None,
            runs: 1,
            fixtures: 1,
            style: Style::Tsv,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn input(&self, key: &str) -> Result<&Path, CliError> {
        self.inputs
            .get(key)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::Config(format!("`{}` needs input `{key}`", self.command.name())))
    }

    /// Checks every numeric knob and the inputs the chosen stage needs.
    pub fn validate(&self) -> Result<(), CliError> {
        let cv = &self.pipeline.cv;
        check(cv.folds >= 2, || format!("folds must be >= 2, got {}", cv.folds))?;
        check(cv.path_len >= 2, || format!("path length must be >= 2, got {}", cv.path_len))?;
        check(cv.path_eps > 0.0 && cv.path_eps < 1.0, || format!("path eps must lie in (0, 1), got {}", cv.path_eps))?;
        check(cv.penalty.tol > 0.0 && cv.penalty.max_sweeps > 0, || "solver tolerance and sweep limit must be positive".into())?;
        let ratios = &self.pipeline.l1_ratios;
        check(!ratios.is_empty() && ratios.iter().all(|r| *r > 0.0 && *r <= 1.0), || {
            format!("l1 ratios must be non-empty and lie in (0, 1], got {ratios:?}")
        })?;
        let target = self.pipeline.pca_target;
        check(target > 0.0 && target <= 1.0, || format!("PCA variance target must lie in (0, 1], got {target}"))?;
        let sig = self.pipeline.significance;
        check(sig.five_percent > 0.0 && sig.five_percent < sig.one_percent, || {
            format!("significance thresholds must satisfy 0 < 5% < 1%, got {} and {}", sig.five_percent, sig.one_percent)
        })?;
        check(self.pipeline.collinearity_tol >= 0.0, || "collinearity tolerance must be >= 0".into())?;
        check(self.eval.window >= 1, || "window must be >= 1".into())?;
        check((0.0..=1.0).contains(&self.min_coverage), || format!("minimum coverage must lie in [0, 1], got {}", self.min_coverage))?;
        self.sort.validate().map_err(|e| CliError::Config(e.to_string()))?;
        check(self.hml.bins >= 2, || format!("HML bins must be >= 2, got {}", self.hml.bins))?;
        check(self.moments.min_months >= 2, || format!("minimum overlap must be >= 2 months, got {}", self.moments.min_months))?;
        self.filters.validate().map_err(|e| CliError::Config(e.to_string()))?;
        check(self.runs >= 1, || "runs must be >= 1".into())?;
        check(!self.estimators.is_empty(), || "at least one estimator is required".into())?;
        check(!self.output.as_os_str().is_empty() || self.command == Stage::Report, || {
            format!("`{}` needs an output path", self.command.name())
        })?;
        match self.command {
            Stage::Ingest | Stage::Signals => {
                self.input("panel")?;
            }
            Stage::Portfolios => {
                self.input("signals")?;
            }
            Stage::Ds | Stage::Ss | Stage::Enet | Stage::Pca => {
                for k in ["assets", "controls", "alphas"] {
                    self.input(k)?;
                }
            }
            Stage::Synth => check(self.inputs.contains_key("spec") || self.scenario.is_some(), || {
                "`synth` needs a design file or a named scenario".into()
            })?,
            Stage::Report => check(!report_inputs(self).is_empty(), || "`report` needs at least one table".into())?,
        }
        Ok(())
    }
}

fn report_inputs(cfg: &RunConfig) -> Vec<&Path> {
    let mut keyed: Vec<(usize, &Path)> = cfg
        .inputs
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("table").and_then(|i| i.parse().ok()).map(|i| (i, v.as_path())))
        .collect();
    keyed.sort_by_key(|(i, _)| *i);
    keyed.into_iter().map(|(_, p)| p).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> std::io::Result<FileDigest> {
    let data = fs::read(path)?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

/// Digests of a file, or of every regular file under a directory in path order.
fn digest_tree(path: &Path) -> std::io::Result<Vec<FileDigest>> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        let mut out = Vec::new();
        for e in entries {
            out.extend(digest_tree(&e)?);
        }
        Ok(out)
    } else {
        Ok(vec![digest_file(path)?])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Stage,
    pub status: RunStatus,
    pub error: Option<String>,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Collects outputs and timings while a stage runs.
struct Recorder {
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Recorder {
    fn new() -> Self {
        Self {
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            clock: Instant::now(),
        }
    }

    fn lap(&mut self, step: &str) {
        let now = Instant::now();
        self.timings.insert(step.to_string(), (now - self.clock).as_secs_f64() * 1e3);
        self.clock = now;
    }

    fn wrote(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn write_text(&mut self, path: PathBuf, text: &str) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| stage_err(format!("{}: {e}", dir.display())))?;
        }
        fs::write(&path, text).map_err(|e| stage_err(format!("{}: {e}", path.display())))?;
        self.wrote(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(stage_err)?;
        text.push('\n');
        self.write_text(path, &text)
    }

    fn write_wide(&mut self, path: PathBuf, table: &WideTable) -> Result<(), CliError> {
        write_wide(&path, table).map_err(stage_err)?;
        self.wrote(path);
        Ok(())
    }
}

/// Where the manifest of a run goes: inside an output directory, or beside
/// an output file as `<stem>.manifest.json`.
pub fn manifest_path(cfg: &RunConfig) -> Option<PathBuf> {
    if cfg.output.as_os_str().is_empty() {
        return None;
    }
    Some(match cfg.command {
        Stage::Ds | Stage::Ss | Stage::Enet | Stage::Pca | Stage::Report => sibling(&cfg.output, "manifest.json"),
        _ => cfg.output.join("manifest.json"),
    })
}

/// `dir/report.tsv` -> `dir/report.<suffix>`.
pub fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.{suffix}"))
}

/// Runs one stage and writes its manifest. The manifest is written even when
/// the stage fails.
pub fn run(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let mut inputs = Vec::new();
    for path in cfg.inputs.values() {
        inputs.extend(digest_tree(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    let mut rec = Recorder::new();
    let start = Instant::now();
    let result = match cfg.command {
        Stage::Ingest => run_ingest(cfg, &mut rec),
        Stage::Signals => run_signals(cfg, &mut rec),
        Stage::Portfolios => run_portfolios(cfg, &mut rec),
        Stage::Ds | Stage::Ss | Stage::Enet | Stage::Pca => run_estimate(cfg, &mut rec),
        Stage::Synth => run_synth(cfg, &mut rec),
        Stage::Report => run_report(cfg, &mut rec),
    };
    rec.timings.insert("total".into(), start.elapsed().as_secs_f64() * 1e3);
    let outputs = rec.outputs.iter().filter_map(|p| digest_file(p).ok()).collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command,
        status: if result.is_ok() { RunStatus::Ok } else { RunStatus::Failed },
        error: result.as_ref().err().map(ToString::to_string),
        seed: cfg.pipeline.cv.seed,
        threads: rayon::current_num_threads(),
        config: cfg.clone(),
        inputs,
        outputs,
        timings_ms: rec.timings,
    };
    if let Some(path) = manifest_path(cfg) {
        let text = serde_json::to_string_pretty(&manifest).map_err(stage_err)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            let _ = fs::create_dir_all(dir);
        }
        fs::write(&path, text + "\n").map_err(|e| stage_err(format!("{}: {e}", path.display())))?;
    }
    result.map(|()| manifest)
}

fn run_ingest(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let loaded = load_panel(cfg.input("panel")?, &cfg.mapping).map_err(stage_err)?;
    rec.lap("load");
    let (panel, audit) = apply_filters(&loaded.panel, &cfg.filters).map_err(stage_err)?;
    rec.lap("filter");
    let out = &cfg.output;
    let path = out.join("panel.csv");
    fs::create_dir_all(out).map_err(|e| stage_err(format!("{}: {e}", out.display())))?;
    panel.write_csv(&path).map_err(stage_err)?;
    rec.wrote(path);
    rec.write_json(out.join("load_report.json"), &loaded.report)?;
    rec.write_json(out.join("filter_audit.json"), &audit)?;
    rec.lap("write");
    log::info!("ingest kept {} of {} assets", audit.assets_out, audit.assets_in);
    Ok(())
}

fn grid_table(calendar: &[chrono::NaiveDate], ids: &[String], grid: &Grid) -> WideTable {
    WideTable {
        dates: calendar.to_vec(),
        names: ids.to_vec(),
        columns: (0..grid.n_assets()).map(|a| grid.row(a).to_vec()).collect(),
    }
}

fn table_grid(t: &WideTable) -> Grid {
    Grid::from_rows(t.columns.clone())
}

#[derive(Debug, Serialize)]
struct SignalSummary {
    window: usize,
    coverage: BTreeMap<String, f64>,
    skipped: BTreeMap<String, String>,
}

/// Subdirectory of a signals directory holding the market inputs.
pub const MARKET_INPUTS_DIR: &str = "_inputs";

fn run_signals(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let panel_path = cfg.input("panel")?;
    let panel_file = if panel_path.is_dir() { panel_path.join("panel.csv") } else { panel_path.to_path_buf() };
    let prices = load_panel(&panel_file, &ColumnMapping::default()).map_err(stage_err)?.panel;
    let returns = compute_returns(&prices);
    let bundle = match cfg.inputs.get("bundle") {
        Some(p) => load_expression_bundle(p).map_err(stage_err)?,
        None => representative_bundle(),
    };
    rec.lap("load");
    let inputs = EvalInputs {
        prices: &prices,
        returns: &returns,
    };
    let results: Vec<_> = bundle.expressions.par_iter().map(|e| (e.name.clone(), evaluate(e, inputs, cfg.eval))).collect();
    rec.lap("evaluate");
    let out = &cfg.output;
    let mut summary = SignalSummary {
        window: cfg.eval.window,
        coverage: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    for (name, result) in results {
        match result {
            Ok(s) if s.coverage() < cfg.min_coverage => {
                let msg = format!("coverage {:.3} below the {:.3} threshold", s.coverage(), cfg.min_coverage);
                log::warn!("signal {name} skipped: {msg}");
                summary.skipped.insert(name, msg);
            }
            Ok(s) => {
                summary.coverage.insert(name.clone(), s.coverage());
                rec.write_wide(out.join(format!("{name}.csv")), &grid_table(&s.calendar, &s.asset_ids, &s.values))?;
            }
            Err(e) => {
                log::warn!("signal {name} skipped: {e}");
                summary.skipped.insert(name, e.to_string());
            }
        }
    }
    if summary.coverage.is_empty() {
        return Err(stage_err("no expression could be evaluated on this panel"));
    }
    let ids = prices.asset_ids();
    let market = out.join(MARKET_INPUTS_DIR);
    rec.write_wide(market.join("returns.csv"), &grid_table(&returns.calendar, &ids, &returns.returns))?;
    rec.write_wide(market.join("market_cap.csv"), &grid_table(prices.calendar(), &ids, prices.market_cap()))?;
    rec.write_json(out.join("coverage.json"), &summary)?;
    rec.lap("write");
    Ok(())
}

#[derive(Debug, Serialize)]
struct PortfolioSummary {
    factor: String,
    hml_months: usize,
    skipped_periods: Vec<crate::portfolio::SkippedPeriod>,
    empty_cells: usize,
}

fn run_portfolios(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let dir = cfg.input("signals")?;
    let market = dir.join(MARKET_INPUTS_DIR);
    let returns = read_wide(&market.join("returns.csv")).map_err(stage_err)?;
    let caps = read_wide(&market.join("market_cap.csv")).map_err(stage_err)?;
    if returns.names != caps.names || returns.dates != caps.dates {
        return Err(stage_err("returns and market caps disagree on assets or dates"));
    }
    let data = MarketData::new(returns.names.clone(), returns.dates.clone(), table_grid(&returns), table_grid(&caps))
        .map_err(stage_err)?;
    let size = SignalPanel {
        name: "market_cap".into(),
        window: 1,
        asset_ids: caps.names.clone(),
        calendar: caps.dates.clone(),
        values: table_grid(&caps),
    };
    let mut signals = Vec::new();
    for path in csv_files(dir).map_err(stage_err)? {
        let t = read_wide(&path).map_err(stage_err)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        signals.push(SignalPanel {
            name,
            window: cfg.eval.window,
            asset_ids: t.names.clone(),
            calendar: t.dates.clone(),
            values: table_grid(&t),
        });
    }
    if signals.is_empty() {
        return Err(stage_err(format!("{}: no signal files", dir.display())));
    }
    rec.lap("load");
    let universe = Universe::default();
    let built: Vec<_> = signals
        .par_iter()
        .map(|s| {
            let hml = hml_decile_factor(s, &data, &universe, &cfg.hml)?;
            let monthly = aggregate_daily_to_monthly(&hml.series);
            let sorted = bivariate_independent_sort(&size, s, &data, &universe, &cfg.sort)?;
            Ok((hml, monthly, sorted))
        })
        .collect::<Result<_, crate::portfolio::PortfolioError>>()
        .map_err(stage_err)?;
    rec.lap("sort");
    let out = &cfg.output;
    let mut summaries = Vec::new();
    for (hml, monthly, sorted) in built {
        let name = &sorted.factor;
        let path = out.join("factors").join(format!("{name}.csv"));
        write_series(&path, &monthly).map_err(stage_err)?;
        rec.wrote(path);
        rec.write_wide(
            out.join("test_assets").join(format!("{name}.csv")),
            &WideTable {
                dates: sorted.dates.clone(),
                names: sorted.portfolio_ids.clone(),
                columns: sorted.returns.clone(),
            },
        )?;
        summaries.push(PortfolioSummary {
            factor: name.clone(),
            hml_months: monthly.present().count(),
            skipped_periods: hml.skipped,
            empty_cells: sorted.empty_cells,
        });
    }
    rec.write_json(out.join("portfolios.json"), &summaries)?;
    rec.lap("write");
    Ok(())
}

/// Reads estimator inputs: wide test-asset files, control and alpha series.
pub fn load_estimation_inputs(
    assets: &Path,
    controls: &Path,
    alphas: &Path,
) -> Result<(AssetReturns, Vec<crate::portfolio::FactorSeries>, Vec<crate::portfolio::FactorSeries>), io::IoError> {
    let tables = csv_files(assets)?.iter().map(|p| read_wide(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((
        AssetReturns::from_tables(&tables),
        read_series_dir(controls, Frequency::Monthly)?,
        read_series_dir(alphas, Frequency::Monthly)?,
    ))
}

fn run_estimate(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let estimator = cfg.command.estimator().expect("estimator stage");
    let (assets, controls, alphas) =
        load_estimation_inputs(cfg.input("assets")?, cfg.input("controls")?, cfg.input("alphas")?).map_err(stage_err)?;
    rec.lap("load");
    let m = compute_moments(&assets, &controls, &alphas, &cfg.moments).map_err(stage_err)?;
    if !m.dropped_assets.is_empty() {
        log::warn!("{} test assets dropped for insufficient overlap", m.dropped_assets.len());
    }
    rec.lap("moments");
    let table = if estimator == Estimator::Ds {
        let ds = run_double_selection(&m, &cfg.pipeline).map_err(stage_err)?;
        rec.lap("estimate");
        rec.write_json(sibling(&cfg.output, "selection.json"), &ds.sets)?;
        ds.table
    } else {
        let t = run_estimator(&m, estimator, &cfg.pipeline).map_err(stage_err)?;
        rec.lap("estimate");
        t
    };
    rec.write_json(sibling(&cfg.output, "table.json"), &table)?;
    rec.write_text(cfg.output.clone(), &render_tables(std::slice::from_ref(&table), cfg.style))?;
    rec.lap("write");
    Ok(())
}

/// Writes one synthetic sample in the layout the estimator commands read.
pub fn write_fixture(dir: &Path, sample: &SyntheticSample) -> Result<Vec<PathBuf>, CliError> {
    let mut rec = Recorder::new();
    rec.write_wide(dir.join("assets").join("assets.csv"), &sample.assets.to_table())?;
    for (sub, series) in [("controls", &sample.controls), ("alphas", &sample.alphas)] {
        for s in series {
            let path = dir.join(sub).join(format!("{}.csv", s.name));
            write_series(&path, s).map_err(stage_err)?;
            rec.wrote(path);
        }
    }
    rec.write_json(dir.join("truth.json"), &sample.truth)?;
    Ok(rec.outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumSummary {
    pub factor: String,
    pub truth: f64,
    pub mean: f64,
    /// Monte-Carlo standard error of the mean.
    pub std_error: f64,
    /// `(mean - truth) / std_error`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub alphas: Vec<PremiumSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub dgp: SyntheticDgp,
    pub runs: usize,
    pub support: Vec<usize>,
    /// Share of runs whose first-stage set contains the true support.
    pub recovery_rate: f64,
    pub median_false_discoveries: f64,
    pub estimators: Vec<EstimatorSummary>,
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.is_empty() {
        f64::NAN
    } else if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn run_synth(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let mut dgp = match (cfg.inputs.get("spec"), cfg.scenario) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SyntheticDgp>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        (None, Some(s)) => s.dgp(0),
        (None, None) => unreachable!("validated"),
    };
    if let Some(seed) = cfg.synth_seed {
        dgp.seed = seed;
    }
    dgp.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let out = &cfg.output;
    for r in 0..cfg.fixtures.min(cfg.runs) {
        let d = dgp.with_seed(dgp.seed.wrapping_add(r as u64));
        let sample = generate(&d).map_err(stage_err)?;
        let files = write_fixture(&out.join("fixtures").join(format!("seed_{}", d.seed)), &sample)?;
        rec.outputs.extend(files);
    }
    rec.lap("fixtures");
    let summaries = monte_carlo(&dgp, cfg.runs, &cfg.estimators, &cfg.pipeline).map_err(stage_err)?;
    rec.lap("monte_carlo");
    let mut jsonl = String::new();
    for s in &summaries {
        jsonl.push_str(&serde_json::to_string(s).map_err(stage_err)?);
        jsonl.push('\n');
    }
    rec.write_text(out.join("runs.jsonl"), &jsonl)?;

    let truth = generate(&dgp.with_seed(dgp.seed)).map_err(stage_err)?.truth;
    let support = truth.control_support();
    let recovered = summaries.iter().filter(|s| support.iter().all(|k| s.stage1.contains(k))).count();
    let false_discoveries = summaries.iter().map(|s| s.stage1.iter().filter(|k| !support.contains(k)).count() as f64).collect();
    let estimators = cfg
        .estimators
        .iter()
        .map(|&e| EstimatorSummary {
            estimator: e,
            alphas: (0..dgp.n_alphas)
                .map(|j| {
                    let xs: Vec<f64> = summaries.iter().filter_map(|s| s.premia(e).map(|p| p[j])).collect();
                    let (mean, std_error) = mean_and_se(&xs);
                    let t = truth.alpha_premia[j];
                    PremiumSummary {
                        factor: crate::synth::alpha_name(j),
                        truth: t,
                        mean,
                        std_error,
                        z: (mean - t) / std_error,
                    }
                })
                .collect(),
        })
        .collect();
    let summary = SynthSummary {
        runs: cfg.runs,
        support,
        recovery_rate: recovered as f64 / cfg.runs as f64,
        median_false_discoveries: median(false_discoveries),
        estimators,
        dgp,
    };
    rec.write_json(out.join("summary.json"), &summary)?;
    rec.lap("write");
    Ok(())
}

fn run_report(cfg: &RunConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let tables = report_inputs(cfg)
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| stage_err(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<PremiumTable>(&text).map_err(|e| stage_err(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = render_tables(&tables, cfg.style);
    if cfg.output.as_os_str().is_empty() {
        print!("{text}");
    } else {
        rec.write_text(cfg.output.clone(), &text)?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "factorsieve", version, about = "Screen candidate alpha factors against a large control factor set")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the resolved configuration to this file and exit.
    #[arg(long, global = true)]
    pub write_config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw daily panel, apply the screening filters and snapshot it.
    Ingest(IngestArgs),
    /// Evaluate an expression bundle over an ingested panel.
    Signals(SignalsArgs),
    /// Build long-short factors and size x signal test portfolios.
    Portfolios(PortfoliosArgs),
    /// Double-selection premium estimates.
    Ds(EstimateArgs),
    /// Single-selection benchmark.
    Ss(EstimateArgs),
    /// Elastic-net benchmark.
    Enet(EstimateArgs),
    /// Principal-component benchmark.
    Pca(EstimateArgs),
    /// Monte-Carlo runs on a synthetic design.
    Synth(SynthArgs),
    /// Render saved premium tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw panel file (comma or tab delimited).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON column mapping from canonical names to file headers.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub min_price: Option<f64>,
    /// Disable every screening predicate.
    #[arg(long)]
    pub no_filters: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SignalsArgs {
    /// Expression bundle; the built-in representative bundle when omitted.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Directory written by `ingest`, or a canonical panel file.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Evaluate cells whose trailing window is only partly observed.
    #[arg(long)]
    pub partial_window: bool,
    /// Skip signals with a smaller share of observed cells.
    #[arg(long)]
    pub min_coverage: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PortfoliosArgs {
    /// Directory written by `signals`.
    #[arg(long)]
    pub signals: Option<PathBuf>,
    /// Size x signal bins, e.g. 3x2 or 5x5.
    #[arg(long)]
    pub spec: Option<SortSpec>,
    #[arg(long)]
    pub weighting: Option<Weighting>,
    #[arg(long, value_enum)]
    pub tie_policy: Option<TieArg>,
    /// Quantile bins of the long-short factor.
    #[arg(long)]
    pub hml_bins: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TieArg {
    Overlapping,
    Strict,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Directory of wide monthly test-asset files.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Directory of monthly control factor series.
    #[arg(long)]
    pub controls: Option<PathBuf>,
    /// Directory of monthly candidate factor series.
    #[arg(long)]
    pub alphas: Option<PathBuf>,
    /// Cross-validation fold seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Penalty grid length.
    #[arg(long)]
    pub n_taus: Option<usize>,
    /// Ratio of the smallest to the largest penalty on the grid.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_months: Option<usize>,
    #[arg(long)]
    pub style: Option<Style>,
    /// Report file; the table and manifest are written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Design file (JSON).
    #[arg(long, conflicts_with = "scenario")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed of the runs; overrides the design file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// How many leading runs to write out as estimator inputs.
    #[arg(long)]
    pub fixtures: Option<usize>,
    /// Comma-separated subset of ds, ss, enet, pca.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<Estimator>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Table files written by the estimator commands, in column order.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub style: Option<Style>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_input(cfg: &mut RunConfig, key: &str, value: Option<PathBuf>) {
    if let Some(v) = value {
        cfg.inputs.insert(key.into(), v);
    }
}

impl Cli {
    /// Layers flags over the config file (or defaults).
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        match self.command {
            Command::Ingest(a) => {
                cfg.command = Stage::Ingest;
                set_input(&mut cfg, "panel", a.input);
                if let Some(p) = a.mapping {
                    let text = fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    cfg.mapping =
                        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                }
                if a.no_filters {
                    cfg.filters = FilterPolicy::disabled();
                }
                if a.min_price.is_some() {
                    cfg.filters.min_price = a.min_price;
                }
                set(&mut cfg.output, a.out);
            }
            Command::Signals(a) => {
                cfg.command = Stage::Signals;
                set_input(&mut cfg, "panel", a.panel);
                set_input(&mut cfg, "bundle", a.bundle);
                set(&mut cfg.eval.window, a.window);
                if a.partial_window {
                    cfg.eval.complete_window = false;
                }
                set(&mut cfg.min_coverage, a.min_coverage);
                set(&mut cfg.output, a.out);
            }
            Command::Portfolios(a) => {
                cfg.command = Stage::Portfolios;
                set_input(&mut cfg, "signals", a.signals);
                if let Some(s) = a.spec {
                    cfg.sort.size_bins = s.size_bins;
                    cfg.sort.signal_bins = s.signal_bins;
                }
                if let Some(w) = a.weighting {
                    cfg.sort.weighting = w;
                    cfg.hml.weighting = w;
                }
                if let Some(t) = a.tie_policy {
                    let t = match t {
                        TieArg::Overlapping => TiePolicy::OverlappingBins,
                        TieArg::Strict => TiePolicy::Strict,
                    };
                    cfg.sort.tie_policy = t;
                    cfg.hml.tie_policy = t;
                }
                set(&mut cfg.hml.bins, a.hml_bins);
                set(&mut cfg.output, a.out);
            }
            Command::Ds(a) => apply_estimate(&mut cfg, Stage::Ds, a),
            Command::Ss(a) => apply_estimate(&mut cfg, Stage::Ss, a),
            Command::Enet(a) => apply_estimate(&mut cfg, Stage::Enet, a),
            Command::Pca(a) => apply_estimate(&mut cfg, Stage::Pca, a),
            Command::Synth(a) => {
                cfg.command = Stage::Synth;
                if a.spec.is_some() {
                    cfg.scenario = None;
                }
                set_input(&mut cfg, "spec", a.spec);
                if a.scenario.is_some() {
                    cfg.inputs.remove("spec");
                    cfg.scenario = a.scenario;
                }
                set(&mut cfg.runs, a.runs);
                if a.seed.is_some() {
                    cfg.synth_seed = a.seed;
                }
                set(&mut cfg.fixtures, a.fixtures);
                set(&mut cfg.estimators, a.estimators);
                set(&mut cfg.output, a.out);
            }
            Command::Report(a) => {
                cfg.command = Stage::Report;
                cfg.inputs.retain(|k, _| !k.starts_with("table"));
                for (i, p) in a.inputs.into_iter().enumerate() {
                    cfg.inputs.insert(format!("table{i}"), p);
                }
                set(&mut cfg.style, a.style);
                set(&mut cfg.output, a.out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_estimate(cfg: &mut RunConfig, stage: Stage, a: EstimateArgs) {
    cfg.command = stage;
    set_input(cfg, "assets", a.assets);
    set_input(cfg, "controls", a.controls);
    set_input(cfg, "alphas", a.alphas);
    set(&mut cfg.pipeline.cv.seed, a.seed);
    set(&mut cfg.pipeline.cv.folds, a.folds);
    set(&mut cfg.pipeline.cv.path_len, a.n_taus);
    set(&mut cfg.pipeline.cv.path_eps, a.eps);
    set(&mut cfg.moments.min_months, a.min_months);
    set(&mut cfg.style, a.style);
    set(&mut cfg.output, a.out);
}

/// Sizes the global thread pool from the environment, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Parses arguments, runs the stage and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let write_config = cli.write_config.clone();
    let outcome = configure_threads().and_then(|()| cli.resolve()).and_then(|cfg| match &write_config {
        Some(p) => fs::write(p, cfg.to_json() + "\n")
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            .map(|()| None),
        None => run(&cfg).map(Some),
    });
    match outcome {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
