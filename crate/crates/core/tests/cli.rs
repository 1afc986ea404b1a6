mod common;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chrono::NaiveDate;
use factorsieve::cli::{write_fixture, Manifest, RunConfig, RunStatus, Scenario, Stage};
use factorsieve::pipeline::Significance;
use factorsieve::report::{render_tables, Style};
use factorsieve::rng::SeededRng;
use factorsieve::synth::generate;
use sha2::{Digest, Sha256};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factorsieve")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Raw daily panel: 30 listed common stocks over about fourteen months.
fn raw_panel(seed: u64) -> String {
    let mut rng = SeededRng::new(seed);
    let days = common::business_days(NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(), 300);
    let mut out = String::from("date,asset,open,high,low,close,vwap,volume,market_cap,exchange,share_class\n");
    for a in 0..30 {
        let mut p = 20.0 + 30.0 * rng.uniform();
        let shares = 1e6 * (1.0 + 9.0 * rng.uniform());
        for d in &days {
            let o = p;
            p *= 1.0 + 0.015 * rng.standard_normal();
            let (hi, lo) = (o.max(p) * 1.005, o.min(p) * 0.995);
            writeln!(out, "{d},S{a:02},{o},{hi},{lo},{p},{},{},{},NYSE,COMMON", 0.5 * (hi + lo), 1e5 * (1.0 + rng.uniform()), p * shares)
                .unwrap();
        }
    }
    out
}

fn assert_manifest_hashes(m: &Manifest) {
    assert!(!m.outputs.is_empty());
    for d in m.outputs.iter().chain(&m.inputs) {
        let data = fs::read(&d.path).unwrap();
        assert_eq!(d.bytes, data.len() as u64, "{}", d.path.display());
        assert_eq!(d.sha256, hex::encode(Sha256::digest(&data)), "{}", d.path.display());
    }
}

#[test]
fn ingest_signals_portfolios_chain() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    fs::write(&raw, raw_panel(1)).unwrap();
    let bundle = dir.path().join("bundle.txt");
    fs::write(&bundle, "# two short-horizon signals\nmomentum = ts_mean(returns, 20)\nreversal = -delta(close, 5)\nbroken = ts_mean(close\n").unwrap();

    let ingested = dir.path().join("ingested");
    let out = bin(&["ingest", "--input", s(&raw), "--out", s(&ingested)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&ingested.join("manifest.json"));
    assert_eq!((m.command, m.status), (Stage::Ingest, RunStatus::Ok));
    assert_manifest_hashes(&m);

    let signals = dir.path().join("signals");
    let out = bin(&["signals", "--panel", s(&ingested), "--bundle", s(&bundle), "--window", "30", "--out", s(&signals)]);
    assert_eq!(out.status.code(), Some(1), "an invalid bundle line fails the stage");
    assert_eq!(manifest(&signals.join("manifest.json")).status, RunStatus::Failed);

    fs::write(&bundle, "momentum = ts_mean(returns, 20)\nreversal = -delta(close, 5)\n").unwrap();
    let out = bin(&["signals", "--panel", s(&ingested), "--bundle", s(&bundle), "--window", "30", "--out", s(&signals)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(signals.join("momentum.csv").is_file() && signals.join("reversal.csv").is_file());
    assert_manifest_hashes(&manifest(&signals.join("manifest.json")));
    let sparse = dir.path().join("sparse");
    let out = bin(&["signals", "--panel", s(&ingested), "--bundle", s(&bundle), "--window", "30", "--min-coverage", "0.999", "--out", s(&sparse)]);
    assert_eq!(out.status.code(), Some(1), "every signal misses its warm-up dates");
    assert!(!sparse.join("momentum.csv").exists());

    let ports = dir.path().join("portfolios");
    let out = bin(&["portfolios", "--signals", s(&signals), "--hml-bins", "5", "--out", s(&ports)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["momentum", "reversal"] {
        let factor = fs::read_to_string(ports.join("factors").join(format!("{name}.csv"))).unwrap();
        assert!(factor.lines().count() >= 12, "{name} has too few months");
        assert!(ports.join("test_assets").join(format!("{name}.csv")).is_file());
    }
    assert_manifest_hashes(&manifest(&ports.join("manifest.json")));
}

#[test]
fn estimator_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    write_fixture(&fixture, &generate(&Scenario::PlantedAlpha.dgp(5)).unwrap()).unwrap();
    let inputs = |f: &str| fixture.join(f).to_str().unwrap().to_string();
    let (assets, controls, alphas) = (inputs("assets"), inputs("controls"), inputs("alphas"));
    let mut tables = Vec::new();
    for cmd in ["ds", "pca"] {
        let report = dir.path().join(format!("{cmd}.tsv"));
        let out = bin(&[cmd, "--assets", &assets, "--controls", &controls, "--alphas", &alphas, "--seed", "3", "--out", s(&report)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(fs::read_to_string(&report).unwrap().starts_with(factorsieve::report::TSV_HEADER));
        let m = manifest(&dir.path().join(format!("{cmd}.manifest.json")));
        assert_eq!(m.seed, 3);
        assert_manifest_hashes(&m);
        tables.push(dir.path().join(format!("{cmd}.table.json")));
    }
    assert!(dir.path().join("ds.selection.json").is_file());

    let md = dir.path().join("premia.md");
    let out = bin(&["report", "--input", s(&tables[0]), "--input", s(&tables[1]), "--style", "markdown", "--out", s(&md)]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&md).unwrap().starts_with("| factor | DS | PCA |"));

    let out = bin(&["report", "--input", s(&tables[0])]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(factorsieve::report::TSV_HEADER));
}

#[test]
fn exit_codes_separate_usage_from_stage_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["ds", "--bogus"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(bin(&["ingest", "--input", s(&missing), "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(bin(&["ds", "--assets", "a", "--controls", "c", "--alphas", "g", "--folds", "1", "--out", "x.tsv"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out_file = dir.path().join("rendered.md");
    let out = bin(&["report", "--input", s(&bad), "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&dir.path().join("rendered.manifest.json"));
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("bad.json"));

    let threads = Command::new(env!("CARGO_BIN_EXE_factorsieve"))
        .env(factorsieve::cli::THREADS_ENV, "zero")
        .args(["report", "--input", s(&bad)])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn written_config_reproduces_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    let out = bin(&[
        "synth", "--scenario", "confounded", "--runs", "3", "--seed", "9", "--estimators", "ds,ss", "--out", "mc", "--write-config",
        s(&cfg_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.command, Stage::Synth);
    assert_eq!((cfg.runs, cfg.synth_seed, cfg.scenario), (3, Some(9), Some(Scenario::Confounded)));
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);

    let again = dir.path().join("again.json");
    assert!(bin(&["synth", "--config", s(&cfg_path), "--write-config", s(&again)]).status.success());
    assert_eq!(RunConfig::load(&again).unwrap(), cfg);
}

#[test]
fn synth_command_writes_fixtures_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("mc");
    let out = bin(&["synth", "--scenario", "planted_alpha", "--runs", "2", "--seed", "4", "--estimators", "ds", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(out_dir.join("runs.jsonl")).unwrap().lines().count(), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["recovery_rate"].as_f64().is_some());
    assert!(out_dir.join("fixtures").join("seed_4").join("truth.json").is_file());
    assert_manifest_hashes(&manifest(&out_dir.join("manifest.json")));
}

#[test]
fn rendered_tables_match_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden");
    let tables = common::golden_tables();
    assert_eq!(render_tables(&tables[..1], Style::Tsv), fs::read_to_string(golden.join("premium_table.tsv")).unwrap());
    assert_eq!(render_tables(&tables, Style::Markdown), fs::read_to_string(golden.join("premium_table.md")).unwrap());
}

#[test]
fn two_is_significant_at_five_percent_only() {
    let sig = Significance::default();
    assert_eq!(sig.stars(Some(2.00)), "*");
    assert_eq!(sig.stars(Some(-2.00)), "*");
    assert_eq!(sig.stars(Some(1.959_999)), "");
    assert_eq!(sig.stars(Some(2.576)), "**");
    assert_eq!(sig.stars(None), "");
}
