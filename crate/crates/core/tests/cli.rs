use std::path::Path;
use std::process::Command;

use xanes_deconv::emc::read_samples_csv;
use xanes_deconv::evidence::read_evidence_csv;
use xanes_deconv::io::columns::{peaks_from_columns, unflatten_params};
use xanes_deconv::io::commands::{read_fit_outputs, read_numeric_csv, DiagSummary};
use xanes_deconv::io::{parse_dataset, read_json};
use xanes_deconv::{default_truth, synthesize, PeakConfig, Regime, SelectionResult, TruthSpec};

const BIN: &str = env!("CARGO_BIN_EXE_xanes-deconv");

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path) -> std::path::PathBuf {
    ok(&["generate", "--out-dir", s(dir), "--seed", "4"]);
    dir.join("dataset.csv")
}

const SMALL: [&str; 8] = ["--ladder", "5,2.0,3000", "--mcs", "16", "--burnin", "6", "--quiet", "--seed"];

#[test]
fn generate_writes_the_synthesized_dataset_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let expected = synthesize(&default_truth().with_seed(4));
    assert_eq!(parse_dataset(&data).unwrap(), expected);
    let truth: TruthSpec = read_json(&dir.path().join("truth.json")).unwrap();
    assert_eq!(truth, default_truth().with_seed(4));
}

#[test]
fn fit_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let mut files = Vec::new();
    for (i, threads) in ["1", "1", "2", "8"].iter().enumerate() {
        let out = dir.path().join(format!("fit{i}"));
        let mut args = vec!["fit", "--data", s(&data), "--out-dir", s(&out), "--k1", "2", "--k2", "1"];
        args.extend(SMALL);
        args.extend(["11", "--threads", threads]);
        ok(&args);
        files.push(
            ["samples.csv", "map.json", "fit.json", "curve.csv"]
                .map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert!(files.iter().all(|f| f == &files[0]));
}

#[test]
fn fit_outputs_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let out = dir.path().join("fit");
    let mut args = vec!["fit", "--data", s(&data), "--out-dir", s(&out), "--model", "conventional", "--k", "3"];
    args.extend(SMALL);
    args.push("2");
    ok(&args);

    let (summary, map) = read_fit_outputs(&out).unwrap();
    assert_eq!(summary.peaks, PeakConfig::single(3));
    assert_eq!(summary.retained, 10);
    assert_eq!(summary.betas.len(), 5);
    assert_eq!(map.rung, summary.best_rung);

    let (columns, rows) = read_samples_csv(std::fs::File::open(out.join("samples.csv")).unwrap()).unwrap();
    let (regime, peaks) = peaks_from_columns(&columns).unwrap();
    assert_eq!((regime, peaks), (Regime::Conventional, PeakConfig::single(3)));
    assert_eq!(rows.len(), 10 * 5);
    let p = unflatten_params(regime, peaks, &rows[0].values).unwrap();
    assert_eq!(p.config(), PeakConfig::single(3));

    let (header, curve) = read_numeric_csv(std::fs::File::open(out.join("curve.csv")).unwrap()).unwrap();
    assert_eq!(header.len(), 5 + 3 + 1);
    assert_eq!(curve.len(), 703);

    ok(&["diag", "--samples", s(&out.join("samples.csv")), "--out-dir", s(&out), "--replica", "4"]);
    let d: DiagSummary = read_json(&out.join("diag.json")).unwrap();
    assert_eq!((d.replica, d.samples), (4, 10));
    let (_, trace) = read_numeric_csv(std::fs::File::open(out.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.len(), 10);
    let (_, acf) = read_numeric_csv(std::fs::File::open(out.join("autocorrelation.csv")).unwrap()).unwrap();
    assert_eq!(acf[0], vec![0.0, 1.0]);
}

#[test]
fn select_on_a_single_model_grid_reports_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let out = dir.path().join("sel");
    let mut args = vec!["select", "--data", s(&data), "--out-dir", s(&out), "--k1", "1", "--k2", "2"];
    args.extend(SMALL);
    args.push("3");
    ok(&args);
    let res: SelectionResult = read_json(&out.join("selection.json")).unwrap();
    assert_eq!(res.chosen, PeakConfig::new(1, 2));
    assert_eq!(res.posterior, vec![(PeakConfig::new(1, 2), 1.0)]);

    let table = read_evidence_csv(std::fs::File::open(out.join("evidence.csv")).unwrap(), 703).unwrap();
    assert_eq!(table.models.len(), 1);
    assert_eq!(table.models[0].free_energy[res.rung - 1], res.free_energy);
    for f in ["posterior.csv", "posterior_b.csv", "marginals.csv"] {
        let (_, rows) = read_numeric_csv(std::fs::File::open(out.join(f)).unwrap()).unwrap();
        assert!(!rows.is_empty(), "{f}");
    }
}

#[test]
fn select_with_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
seed = 5
[model]
regime = "proposed"
grid = [{ k1 = 1, k2 = 1 }, { k1 = 2, k2 = 1 }]
[ladder]
replicas = 5
ratio = 2.0
anchor = 3000.0
[sampler]
total_mcs = 12
burn_in = 4
sweeps_per_mcs = 10
[output]
quiet = true
[paths]
data = "dataset.csv"
out_dir = "sel"
"#,
    )
    .unwrap();
    ok(&["select", "--config", s(&dir.path().join("run.toml"))]);
    let res: SelectionResult = read_json(&dir.path().join("sel/selection.json")).unwrap();
    assert_eq!(res.posterior.len(), 2);
    let total: f64 = res.posterior.iter().map(|p| p.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let err = dir.path().join("err.json");
    let out = run(&["fit", "--data", "/nonexistent.csv", "--k", "2", "--error-json", s(&err)]);
    assert!(!out.status.success());
    let report: serde_json::Value = read_json(&err).unwrap();
    assert_eq!(report["kind"], "config");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "energy,intensity\nabc,1.0\n").unwrap();
    let out = run(&["fit", "--data", s(&bad), "--k", "2", "--mcs", "4", "--burnin", "2", "--error-json", s(&err)]);
    assert!(!out.status.success());
    let report: serde_json::Value = read_json(&err).unwrap();
    assert_eq!(report["kind"], "parse");
    assert!(report["message"].as_str().unwrap().contains("line 2"));

    let out = run(&["fit", "--ladder", "3,1.2", "--k", "2"]);
    assert!(!out.status.success());
}
