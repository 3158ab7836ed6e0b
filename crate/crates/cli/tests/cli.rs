use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use colagnn::checkpoint::Checkpoint;
use colagnn::data::{load_series, prepare, window_at, SplitSpec};
use colagnn::eval::{evaluate, predict_set};
use colagnn::experiment::AnyModel;
use colagnn::Execution;
use serde_json::Value;
use tempfile::TempDir;

const WINDOW: &str = "8";

fn colagnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colagnn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = colagnn(args);
    assert!(
        out.status.success(),
        "colagnn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    colagnn(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small generated dataset in a fresh temp dir.
fn toy() -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["generate", "--out", s(&data), "--locations", "5", "--weeks", "120", "--seed", "3"]);
    (dir, data.join("series.csv"), data.join("adjacency.csv"))
}

/// Fast training flags on top of the data paths.
fn quick<'a>(series: &'a Path, adj: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "--data",
        s(series),
        "--adj",
        s(adj),
        "--out",
        s(out),
        "--window",
        WINDOW,
        "--set",
        "train.max_epochs=3",
        "--set",
        "train.patience=2",
    ];
    args.extend_from_slice(extra);
    args
}

fn train(series: &Path, adj: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train"];
    args.extend(quick(series, adj, out, extra));
    ok(&args);
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(p)).unwrap()
}

fn losses(log: &str) -> Vec<String> {
    log.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

fn csv_matrix(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').skip(1).map(String::from).collect();
    let rows = lines.map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn train_writes_every_artifact() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &[]);
    for f in ["checkpoint.json", "train_log.csv", "resolved_config.toml", "metrics.json", "predictions.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let log = read(out.join("train_log.csv"));
    assert_eq!(log.lines().next().unwrap(), "epoch,train_l1,val_l1,seconds");
    for line in log.lines().skip(1) {
        let val: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(val.is_finite());
    }
    let snapshot = read(out.join("resolved_config.toml"));
    assert!(snapshot.contains("# data.series sha256 = "));
    assert!(snapshot.contains("# seeds = [0]"));
    let ck = Checkpoint::load(out.join("checkpoint.json")).unwrap();
    assert_eq!(ck.horizon, 2);
    assert_eq!(ck.window, 8);
}

#[test]
fn same_seed_reproduces_snapshot_and_losses() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &["--seed", "4"]);
    let first = (read(out.join("resolved_config.toml")), losses(&read(out.join("train_log.csv"))));
    let ck1 = read(out.join("checkpoint.json"));
    train(&series, &adj, &out, &["--seed", "4"]);
    let second = (read(out.join("resolved_config.toml")), losses(&read(out.join("train_log.csv"))));
    assert_eq!(first, second);
    assert_eq!(ck1, read(out.join("checkpoint.json")));
}

#[test]
fn each_horizon_gets_its_own_model() {
    let (dir, series, adj) = toy();
    let (a, b) = (dir.path().join("h2"), dir.path().join("h15"));
    train(&series, &adj, &a, &["--horizon", "2"]);
    train(&series, &adj, &b, &["--horizon", "15"]);
    let (ca, cb) = (
        Checkpoint::load(a.join("checkpoint.json")).unwrap(),
        Checkpoint::load(b.join("checkpoint.json")).unwrap(),
    );
    assert_eq!((ca.horizon, cb.horizon), (2, 15));
    assert_ne!(ca.model, cb.model);
}

#[test]
fn exit_codes_separate_config_data_and_numerical_errors() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    let run = |extra: &[&str]| {
        let mut args = vec!["train"];
        args.extend(quick(&series, &adj, &out, extra));
        code(&args)
    };
    assert_eq!(run(&["--set", "train.lr=0.1"]), 2);
    assert_eq!(run(&["--set", "optim.learning_rate=0.1"]), 2);
    assert_eq!(run(&["--method", "lstm"]), 2);
    assert_eq!(run(&["--set", "train.learning_rate=-1"]), 2);
    assert_eq!(code(&["train", "--out", s(&out)]), 2);

    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&["train", "--data", s(&missing), "--out", s(&out)]), 3);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "week,a,b\n1,2,x\n").unwrap();
    let out2 = colagnn(&["train", "--data", s(&bad), "--out", s(&out)]);
    assert_eq!(out2.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out2.stderr).contains("bad.csv"));

    assert_eq!(run(&["--method", "rnn", "--set", "train.learning_rate=1e308"]), 4);
}

#[test]
fn unknown_sweep_parameter_is_a_usage_error() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("sweep");
    let mut args = vec!["sweep", "--param", "hidden"];
    args.extend(quick(&series, &adj, &out, &[]));
    assert_eq!(code(&args), 2);
    let mut args = vec!["sweep", "--param", "window", "--values", "60"];
    args.extend(quick(&series, &adj, &out, &[]));
    assert_eq!(code(&args), 2);
}

#[test]
fn cli_metrics_equal_library_metrics() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &[]);
    let ck = Checkpoint::load(out.join("checkpoint.json")).unwrap();
    let ds = load_series(&series).unwrap();
    let data = prepare(&ds, &SplitSpec::new(8, 2)).unwrap();
    assert_eq!(data.normalizer, ck.normalizer);
    let m = evaluate(&ck.model, &data.test, &data.normalizer, Execution::Sequential).unwrap();
    let reported = json(out.join("metrics.json"));
    assert_eq!(reported["metrics"]["rmse"].as_f64().unwrap(), m.rmse);
    assert_eq!(reported["metrics"]["mae"].as_f64().unwrap(), m.mae);
    assert_eq!(reported["metrics"]["pcc"].as_f64(), m.pcc);
}

#[test]
fn predict_matches_the_evaluation_path() {
    let (dir, series, adj) = toy();
    let ds = load_series(&series).unwrap();
    let data = prepare(&ds, &SplitSpec::new(8, 2)).unwrap();
    for method in ["cola-gnn", "arma"] {
        let out = dir.path().join(method);
        train(&series, &adj, &out, &["--method", method]);
        let ckpt = out.join("checkpoint.json");
        let preds = dir.path().join(format!("{method}.csv"));
        ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&series), "--horizon", "2", "--out", s(&preds)]);

        let ck = Checkpoint::load(&ckpt).unwrap();
        let rows = predict_set(&ck.model, &data.test, &data.normalizer, Execution::Sequential).unwrap();
        let text = read(&preds);
        let mut table = std::collections::HashMap::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            table.insert((f[2].to_string(), f[3].to_string()), (f[4].to_string(), f[5].parse::<f64>().unwrap()));
        }
        // one row per window start and location
        assert_eq!(text.lines().count() - 1, (120 - 8 + 1) * 5);
        for r in &rows {
            let key = (ds.weeks()[r.week].clone(), ds.locations()[r.location].clone());
            let (truth, pred) = &table[&key];
            assert_eq!(*pred, r.y_pred, "{method}");
            assert_eq!(truth.parse::<f64>().unwrap(), ds.value(r.location, r.week));
        }
    }
}

#[test]
fn predict_on_exactly_one_window() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &[]);
    let short = dir.path().join("short.csv");
    let text = read(&series);
    let head: Vec<&str> = text.lines().take(1 + 8).collect();
    fs::write(&short, head.join("\n") + "\n").unwrap();
    let ckpt = out.join("checkpoint.json");
    let got = ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&short)]);
    let stdout = String::from_utf8(got.stdout).unwrap();
    let origins: std::collections::BTreeSet<&str> = stdout.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(origins.len(), 1);
    assert_eq!(stdout.lines().count() - 1, 5);
    // the target lies past the series, so there is no ground truth
    assert!(stdout.lines().skip(1).all(|l| l.split(',').nth(4) == Some("")));

    assert_eq!(code(&["predict", "--checkpoint", s(&ckpt), "--data", s(&short), "--horizon", "3"]), 2);
    let shorter = dir.path().join("shorter.csv");
    fs::write(&shorter, head[..8].join("\n") + "\n").unwrap();
    assert_eq!(code(&["predict", "--checkpoint", s(&ckpt), "--data", s(&shorter)]), 3);
}

#[test]
fn attention_export_matches_forward_bit_for_bit() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &[]);
    let ckpt = out.join("checkpoint.json");
    let att = dir.path().join("att");
    ok(&["export-attention", "--checkpoint", s(&ckpt), "--data", s(&series), "--out", s(&att)]);

    let ck = Checkpoint::load(&ckpt).unwrap();
    let AnyModel::ColaGnn(model) = &ck.model else { panic!("expected cola-gnn") };
    let ds = ck.normalizer.apply(&load_series(&series).unwrap()).unwrap();
    let expected = model.attention(&window_at(&ds, 120 - 8, 8)).unwrap();
    for (file, m) in [
        ("attention_raw.csv", &expected.raw),
        ("attention_gate.csv", &expected.gate),
        ("attention_fused.csv", &expected.fused),
    ] {
        let (names, rows) = csv_matrix(&read(att.join(file)));
        assert_eq!(names, ck.locations);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.as_slice(), m.row_slice(i), "{file} row {i}");
        }
    }
}

#[test]
fn identity_adjacency_exports_identity() {
    let (dir, series, _) = toy();
    let eye = dir.path().join("eye.csv");
    let names: Vec<String> = read(&series).lines().next().unwrap().split(',').skip(1).map(String::from).collect();
    let mut text = format!("location,{}\n", names.join(","));
    for (i, n) in names.iter().enumerate() {
        let row: Vec<&str> = (0..names.len()).map(|j| if i == j { "1" } else { "0" }).collect();
        text.push_str(&format!("{n},{}\n", row.join(",")));
    }
    fs::write(&eye, text).unwrap();
    let out = dir.path().join("run");
    train(&series, &eye, &out, &[]);
    let att = dir.path().join("att");
    ok(&["export-attention", "--checkpoint", s(&out.join("checkpoint.json")), "--data", s(&series), "--out", s(&att)]);
    let (_, rows) = csv_matrix(&read(att.join("adjacency_normalized.csv")));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn no_loc_checkpoints_have_no_attention_to_export() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("run");
    train(&series, &adj, &out, &["--ablation", "no-loc"]);
    let got = colagnn(&[
        "export-attention",
        "--checkpoint",
        s(&out.join("checkpoint.json")),
        "--data",
        s(&series),
        "--out",
        s(&dir.path().join("att")),
    ]);
    assert_ne!(got.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&got.stderr).contains("attention"));
    assert!(!dir.path().join("att").exists());

    let gar = dir.path().join("gar");
    train(&series, &adj, &gar, &["--method", "gar"]);
    let gar_ckpt = gar.join("checkpoint.json");
    assert_eq!(code(&["export-attention", "--checkpoint", s(&gar_ckpt), "--data", s(&series), "--out", s(&gar)]), 2);
}

#[test]
fn benchmark_with_one_trial_has_zero_sd() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("bench");
    let mut args = vec!["benchmark", "--methods", "gar,ar", "--horizons", "2,3", "--trials", "1"];
    args.extend(quick(&series, &adj, &out, &[]));
    ok(&args);
    let report = json(out.join("metrics.json"));
    for method in ["gar", "ar"] {
        for h in ["2", "3"] {
            let cell = &report[method][h];
            assert_eq!(cell["rmse"]["sd"].as_f64(), Some(0.0), "{method} h={h}");
            assert_eq!(cell["rmse"]["per_seed"].as_array().unwrap().len(), 1);
        }
    }
    assert!(report.get("cola-gnn").is_none());
    assert!(read(out.join("tables.txt")).starts_with("RMSE"));
}

#[test]
fn benchmark_repeats_closed_form_results_across_seeds() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("bench");
    let mut args = vec!["benchmark", "--methods", "var", "--horizons", "2", "--trials", "3"];
    args.extend(quick(&series, &adj, &out, &[]));
    ok(&args);
    let report = json(out.join("metrics.json"));
    let per_seed = report["var"]["2"]["rmse"]["per_seed"].as_array().unwrap().clone();
    assert_eq!(per_seed.len(), 3);
    assert!(per_seed.iter().all(|v| *v == per_seed[0]));
}

#[test]
fn single_value_sweep_has_one_row() {
    let (dir, series, adj) = toy();
    let out = dir.path().join("sweep");
    let mut args = vec!["sweep", "--param", "graph-dim", "--values", "3", "--horizons", "2", "--trials", "1"];
    args.extend(quick(&series, &adj, &out, &[]));
    ok(&args);
    let report = json(out.join("sweep.json"));
    assert_eq!(report["param"], "graph-dim");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["value"], 3);
    assert!(rows[0]["metrics"]["2"]["rmse"]["mean"].as_f64().unwrap().is_finite());
}

#[test]
fn dump_is_a_canonical_round_trip() {
    let (dir, series, adj) = toy();
    let once = ok(&["dump", "series", s(&series)]).stdout;
    let copy = dir.path().join("copy.csv");
    fs::write(&copy, &once).unwrap();
    assert_eq!(ok(&["dump", "series", s(&copy)]).stdout, once);
    assert_eq!(once, fs::read(&series).unwrap());

    let a = ok(&["dump", "adjacency", s(&adj), "--data", s(&series)]).stdout;
    let copy = dir.path().join("adj.csv");
    fs::write(&copy, &a).unwrap();
    assert_eq!(ok(&["dump", "adjacency", s(&copy), "--data", s(&series)]).stdout, a);
}

#[test]
fn bundled_synthetic_data_matches_generate_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synthetic");
    ok(&["generate", "--out", s(&out)]);
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    for file in ["series.csv", "adjacency.csv"] {
        assert_eq!(fs::read(out.join(file)).unwrap(), fs::read(bundled.join(file)).unwrap(), "{file}");
    }
}
