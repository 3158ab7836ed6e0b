use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use colagnn::checkpoint::Checkpoint;
use colagnn::data::synthetic::{generate as synthesize, SyntheticConfig};
use colagnn::data::{
    load_adjacency, load_series, prepare, window_at, write_adjacency, write_series, AdjacencyMatrix, EpiDataset,
};
use colagnn::eval::{metrics_of, predict_set, write_predictions, HorizonReport, Metrics, MetricsReport};
use colagnn::experiment::{fit_method, init_model, run_cell, AnyModel, Method, Settings};
use colagnn::model::{History, Predictor};
use colagnn::train::{Quiet, TrainReport};
use colagnn::Execution;
use serde::Serialize;

use crate::config::{split_list, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{create_dir, write_json, write_matrix, write_text, write_with, RunLog};

struct Inputs {
    ds: EpiDataset,
    adjacency: Option<AdjacencyMatrix>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let ds = load_series(cfg.series_path()?)?;
    let adjacency = match &cfg.data.adjacency {
        Some(p) => Some(load_adjacency(p, ds.locations())?),
        None => None,
    };
    Ok(Inputs { ds, adjacency })
}

fn start_run(cfg: &RunConfig, command: &str, seeds: &[u64]) -> Result<(Inputs, PathBuf)> {
    let inputs = load_inputs(cfg)?;
    let dir = cfg.experiment.out.clone();
    create_dir(&dir)?;
    write_text(&dir.join("resolved_config.toml"), &cfg.snapshot(command, seeds)?)?;
    Ok((inputs, dir))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    method: Method,
    horizon: usize,
    seed: u64,
    parameters: usize,
    metrics: &'a Metrics,
    report: &'a Option<TrainReport>,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let e = &cfg.experiment;
    let seed = cfg.train.seed;
    let (inputs, dir) = start_run(cfg, "train", &[seed])?;
    let settings = cfg.settings();
    let data = prepare(&inputs.ds, &settings.split_spec(e.horizon))?;
    let adjacency = inputs.adjacency.as_ref();
    let locations = inputs.ds.locations().to_vec();

    let (model, report) = if e.method.is_trained() {
        let template = init_model(e.method, locations.len(), adjacency, &settings, seed)?;
        let mut log = RunLog::new(&dir, e.horizon, locations.clone(), data.normalizer.clone(), template)?;
        let fitted = fit_method(e.method, &data, adjacency, &settings, seed, &mut log)?;
        log.save(fitted.0.clone())?;
        fitted
    } else {
        let fitted = fit_method(e.method, &data, adjacency, &settings, seed, &mut Quiet)?;
        Checkpoint::new(e.horizon, locations, data.normalizer.clone(), fitted.0.clone())?.save(dir.join("checkpoint.json"))?;
        fitted
    };

    let rows = predict_set(&model, &data.test, &data.normalizer, settings.exec)?;
    let metrics = metrics_of(&rows)?;
    write_with(&dir.join("predictions.csv"), |out| write_predictions(&rows, &inputs.ds, out))?;
    write_json(
        &dir.join("metrics.json"),
        &RunSummary {
            method: e.method,
            horizon: e.horizon,
            seed,
            parameters: model.parameter_count(),
            metrics: &metrics,
            report: &report,
        },
    )?;
    let pcc = metrics.pcc.map_or("n/a".to_string(), |p| format!("{p:.4}"));
    let mut line = format!(
        "{} h={} seed={}: RMSE {:.3}  MAE {:.3}  PCC {pcc}",
        e.method, e.horizon, seed, metrics.rmse, metrics.mae
    );
    if let Some(r) = &report {
        write!(line, "  (best epoch {} of {}, val L1 {:.5})", r.best_epoch, r.stopped_epoch, r.best_val_l1).unwrap();
    }
    println!("{line}");
    Ok(())
}

/// One (method, horizon) group of a grid, under its own settings.
struct Job {
    tag: usize,
    method: Method,
    horizon: usize,
    settings: Settings,
}

#[derive(Serialize)]
struct Failure {
    tag: usize,
    method: Method,
    horizon: usize,
    seed: u64,
    exit_code: u8,
    error: String,
}

/// Runs every job over `seeds`. Closed-form methods ignore the seed, so
/// they are fitted once and their metrics repeated for each seed.
fn run_grid(inputs: &Inputs, jobs: &[Job], seeds: &[u64]) -> (Vec<Option<HorizonReport>>, Vec<Failure>) {
    let mut tasks = Vec::new();
    for (j, job) in jobs.iter().enumerate() {
        let used = if job.method.is_trained() { seeds } else { &seeds[..1] };
        tasks.extend(used.iter().map(|&s| (j, s)));
    }
    let outcomes = Execution::default().map(&tasks, |&(j, seed)| {
        let job = &jobs[j];
        run_cell(&inputs.ds, inputs.adjacency.as_ref(), job.method, job.horizon, seed, &job.settings, &mut Quiet)
            .map(|c| c.metrics)
    });

    let mut per_job: Vec<Vec<Metrics>> = vec![Vec::new(); jobs.len()];
    let mut failures = Vec::new();
    for (&(j, seed), outcome) in tasks.iter().zip(outcomes) {
        let job = &jobs[j];
        match outcome {
            Ok(m) if job.method.is_trained() => per_job[j].push(m),
            Ok(m) => per_job[j].extend(std::iter::repeat_n(m, seeds.len())),
            Err(e) => {
                eprintln!("warning: {} h={} seed={seed} failed: {e}", job.method, job.horizon);
                let error = e.to_string();
                failures.push(Failure {
                    tag: job.tag,
                    method: job.method,
                    horizon: job.horizon,
                    seed,
                    exit_code: CliError::from(e).exit_code(),
                    error,
                });
            }
        }
    }
    let reports = per_job.iter().map(|m| (!m.is_empty()).then(|| HorizonReport::from_trials(m))).collect();
    (reports, failures)
}

/// Fails the command only when no cell produced a result.
fn check_grid(reports: &[Option<HorizonReport>], failures: &[Failure], dir: &Path) -> Result<()> {
    if !failures.is_empty() {
        write_json(&dir.join("failures.json"), &failures)?;
    }
    if reports.iter().all(Option::is_none) {
        let first = failures.first().map_or(String::new(), |f| format!(" (first: {} h={})", f.method, f.horizon));
        return Err(CliError::Config(format!("every run failed{first}; see failures.json")));
    }
    Ok(())
}

fn cell(report: Option<&HorizonReport>, pick: fn(&HorizonReport) -> &colagnn::eval::Summary, digits: usize) -> String {
    match report.map(pick) {
        Some(s) => match (s.mean, s.sd) {
            (Some(m), Some(sd)) => format!("{m:.digits$}±{sd:.digits$}"),
            _ => "n/a".into(),
        },
        None => "failed".into(),
    }
}

fn table(
    title: &str,
    horizons: &[usize],
    rows: &[(String, &MetricsReport)],
    pick: fn(&HorizonReport) -> &colagnn::eval::Summary,
    digits: usize,
) -> String {
    let mut out = format!("{title}\n{:<12}", "");
    for h in horizons {
        write!(out, "{:>18}", format!("h={h}")).unwrap();
    }
    out.push('\n');
    for (label, report) in rows {
        write!(out, "{label:<12}").unwrap();
        for h in horizons {
            write!(out, "{:>18}", cell(report.get(h), pick, digits)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn tables(horizons: &[usize], rows: &[(String, &MetricsReport)]) -> String {
    let mut text = table("RMSE", horizons, rows, |r| &r.rmse, 1);
    text.push('\n');
    text.push_str(&table("PCC", horizons, rows, |r| &r.pcc, 3));
    text
}

pub fn benchmark(cfg: &RunConfig) -> Result<()> {
    let e = &cfg.experiment;
    let seeds = cfg.train.seeds();
    let (inputs, dir) = start_run(cfg, "benchmark", &seeds)?;
    let settings = cfg.settings();
    let jobs: Vec<Job> = e
        .methods
        .iter()
        .flat_map(|&method| {
            e.horizons.iter().map(move |&horizon| (method, horizon))
        })
        .map(|(method, horizon)| Job {
            tag: 0,
            method,
            horizon,
            settings: settings.clone(),
        })
        .collect();
    let (reports, failures) = run_grid(&inputs, &jobs, &seeds);
    check_grid(&reports, &failures, &dir)?;

    let mut by_method: BTreeMap<Method, MetricsReport> = BTreeMap::new();
    for (job, report) in jobs.iter().zip(reports) {
        let entry = by_method.entry(job.method).or_default();
        if let Some(r) = report {
            entry.insert(job.horizon, r);
        }
    }
    write_json(&dir.join("metrics.json"), &by_method)?;
    let rows: Vec<(String, &MetricsReport)> = by_method.iter().map(|(m, r)| (m.to_string(), r)).collect();
    let text = tables(&e.horizons, &rows);
    write_text(&dir.join("tables.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    value: usize,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct SweepReport {
    param: String,
    method: Method,
    rows: Vec<SweepRow>,
}

pub fn sweep(cfg: &RunConfig, param: &str, values: Option<&str>) -> Result<()> {
    let (defaults, range): (Vec<usize>, std::ops::RangeInclusive<usize>) = match param {
        "window" => ((10..=50).step_by(5).collect(), 10..=50),
        "graph-dim" => ((1..=15).collect(), 1..=15),
        other => {
            return Err(CliError::Config(format!("cannot sweep {other:?}; expected window or graph-dim")));
        }
    };
    let values = match values {
        Some(v) => split_list(v)
            .iter()
            .map(|x| x.parse::<usize>().map_err(|_| CliError::Config(format!("--values: {x:?} is not a count"))))
            .collect::<Result<Vec<_>>>()?,
        None => defaults,
    };
    if let Some(bad) = values.iter().find(|v| !range.contains(v)) {
        return Err(CliError::Config(format!(
            "{param} value {bad} is outside the sweep range {}..={}",
            range.start(),
            range.end()
        )));
    }
    if values.is_empty() {
        return Err(CliError::Config("--values is empty".into()));
    }

    let e = &cfg.experiment;
    let seeds = cfg.train.seeds();
    let (inputs, dir) = start_run(cfg, &format!("sweep {param}"), &seeds)?;
    let mut jobs = Vec::new();
    for (tag, &v) in values.iter().enumerate() {
        let mut settings = cfg.settings();
        if param == "window" {
            settings.window = v;
        } else {
            let last = settings.model.graph_dims.last_mut().ok_or_else(|| CliError::Config("model.graph_dims is empty".into()))?;
            *last = v;
        }
        jobs.extend(e.horizons.iter().map(|&horizon| Job {
            tag,
            method: e.method,
            horizon,
            settings: settings.clone(),
        }));
    }
    let (reports, failures) = run_grid(&inputs, &jobs, &seeds);
    check_grid(&reports, &failures, &dir)?;

    let mut rows: Vec<SweepRow> = values.iter().map(|&value| SweepRow { value, metrics: MetricsReport::new() }).collect();
    for (job, report) in jobs.iter().zip(reports) {
        if let Some(r) = report {
            rows[job.tag].metrics.insert(job.horizon, r);
        }
    }
    let labelled: Vec<(String, &MetricsReport)> = rows.iter().map(|r| (format!("{param}={}", r.value), &r.metrics)).collect();
    let text = tables(&e.horizons, &labelled);
    write_json(
        &dir.join("sweep.json"),
        &SweepReport {
            param: param.to_string(),
            method: e.method,
            rows,
        },
    )?;
    write_text(&dir.join("tables.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// Reorders `ds` to the checkpoint's location order.
fn align(ds: &EpiDataset, names: &[String]) -> Result<EpiDataset> {
    if ds.num_locations() != names.len() {
        return Err(colagnn::Error::Validation(format!(
            "series has {} locations, checkpoint expects {}",
            ds.num_locations(),
            names.len()
        ))
        .into());
    }
    let order = names
        .iter()
        .map(|n| {
            ds.locations()
                .iter()
                .position(|l| l == n)
                .ok_or_else(|| colagnn::Error::Validation(format!("series has no location {n:?}")))
        })
        .collect::<colagnn::Result<Vec<_>>>()?;
    Ok(ds.permute_locations(&order)?)
}

pub fn export_attention(checkpoint: &Path, data: &Path, end: Option<&str>, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let AnyModel::ColaGnn(model) = &ck.model else {
        return Err(CliError::Config(format!(
            "{} holds a {} model; attention export needs a cola-gnn checkpoint",
            checkpoint.display(),
            ck.method
        )));
    };
    let ds = align(&load_series(data)?, &ck.locations)?;
    let t = ds.num_weeks();
    let last = match end {
        Some(label) => ds
            .weeks()
            .iter()
            .position(|w| w == label)
            .ok_or_else(|| colagnn::Error::Validation(format!("{}: no week labelled {label:?}", data.display())))?,
        None => t.checked_sub(1).ok_or_else(|| colagnn::Error::Validation(format!("{}: no weeks", data.display())))?,
    };
    let w = ck.window;
    if last + 1 < w {
        return Err(colagnn::Error::Validation(format!(
            "the window ending at week {:?} needs {w} weeks, only {} are available",
            ds.weeks()[last],
            last + 1
        ))
        .into());
    }
    let normalized = ck.normalizer.apply(&ds)?;
    let attention = model.attention(&window_at(&normalized, last + 1 - w, w))?;
    create_dir(out)?;
    write_matrix(&out.join("attention_raw.csv"), &ck.locations, &attention.raw)?;
    write_matrix(&out.join("attention_gate.csv"), &ck.locations, &attention.gate)?;
    write_matrix(&out.join("attention_fused.csv"), &ck.locations, &attention.fused)?;
    write_matrix(&out.join("adjacency_normalized.csv"), &ck.locations, model.adjacency().normalized())?;
    println!("wrote attention for the window ending {} to {}", ds.weeks()[last], out.display());
    Ok(())
}

pub fn predict(checkpoints: &[PathBuf], data: &Path, horizon: Option<usize>, out: Option<&Path>) -> Result<()> {
    let series = load_series(data)?;
    let mut text = String::from("horizon,origin,week,location,y_true,y_pred\n");
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        if let Some(h) = horizon.filter(|&h| h != ck.horizon) {
            return Err(CliError::Config(format!(
                "{} was trained for horizon {}, not --horizon {h}",
                path.display(),
                ck.horizon
            )));
        }
        let ds = align(&series, &ck.locations)?;
        let (t, w, h) = (ds.num_weeks(), ck.window, ck.horizon);
        if t < w {
            return Err(colagnn::Error::Validation(format!("{}: {t} weeks is shorter than the window {w}", data.display())).into());
        }
        let normalized = ck.normalizer.apply(&ds)?;
        let starts: Vec<usize> = (0..=t - w).collect();
        let preds = Execution::default().map(&starts, |&s| {
            let history = History { series: normalized.values(), start: s };
            ck.model.predict_with_history(&window_at(&normalized, s, w), Some(history))
        });
        let weeks = ds.weeks();
        for (&s, pred) in starts.iter().zip(preds) {
            let origin = s + w - 1;
            let target = origin + h;
            let week = match weeks.get(target) {
                Some(label) => label.clone(),
                None => format!("{}+{}", weeks[t - 1], target + 1 - t),
            };
            for (i, z) in pred?.into_iter().enumerate() {
                let truth = if target < t { ds.value(i, target).to_string() } else { String::new() };
                let y = ck.normalizer.invert_value(i, z).max(0.0);
                writeln!(text, "{h},{},{week},{},{truth},{y}", weeks[origin], ck.locations[i]).unwrap();
            }
        }
    }
    match out {
        Some(p) => write_text(p, &text),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn dump_series(path: &Path) -> Result<()> {
    let ds = load_series(path)?;
    write_series(&ds, io::stdout().lock()).map_err(|e| CliError::io("<stdout>", e))
}

pub fn dump_adjacency(path: &Path, data: &Path) -> Result<()> {
    let ds = load_series(data)?;
    let adj = load_adjacency(path, ds.locations())?;
    write_adjacency(&adj, ds.locations(), io::stdout().lock()).map_err(|e| CliError::io("<stdout>", e))
}

pub fn generate(out: &Path, locations: usize, weeks: usize, seed: u64) -> Result<()> {
    let syn = synthesize(&SyntheticConfig {
        locations,
        weeks,
        seed,
        ..Default::default()
    })?;
    create_dir(out)?;
    let names = syn.dataset.locations().to_vec();
    write_with(&out.join("series.csv"), |f| write_series(&syn.dataset, f))?;
    write_with(&out.join("adjacency.csv"), |f| write_adjacency(&syn.adjacency, &names, f))?;
    println!("wrote {locations} locations x {weeks} weeks to {}", out.display());
    Ok(())
}
