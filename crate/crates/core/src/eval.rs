//! Pooled RMSE / MAE / PCC on denormalized, zero-clipped predictions,
//! and their aggregation over seeds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{EpiDataset, Normalizer, WindowSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Predictor;

fn check_pair(pred: &[f64], truth: &[f64], op: &'static str) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(op, &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Contract(format!("{op} needs at least one value")));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "rmse")?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "mae")?;
    let abs: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).abs()).sum();
    Ok(abs / pred.len() as f64)
}

/// Sample Pearson correlation; `None` when either vector is constant.
pub fn pcc(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check_pair(pred, truth, "pcc")?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let my = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, y) in pred.iter().zip(truth) {
        let (dp, dy) = (p - mp, y - my);
        sxy += dp * dy;
        sxx += dp * dp;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub pcc: Option<f64>,
}

impl Metrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Metrics {
            rmse: rmse(pred, truth)?,
            mae: mae(pred, truth)?,
            pcc: pcc(pred, truth)?,
        })
    }
}

/// One denormalized forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    /// Index of the target week in the full series.
    pub week: usize,
    pub location: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

/// Denormalized predictions for every window and location, window-major.
/// Predictions are clipped below at 0.
pub fn predict_set<P: Predictor + Sync>(
    model: &P,
    set: &WindowSet,
    normalizer: &Normalizer,
    exec: Execution,
) -> Result<Vec<PredictionRow>> {
    let per_window = exec.map(&set.samples, |s| model.predict_with_history(&s.input, set.history(s)));
    let mut rows = Vec::with_capacity(set.len() * set.num_locations());
    for (s, pred) in set.samples.iter().zip(per_window) {
        for (i, z) in pred?.into_iter().enumerate() {
            rows.push(PredictionRow {
                week: s.target_week,
                location: i,
                y_true: normalizer.invert_value(i, s.target[i]),
                y_pred: normalizer.invert_value(i, z).max(0.0),
            });
        }
    }
    Ok(rows)
}

pub fn metrics_of(rows: &[PredictionRow]) -> Result<Metrics> {
    let pred: Vec<f64> = rows.iter().map(|r| r.y_pred).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.y_true).collect();
    Metrics::compute(&pred, &truth)
}

/// Metrics over all locations and windows pooled together.
pub fn evaluate<P: Predictor + Sync>(model: &P, set: &WindowSet, normalizer: &Normalizer, exec: Execution) -> Result<Metrics> {
    if set.is_empty() {
        return Err(Error::Contract("evaluation needs at least one window".into()));
    }
    metrics_of(&predict_set(model, set, normalizer, exec)?)
}

/// Writes `week,location,y_true,y_pred` using the dataset's labels.
pub fn write_predictions(rows: &[PredictionRow], ds: &EpiDataset, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "week,location,y_true,y_pred")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", ds.weeks()[r.week], ds.locations()[r.location], r.y_true, r.y_pred)?;
    }
    Ok(())
}

/// Per-seed values with their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_seed: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Summary {
    /// Missing values are skipped; one value has SD 0.
    pub fn of(values: &[Option<f64>]) -> Self {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let k = present.len();
        let mean = (k > 0).then(|| present.iter().sum::<f64>() / k as f64);
        let sd = mean.map(|m| {
            if k < 2 {
                0.0
            } else {
                (present.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1) as f64).sqrt()
            }
        });
        Summary {
            per_seed: values.to_vec(),
            mean,
            sd,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub rmse: Summary,
    pub mae: Summary,
    pub pcc: Summary,
}

impl HorizonReport {
    pub fn from_trials(trials: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> Option<f64>| Summary::of(&trials.iter().map(f).collect::<Vec<_>>());
        HorizonReport {
            rmse: col(|m| Some(m.rmse)),
            mae: col(|m| Some(m.mae)),
            pcc: col(|m| m.pcc),
        }
    }
}

/// `{horizon: {metric: {per_seed, mean, sd}}}`.
pub type MetricsReport = BTreeMap<usize, HorizonReport>;
