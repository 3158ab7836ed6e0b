use serde::{Deserialize, Serialize};

use super::lstsq::{ridge_lstsq, Design, RIDGE};
use crate::data::WindowSet;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{History, ParamKind, ParamStore, Predictor};

pub const DEFAULT_MA_ORDER: usize = 2;

/// Per-location two-stage fit for one location.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmaLocation {
    /// One-step AR of order `W` used to estimate innovations.
    pub long_ar: Vec<f64>,
    pub long_intercept: f64,
    /// Coefficients on the `W` window values, oldest first.
    pub ar: Vec<f64>,
    /// Coefficients on the `q` most recent innovation estimates, newest
    /// first.
    pub ma: Vec<f64>,
    pub intercept: f64,
}

impl ArmaLocation {
    /// Innovation estimate at position `t` of `series`; 0 when fewer than
    /// `m` weeks precede it.
    fn residual(&self, series: &[f64], t: usize) -> f64 {
        let m = self.long_ar.len();
        if t < m {
            return 0.0;
        }
        series[t] - self.long_intercept - dot(&self.long_ar, &series[t - m..t])
    }

    /// The window `series[end - W..end]` followed by the innovations at its
    /// last `q` weeks. Innovations reach up to `W` weeks before the window,
    /// which is what separates them from a linear function of the window.
    fn features(&self, series: &[f64], end: usize, w: usize, q: usize) -> Vec<f64> {
        let mut row = series[end - w..end].to_vec();
        row.extend((1..=q).map(|k| self.residual(series, end - k)));
        row
    }

    fn predict(&self, series: &[f64], end: usize) -> f64 {
        let w = self.ar.len();
        let f = self.features(series, end, w, self.ma.len());
        dot(&self.ar, &f[..w]) + dot(&self.ma, &f[w..]) + self.intercept
    }
}

/// Direct `h`-step ARMA(`W`, `q`) regressor per location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ArmaRepr", try_from = "ArmaRepr")]
pub struct ArmaModel {
    window: usize,
    q: usize,
    fits: Vec<ArmaLocation>,
}

#[derive(Serialize, Deserialize)]
struct ArmaRepr {
    window: usize,
    q: usize,
    locations: usize,
    params: ParamStore,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The weeks covered by the windows' inputs, per location.
fn input_series(set: &WindowSet, location: usize) -> Vec<f64> {
    let mut s = set.samples[0].input.row_slice(location).to_vec();
    for sample in &set.samples[1..] {
        s.push(*sample.input.row_slice(location).last().expect("nonempty window"));
    }
    s
}

fn split_last(mut beta: Vec<f64>) -> (Vec<f64>, f64) {
    let b = beta.pop().expect("intercept column");
    (beta, b)
}

/// Observed weeks up to the end of a window: up to `lookback` weeks of
/// history followed by the window itself.
fn with_history(window: &[f64], history: Option<(&[f64], usize)>, lookback: usize) -> Vec<f64> {
    let mut x = match history {
        Some((row, start)) => row[start.saturating_sub(lookback)..start].to_vec(),
        None => Vec::new(),
    };
    x.extend_from_slice(window);
    x
}

/// Hannan–Rissanen: a long one-step AR of order `W` on the training weeks
/// estimates innovations, then the `h`-step target is regressed on the
/// window and the `q` latest innovations. Innovations are computed from the
/// weeks observed before each window, so samples need no other context.
pub fn fit_arma(train: &WindowSet, q: usize, exec: Execution) -> Result<ArmaModel> {
    let w = train.window;
    if train.is_empty() {
        return Err(Error::Contract("cannot fit ARMA on zero windows".into()));
    }
    if q >= w {
        return Err(Error::Config(format!("ARMA needs q < W, got q={q}, W={w}")));
    }
    let m = if q > 0 { w } else { 0 };
    let length = train.len() + w - 1 + train.horizon;
    if length < w + q + train.horizon {
        return Err(Error::Contract(format!(
            "ARMA needs at least W+q+h = {} training weeks, found {length}",
            w + q + train.horizon
        )));
    }
    let fits = exec
        .map_range(train.num_locations(), |i| -> Result<ArmaLocation> {
            let inputs = input_series(train, i);
            let (long_ar, long_intercept) = if q > 0 {
                let mut x = Design::new(m + 1);
                let mut y = Vec::new();
                for t in m..inputs.len() {
                    let mut row = inputs[t - m..t].to_vec();
                    row.push(1.0);
                    x.push_row(&row);
                    y.push(inputs[t]);
                }
                split_last(ridge_lstsq(&x, &y, RIDGE)?)
            } else {
                (Vec::new(), 0.0)
            };
            let mut loc = ArmaLocation {
                long_ar,
                long_intercept,
                ar: vec![0.0; w],
                ma: Vec::new(),
                intercept: 0.0,
            };
            let mut x = Design::new(w + q + 1);
            let mut y = Vec::with_capacity(train.len());
            for (k, s) in train.samples.iter().enumerate() {
                // Without a carried series, the windows themselves are the
                // only record of earlier weeks.
                let history = match train.history(s) {
                    Some(h) => (h.series.row_slice(i), h.start),
                    None => (inputs.as_slice(), k),
                };
                let series = with_history(s.input.row_slice(i), Some(history), m + q);
                let mut row = loc.features(&series, series.len(), w, q);
                row.push(1.0);
                x.push_row(&row);
                y.push(s.target[i]);
            }
            let (mut beta, b) = split_last(ridge_lstsq(&x, &y, RIDGE)?);
            loc.ma = beta.split_off(w);
            loc.ar = beta;
            loc.intercept = b;
            Ok(loc)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ArmaModel { window: w, q, fits })
}

impl ArmaModel {
    pub fn ma_order(&self) -> usize {
        self.q
    }

    pub fn location(&self, i: usize) -> &ArmaLocation {
        &self.fits[i]
    }

    /// Stage-two coefficients plus the innovation-estimating AR.
    pub fn parameter_count(&self) -> usize {
        self.fits
            .iter()
            .map(|f| f.ar.len() + f.ma.len() + 1 + if self.q > 0 { f.long_ar.len() + 1 } else { 0 })
            .sum()
    }

    pub fn to_params(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (i, f) in self.fits.iter().enumerate() {
            store.push(format!("arma.{i}.ar"), ParamKind::Vector, Tensor::row(&f.ar));
            store.push(format!("arma.{i}.ma"), ParamKind::Vector, Tensor::new(vec![1, f.ma.len()], f.ma.clone()).expect("row"));
            store.push(format!("arma.{i}.intercept"), ParamKind::Bias, Tensor::scalar(f.intercept));
            store.push(
                format!("arma.{i}.long_ar"),
                ParamKind::Vector,
                Tensor::new(vec![1, f.long_ar.len()], f.long_ar.clone()).expect("row"),
            );
            store.push(format!("arma.{i}.long_intercept"), ParamKind::Bias, Tensor::scalar(f.long_intercept));
        }
        store
    }

    pub fn from_params(window: usize, q: usize, locations: usize, params: &ParamStore) -> Result<Self> {
        let m = if q > 0 { window } else { 0 };
        let block = |name: String, width: usize| -> Result<Vec<f64>> {
            params
                .get(&name)
                .filter(|t| t.shape() == [1, width])
                .map(|t| t.data().to_vec())
                .ok_or_else(|| Error::Checkpoint(format!("missing or misshaped block {name}")))
        };
        let fits = (0..locations)
            .map(|i| {
                Ok(ArmaLocation {
                    ar: block(format!("arma.{i}.ar"), window)?,
                    ma: block(format!("arma.{i}.ma"), q)?,
                    intercept: block(format!("arma.{i}.intercept"), 1)?[0],
                    long_ar: block(format!("arma.{i}.long_ar"), m)?,
                    long_intercept: block(format!("arma.{i}.long_intercept"), 1)?[0],
                })
            })
            .collect::<Result<_>>()?;
        Ok(ArmaModel { window, q, fits })
    }
}

impl From<ArmaModel> for ArmaRepr {
    fn from(m: ArmaModel) -> Self {
        ArmaRepr {
            window: m.window,
            q: m.q,
            locations: m.fits.len(),
            params: m.to_params(),
        }
    }
}

impl TryFrom<ArmaRepr> for ArmaModel {
    type Error = Error;

    fn try_from(r: ArmaRepr) -> Result<Self> {
        ArmaModel::from_params(r.window, r.q, r.locations, &r.params)
    }
}

impl Predictor for ArmaModel {
    fn window(&self) -> usize {
        self.window
    }

    /// Without history every innovation is taken as 0, leaving the AR part.
    fn predict(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.predict_with_history(input, None)
    }

    fn predict_with_history(&self, input: &Tensor, history: Option<History<'_>>) -> Result<Vec<f64>> {
        if input.shape() != [self.fits.len(), self.window] {
            return Err(Error::shape("ARMA input", input.shape(), &[self.fits.len(), self.window]));
        }
        if let Some(h) = history {
            if h.series.rows() != self.fits.len() || h.series.cols() < h.start + self.window {
                return Err(Error::shape("ARMA history", h.series.shape(), &[self.fits.len(), h.start + self.window]));
            }
        }
        let lookback = self.fits.first().map_or(0, |f| f.long_ar.len()) + self.q;
        Ok(self
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let series = with_history(input.row_slice(i), history.map(|h| (h.series.row_slice(i), h.start)), lookback);
                f.predict(&series, series.len())
            })
            .collect())
    }
}
