use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lstsq::{ridge_lstsq, xty, Cholesky, Design, RIDGE};
use crate::data::WindowSet;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ParamKind, ParamStore, Predictor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearVariant {
    /// One regression on `W` own lags shared by every location.
    Gar,
    /// One regression per location on its own `W` lags.
    Ar,
    /// One regression per location on all `N·W` lags.
    Var,
}

impl LinearVariant {
    pub fn name(self) -> &'static str {
        match self {
            LinearVariant::Gar => "gar",
            LinearVariant::Ar => "ar",
            LinearVariant::Var => "var",
        }
    }

    pub fn parameter_count(self, locations: usize, window: usize) -> usize {
        match self {
            LinearVariant::Gar => window + 1,
            LinearVariant::Ar => locations * (window + 1),
            LinearVariant::Var => locations * (locations * window + 1),
        }
    }
}

impl fmt::Display for LinearVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinearVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gar" => Ok(LinearVariant::Gar),
            "ar" => Ok(LinearVariant::Ar),
            "var" => Ok(LinearVariant::Var),
            other => Err(Error::Config(format!("unknown linear variant {other:?}"))),
        }
    }
}

/// Direct `h`-step least-squares regressor over a `W`-week window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "LinearRepr", try_from = "LinearRepr")]
pub struct DirectLinearModel {
    variant: LinearVariant,
    window: usize,
    locations: usize,
    /// One row per fitted regression (1 for GAR, `N` otherwise).
    coef: Vec<Vec<f64>>,
    intercept: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinearRepr {
    variant: LinearVariant,
    window: usize,
    locations: usize,
    params: ParamStore,
}

impl DirectLinearModel {
    pub fn variant(&self) -> LinearVariant {
        self.variant
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    /// Coefficients of the regression that serves `location`.
    pub fn coefficients(&self, location: usize) -> (&[f64], f64) {
        let r = if self.variant == LinearVariant::Gar { 0 } else { location };
        (&self.coef[r], self.intercept[r])
    }

    pub fn parameter_count(&self) -> usize {
        self.coef.iter().map(|c| c.len() + 1).sum()
    }

    fn block_name(&self, r: usize) -> String {
        match self.variant {
            LinearVariant::Gar => "gar".to_string(),
            v => format!("{}.{r}", v.name()),
        }
    }

    /// Coefficient blocks named `<variant>[.<location>].coef` and
    /// `.intercept`.
    pub fn to_params(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (r, (c, b)) in self.coef.iter().zip(&self.intercept).enumerate() {
            let name = self.block_name(r);
            store.push(format!("{name}.coef"), ParamKind::Vector, Tensor::row(c));
            store.push(format!("{name}.intercept"), ParamKind::Bias, Tensor::scalar(*b));
        }
        store
    }

    pub fn from_params(variant: LinearVariant, window: usize, locations: usize, params: &ParamStore) -> Result<Self> {
        let (rows, width) = match variant {
            LinearVariant::Gar => (1, window),
            LinearVariant::Ar => (locations, window),
            LinearVariant::Var => (locations, locations * window),
        };
        let mut model = DirectLinearModel {
            variant,
            window,
            locations,
            coef: Vec::with_capacity(rows),
            intercept: Vec::with_capacity(rows),
        };
        for r in 0..rows {
            let name = model.block_name(r);
            let coef = params
                .get(&format!("{name}.coef"))
                .filter(|t| t.shape() == [1, width])
                .ok_or_else(|| Error::Checkpoint(format!("missing or misshaped block {name}.coef")))?;
            let b = params
                .get(&format!("{name}.intercept"))
                .filter(|t| t.shape() == [1, 1])
                .ok_or_else(|| Error::Checkpoint(format!("missing or misshaped block {name}.intercept")))?;
            model.coef.push(coef.data().to_vec());
            model.intercept.push(b.data()[0]);
        }
        if params.len() != 2 * rows {
            return Err(Error::Checkpoint(format!("expected {} blocks, found {}", 2 * rows, params.len())));
        }
        Ok(model)
    }
}

impl From<DirectLinearModel> for LinearRepr {
    fn from(m: DirectLinearModel) -> Self {
        LinearRepr {
            variant: m.variant,
            window: m.window,
            locations: m.locations,
            params: m.to_params(),
        }
    }
}

impl TryFrom<LinearRepr> for DirectLinearModel {
    type Error = Error;

    fn try_from(r: LinearRepr) -> Result<Self> {
        DirectLinearModel::from_params(r.variant, r.window, r.locations, &r.params)
    }
}

fn with_intercept(features: &[f64]) -> Vec<f64> {
    let mut row = features.to_vec();
    row.push(1.0);
    row
}

fn split_solution(mut beta: Vec<f64>) -> (Vec<f64>, f64) {
    let b = beta.pop().expect("intercept column");
    (beta, b)
}

/// Ordinary least squares of each target on its window features, with
/// `1e-8` added to the Gram diagonal.
pub fn fit_direct_linear(train: &WindowSet, variant: LinearVariant, exec: Execution) -> Result<DirectLinearModel> {
    if train.is_empty() {
        return Err(Error::Contract("cannot fit a linear baseline on zero windows".into()));
    }
    let (n, w) = (train.num_locations(), train.window);
    let fits: Vec<(Vec<f64>, f64)> = match variant {
        LinearVariant::Gar => {
            let mut x = Design::new(w + 1);
            let mut y = Vec::with_capacity(train.len() * n);
            for s in &train.samples {
                for i in 0..n {
                    x.push_row(&with_intercept(s.input.row_slice(i)));
                    y.push(s.target[i]);
                }
            }
            vec![split_solution(ridge_lstsq(&x, &y, RIDGE)?)]
        }
        LinearVariant::Ar => exec
            .map_range(n, |i| {
                let mut x = Design::new(w + 1);
                let y: Vec<f64> = train.samples.iter().map(|s| s.target[i]).collect();
                for s in &train.samples {
                    x.push_row(&with_intercept(s.input.row_slice(i)));
                }
                ridge_lstsq(&x, &y, RIDGE).map(split_solution)
            })
            .into_iter()
            .collect::<Result<_>>()?,
        LinearVariant::Var => {
            let mut x = Design::new(n * w + 1);
            for s in &train.samples {
                x.push_row(&with_intercept(s.input.data()));
            }
            let chol = Cholesky::of_gram(&x, RIDGE)?;
            exec.map_range(n, |i| {
                let y: Vec<f64> = train.samples.iter().map(|s| s.target[i]).collect();
                split_solution(chol.solve(&xty(&x, &y)))
            })
        }
    };
    let (coef, intercept) = fits.into_iter().unzip();
    Ok(DirectLinearModel {
        variant,
        window: w,
        locations: n,
        coef,
        intercept,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Predictor for DirectLinearModel {
    fn window(&self) -> usize {
        self.window
    }

    fn predict(&self, input: &Tensor) -> Result<Vec<f64>> {
        if input.shape() != [self.locations, self.window] {
            return Err(Error::shape("linear baseline input", input.shape(), &[self.locations, self.window]));
        }
        Ok((0..self.locations)
            .map(|i| {
                let (c, b) = self.coefficients(i);
                let features = if self.variant == LinearVariant::Var { input.data() } else { input.row_slice(i) };
                dot(c, features) + b
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindowSample;

    fn windows(series: &[Vec<f64>], w: usize, h: usize) -> WindowSet {
        let n = series.len();
        let t = series[0].len();
        let samples = (0..=t - w - h)
            .map(|s| {
                let data = series.iter().flat_map(|r| r[s..s + w].to_vec()).collect();
                WindowSample {
                    input: Tensor::new(vec![n, w], data).unwrap(),
                    target: series.iter().map(|r| r[s + w + h - 1]).collect(),
                    target_week: s + w + h - 1,
                }
            })
            .collect();
        WindowSet { samples, window: w, horizon: h, series: None, series_offset: 0 }
    }

    #[test]
    fn counts_at_reference_size() {
        assert_eq!(LinearVariant::Gar.parameter_count(49, 20), 21);
        assert_eq!(LinearVariant::Ar.parameter_count(49, 20), 1029);
        assert_eq!(LinearVariant::Var.parameter_count(49, 20), 48069);
    }

    #[test]
    fn constant_series_predicts_the_constant() {
        let set = windows(&[vec![4.0; 30], vec![2.0; 30]], 3, 2);
        for v in [LinearVariant::Gar, LinearVariant::Ar, LinearVariant::Var] {
            let m = fit_direct_linear(&set, v, Execution::Sequential).unwrap();
            let p = m.predict(&set.samples[0].input).unwrap();
            if v != LinearVariant::Gar {
                assert!((p[0] - 4.0).abs() < 1e-6 && (p[1] - 2.0).abs() < 1e-6, "{v} {p:?}");
            }
        }
    }

    #[test]
    fn ramp_is_predicted_exactly() {
        let ramp: Vec<f64> = (0..40).map(|t| t as f64).collect();
        let other: Vec<f64> = (0..40).map(|t| 2.0 * t as f64 + 1.0).collect();
        let set = windows(&[ramp, other], 3, 1);
        let m = fit_direct_linear(&set, LinearVariant::Ar, Execution::Sequential).unwrap();
        let x = Tensor::from_rows(&[vec![50.0, 51.0, 52.0], vec![101.0, 103.0, 105.0]]).unwrap();
        let p = m.predict(&x).unwrap();
        assert!((p[0] - 53.0).abs() < 1e-8, "{p:?}");
        assert!((p[1] - 107.0).abs() < 1e-8, "{p:?}");
    }

    #[test]
    fn param_blocks_round_trip() {
        let s1: Vec<f64> = (0..25).map(|t| (t as f64 * 0.7).sin()).collect();
        let s2: Vec<f64> = (0..25).map(|t| (t as f64 * 0.3).cos()).collect();
        let set = windows(&[s1, s2], 4, 2);
        for v in [LinearVariant::Gar, LinearVariant::Ar, LinearVariant::Var] {
            let m = fit_direct_linear(&set, v, Execution::Sequential).unwrap();
            assert_eq!(m.parameter_count(), v.parameter_count(2, 4));
            let back = DirectLinearModel::from_params(v, 4, 2, &m.to_params()).unwrap();
            assert_eq!(back, m);
        }
    }
}
