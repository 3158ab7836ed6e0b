//! One (method, horizon, seed) run from raw data to test metrics.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_arma, fit_direct_linear, ArmaModel, DirectLinearModel, LinearVariant, RnnBaseline, RnnConfig, DEFAULT_MA_ORDER,
};
use crate::data::{prepare, AdjacencyMatrix, EpiDataset, NormalizationScope, Normalizer, SplitData, SplitSpec, DEFAULT_SPLIT};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::eval::{metrics_of, predict_set, Metrics, PredictionRow};
use crate::exec::Execution;
use crate::model::{ColaGnn, ColaGnnConfig, History, ParamStore, Predictor};
use crate::train::{derive_seed, train_model, TrainConfig, TrainObserver, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ColaGnn,
    Gar,
    Ar,
    Var,
    Arma,
    Rnn,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::ColaGnn, Method::Gar, Method::Ar, Method::Var, Method::Arma, Method::Rnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::ColaGnn => "cola-gnn",
            Method::Gar => "gar",
            Method::Ar => "ar",
            Method::Var => "var",
            Method::Arma => "arma",
            Method::Rnn => "rnn",
        }
    }

    pub fn is_trained(self) -> bool {
        matches!(self, Method::ColaGnn | Method::Rnn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected one of cola-gnn, gar, ar, var, arma, rnn")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Raw windows replace the convolution features.
    NoTemp,
    /// The normalized adjacency replaces the learned attention.
    NoLoc,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoTemp => "no-temp",
            Ablation::NoLoc => "no-loc",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no-temp" => Ok(Ablation::NoTemp),
            "no-loc" => Ok(Ablation::NoLoc),
            other => Err(Error::Config(format!("unknown ablation {other:?}; expected none, no-temp or no-loc"))),
        }
    }
}

/// Model hyperparameters that do not depend on the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: usize,
    pub attn_dim: usize,
    pub filters: usize,
    /// Defaults to the window length.
    pub filter_len: Option<usize>,
    pub graph_dims: Vec<usize>,
    pub norm_p: f64,
    pub norm_eps: f64,
    pub dropout: f64,
    /// MA order of the ARMA baseline.
    pub arma_q: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let c = ColaGnnConfig::new(1, 1);
        ModelSettings {
            hidden: c.hidden,
            attn_dim: c.attn_dim,
            filters: c.filters,
            filter_len: None,
            graph_dims: c.graph_dims,
            norm_p: c.norm_p,
            norm_eps: c.norm_eps,
            dropout: c.dropout,
            arma_q: DEFAULT_MA_ORDER,
        }
    }
}

impl ModelSettings {
    pub fn cola_config(&self, locations: usize, window: usize, ablation: Ablation) -> ColaGnnConfig {
        ColaGnnConfig {
            locations,
            window,
            hidden: self.hidden,
            attn_dim: self.attn_dim,
            filters: self.filters,
            filter_len: self.filter_len.unwrap_or(window),
            graph_dims: self.graph_dims.clone(),
            norm_p: self.norm_p,
            norm_eps: self.norm_eps,
            dropout: self.dropout,
            use_temporal_conv: ablation != Ablation::NoTemp,
            use_location_attention: ablation != Ablation::NoLoc,
        }
    }

    pub fn rnn_config(&self, locations: usize, window: usize) -> RnnConfig {
        RnnConfig {
            locations,
            window,
            hidden: self.hidden,
            dropout: self.dropout,
        }
    }
}

/// Everything a run needs besides the data, method, horizon and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub window: usize,
    pub ratios: [f64; 3],
    pub scope: NormalizationScope,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub ablation: Ablation,
    pub exec: Execution,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            window: 20,
            ratios: DEFAULT_SPLIT,
            scope: NormalizationScope::TrainSplit,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            ablation: Ablation::None,
            exec: Execution::default(),
        }
    }
}

impl Settings {
    pub fn split_spec(&self, horizon: usize) -> SplitSpec {
        SplitSpec {
            window: self.window,
            horizon,
            ratios: self.ratios,
            scope: self.scope,
        }
    }
}

/// Any fitted forecaster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnyModel {
    ColaGnn(ColaGnn),
    Rnn(RnnBaseline),
    Linear(DirectLinearModel),
    Arma(ArmaModel),
}

impl AnyModel {
    pub fn method(&self) -> Method {
        match self {
            AnyModel::ColaGnn(_) => Method::ColaGnn,
            AnyModel::Rnn(_) => Method::Rnn,
            AnyModel::Linear(m) => match m.variant() {
                LinearVariant::Gar => Method::Gar,
                LinearVariant::Ar => Method::Ar,
                LinearVariant::Var => Method::Var,
            },
            AnyModel::Arma(_) => Method::Arma,
        }
    }

    /// Same architecture with other trained parameters.
    pub fn with_params(&self, params: ParamStore) -> Result<AnyModel> {
        match self {
            AnyModel::ColaGnn(m) => Ok(AnyModel::ColaGnn(ColaGnn::from_parts(
                m.config().clone(),
                m.adjacency().clone(),
                params,
            )?)),
            AnyModel::Rnn(m) => Ok(AnyModel::Rnn(RnnBaseline::from_parts(m.config().clone(), params)?)),
            _ => Err(Error::Contract("only trained models take a parameter store".into())),
        }
    }

    pub fn parameter_count(&self) -> usize {
        use crate::model::Forecaster;
        match self {
            AnyModel::ColaGnn(m) => m.params().count(),
            AnyModel::Rnn(m) => m.params().count(),
            AnyModel::Linear(m) => m.parameter_count(),
            AnyModel::Arma(m) => m.parameter_count(),
        }
    }

    fn inner(&self) -> &(dyn Predictor + Sync) {
        match self {
            AnyModel::ColaGnn(m) => m,
            AnyModel::Rnn(m) => m,
            AnyModel::Linear(m) => m,
            AnyModel::Arma(m) => m,
        }
    }
}

impl Predictor for AnyModel {
    fn window(&self) -> usize {
        self.inner().window()
    }

    fn predict(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.inner().predict(input)
    }

    fn predict_with_history(&self, input: &Tensor, history: Option<History<'_>>) -> Result<Vec<f64>> {
        self.inner().predict_with_history(input, history)
    }
}

/// Fresh, untrained Cola-GNN or RNN for `locations` series, initialized
/// from `seed`.
pub fn init_model(
    method: Method,
    locations: usize,
    adjacency: Option<&AdjacencyMatrix>,
    settings: &Settings,
    seed: u64,
) -> Result<AnyModel> {
    let w = settings.window;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 1]));
    match method {
        Method::ColaGnn => {
            let adjacency = adjacency.ok_or_else(|| Error::Config("data.adjacency is required for cola-gnn".into()))?;
            let config = settings.model.cola_config(locations, w, settings.ablation);
            Ok(AnyModel::ColaGnn(ColaGnn::new(config, adjacency.clone(), &mut rng)?))
        }
        Method::Rnn => Ok(AnyModel::Rnn(RnnBaseline::new(settings.model.rnn_config(locations, w), &mut rng)?)),
        other => Err(Error::Contract(format!("{other} is fitted in closed form, not initialized"))),
    }
}

/// Builds and fits one model on prepared windows. `seed` drives
/// initialization, shuffling and dropout of the trained methods.
pub fn fit_method(
    method: Method,
    data: &SplitData,
    adjacency: Option<&AdjacencyMatrix>,
    settings: &Settings,
    seed: u64,
    observer: &mut impl TrainObserver,
) -> Result<(AnyModel, Option<TrainReport>)> {
    let train_cfg = TrainConfig { seed, ..settings.train.clone() };
    let fit = |variant| fit_direct_linear(&data.train, variant, settings.exec).map(AnyModel::Linear);
    match method {
        Method::ColaGnn | Method::Rnn => {
            let model = init_model(method, data.normalizer.num_locations(), adjacency, settings, seed)?;
            let (model, report) = match model {
                AnyModel::ColaGnn(m) => {
                    let (m, r) = train_model(m, &data.train, &data.val, &train_cfg, settings.exec, observer)?;
                    (AnyModel::ColaGnn(m), r)
                }
                AnyModel::Rnn(m) => {
                    let (m, r) = train_model(m, &data.train, &data.val, &train_cfg, settings.exec, observer)?;
                    (AnyModel::Rnn(m), r)
                }
                _ => unreachable!("init_model returns a trainable model"),
            };
            Ok((model, Some(report)))
        }
        Method::Gar => Ok((fit(LinearVariant::Gar)?, None)),
        Method::Ar => Ok((fit(LinearVariant::Ar)?, None)),
        Method::Var => Ok((fit(LinearVariant::Var)?, None)),
        Method::Arma => Ok((AnyModel::Arma(fit_arma(&data.train, settings.model.arma_q, settings.exec)?), None)),
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub model: AnyModel,
    pub normalizer: Normalizer,
    pub report: Option<TrainReport>,
    pub metrics: Metrics,
    pub predictions: Vec<PredictionRow>,
}

/// Prepares windows for `horizon`, fits `method` and scores it on the
/// test split.
pub fn run_cell(
    ds: &EpiDataset,
    adjacency: Option<&AdjacencyMatrix>,
    method: Method,
    horizon: usize,
    seed: u64,
    settings: &Settings,
    observer: &mut impl TrainObserver,
) -> Result<CellResult> {
    let data = prepare(ds, &settings.split_spec(horizon))?;
    let (model, report) = fit_method(method, &data, adjacency, settings, seed, observer)?;
    let predictions = predict_set(&model, &data.test, &data.normalizer, settings.exec)?;
    let metrics = metrics_of(&predictions)?;
    Ok(CellResult {
        model,
        normalizer: data.normalizer,
        report,
        metrics,
        predictions,
    })
}
