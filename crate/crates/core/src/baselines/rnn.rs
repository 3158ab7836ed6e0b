use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::layers::{apply_dropout, predict_head, rnn_encode};
use crate::model::{Bound, Forecaster, ParamKind, ParamStore, Predictor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    pub locations: usize,
    pub window: usize,
    pub hidden: usize,
    pub dropout: f64,
}

/// One RNN and linear head shared by every location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RnnRepr", into = "RnnRepr")]
pub struct RnnBaseline {
    config: RnnConfig,
    params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct RnnRepr {
    config: RnnConfig,
    params: ParamStore,
}

impl TryFrom<RnnRepr> for RnnBaseline {
    type Error = Error;

    fn try_from(r: RnnRepr) -> Result<Self> {
        RnnBaseline::from_parts(r.config, r.params)
    }
}

impl From<RnnBaseline> for RnnRepr {
    fn from(m: RnnBaseline) -> Self {
        RnnRepr {
            config: m.config,
            params: m.params,
        }
    }
}

impl RnnBaseline {
    pub fn param_specs(c: &RnnConfig) -> Vec<(String, ParamKind, Vec<usize>)> {
        let d = c.hidden;
        vec![
            ("rnn.w".to_string(), ParamKind::Vector, vec![1, d]),
            ("rnn.U".to_string(), ParamKind::Matrix, vec![d, d]),
            ("rnn.b".to_string(), ParamKind::Bias, vec![1, d]),
            ("out.theta".to_string(), ParamKind::Vector, vec![d, 1]),
            ("out.b".to_string(), ParamKind::Bias, vec![1, 1]),
        ]
    }

    /// `D + D² + D` for the recurrence plus `D + 1` for the head.
    pub fn parameter_count(hidden: usize) -> usize {
        hidden + hidden * hidden + hidden + hidden + 1
    }

    fn check(c: &RnnConfig) -> Result<()> {
        if c.hidden == 0 || c.window == 0 || c.locations == 0 {
            return Err(Error::Config(format!("RNN baseline sizes must be positive: {c:?}")));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(Error::Config(format!("model.dropout must be in [0, 1), got {}", c.dropout)));
        }
        Ok(())
    }

    pub fn new(config: RnnConfig, rng: &mut impl Rng) -> Result<Self> {
        Self::check(&config)?;
        let params = ParamStore::init(&Self::param_specs(&config), rng);
        Ok(RnnBaseline { config, params })
    }

    pub fn from_parts(config: RnnConfig, params: ParamStore) -> Result<Self> {
        Self::check(&config)?;
        params.check_layout(&Self::param_specs(&config))?;
        Ok(RnnBaseline { config, params })
    }

    pub fn config(&self) -> &RnnConfig {
        &self.config
    }
}

impl Predictor for RnnBaseline {
    fn window(&self) -> usize {
        self.config.window
    }

    fn predict(&self, input: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.forward(&mut g, &p, input, None)?;
        Ok(g.value(out).data().to_vec())
    }
}

impl Forecaster for RnnBaseline {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph, p: &Bound, input: &Tensor, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let c = &self.config;
        if input.shape() != [c.locations, c.window] {
            return Err(Error::shape("RNN baseline input", input.shape(), &[c.locations, c.window]));
        }
        let mut h = rnn_encode(g, input, p.var("rnn.w"), p.var("rnn.U"), p.var("rnn.b"))?;
        if let Some(rng) = dropout_rng {
            h = apply_dropout(g, h, c.dropout, rng)?;
        }
        predict_head(g, &[h], p.var("out.theta"), p.var("out.b"))
    }
}
