use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ColaGnnConfig;
use super::layers::{
    apply_dropout, attention_scores, fuse_attention, message_pass, normalize_rows, predict_head, rnn_encode,
    temporal_conv,
};
use super::params::{Bound, ParamKind, ParamStore};
use super::{Forecaster, Predictor};
use crate::data::AdjacencyMatrix;
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Per-sample attention tensors of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMatrix {
    /// Row-normalized scores `A`.
    pub raw: Tensor,
    /// Gate `M`, entries in `(0, 1)`.
    pub gate: Tensor,
    /// Fused `Â`.
    pub fused: Tensor,
}

/// Graph nodes produced by [`ColaGnn::forward_nodes`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    /// `N×1` prediction.
    pub prediction: Var,
    /// `(A, M, Â)`, absent when location attention is disabled.
    pub attention: Option<(Var, Var, Var)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ColaRepr", into = "ColaRepr")]
pub struct ColaGnn {
    config: ColaGnnConfig,
    adjacency: AdjacencyMatrix,
    params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct ColaRepr {
    config: ColaGnnConfig,
    adjacency: AdjacencyMatrix,
    params: ParamStore,
}

impl TryFrom<ColaRepr> for ColaGnn {
    type Error = Error;

    fn try_from(r: ColaRepr) -> Result<Self> {
        ColaGnn::from_parts(r.config, r.adjacency, r.params)
    }
}

impl From<ColaGnn> for ColaRepr {
    fn from(m: ColaGnn) -> Self {
        ColaRepr {
            config: m.config,
            adjacency: m.adjacency,
            params: m.params,
        }
    }
}

impl ColaGnn {
    /// Fresh model with Glorot weights and zero biases.
    pub fn new(config: ColaGnnConfig, adjacency: AdjacencyMatrix, rng: &mut impl Rng) -> Result<Self> {
        Self::check(&config, &adjacency)?;
        let params = ParamStore::init(&Self::param_specs(&config), rng);
        Ok(ColaGnn {
            config,
            adjacency,
            params,
        })
    }

    pub fn from_parts(config: ColaGnnConfig, adjacency: AdjacencyMatrix, params: ParamStore) -> Result<Self> {
        Self::check(&config, &adjacency)?;
        params.check_layout(&Self::param_specs(&config))?;
        Ok(ColaGnn {
            config,
            adjacency,
            params,
        })
    }

    fn check(config: &ColaGnnConfig, adjacency: &AdjacencyMatrix) -> Result<()> {
        config.validate()?;
        if adjacency.size() != config.locations {
            return Err(Error::Config(format!(
                "adjacency covers {} locations, model expects {}",
                adjacency.size(),
                config.locations
            )));
        }
        Ok(())
    }

    /// Names, kinds and shapes of every trainable tensor, in storage order.
    pub fn param_specs(c: &ColaGnnConfig) -> Vec<(String, ParamKind, Vec<usize>)> {
        let (n, d, da) = (c.locations, c.hidden, c.attn_dim);
        let mut specs = vec![
            ("rnn.w".to_string(), ParamKind::Vector, vec![1, d]),
            ("rnn.U".to_string(), ParamKind::Matrix, vec![d, d]),
            ("rnn.b".to_string(), ParamKind::Bias, vec![1, d]),
        ];
        if c.use_location_attention {
            specs.extend([
                ("attn.Ws".to_string(), ParamKind::Matrix, vec![da, d]),
                ("attn.Wt".to_string(), ParamKind::Matrix, vec![da, d]),
                ("attn.v".to_string(), ParamKind::Vector, vec![da, 1]),
                ("attn.bs".to_string(), ParamKind::Bias, vec![1, da]),
                ("attn.bv".to_string(), ParamKind::Bias, vec![1, 1]),
                ("gate.Wm".to_string(), ParamKind::Matrix, vec![n, n]),
                ("gate.bm".to_string(), ParamKind::Bias, vec![1, 1]),
            ]);
        }
        if c.use_temporal_conv {
            specs.push(("conv.c".to_string(), ParamKind::Matrix, vec![c.filters, c.filter_len]));
        }
        let mut width = c.graph_input_width();
        for (l, &f) in c.graph_dims.iter().enumerate() {
            specs.push((format!("graph.W{l}"), ParamKind::Matrix, vec![f, width]));
            specs.push((format!("graph.b{l}"), ParamKind::Bias, vec![1, f]));
            width = f;
        }
        specs.push(("out.theta".to_string(), ParamKind::Vector, vec![d + width, 1]));
        specs.push(("out.b".to_string(), ParamKind::Bias, vec![1, 1]));
        specs
    }

    pub fn config(&self) -> &ColaGnnConfig {
        &self.config
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.adjacency
    }

    /// Appends one sample's forward pass to `g`. Dropout is active when
    /// `dropout_rng` is given.
    pub fn forward_nodes(
        &self,
        g: &mut Graph,
        p: &Bound,
        input: &Tensor,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardNodes> {
        let c = &self.config;
        if input.shape() != [c.locations, c.window] {
            return Err(Error::shape("forward input", input.shape(), &[c.locations, c.window]));
        }
        let mut h = rnn_encode(g, input, p.var("rnn.w"), p.var("rnn.U"), p.var("rnn.b"))?;
        if let Some(rng) = dropout_rng.as_deref_mut() {
            h = apply_dropout(g, h, c.dropout, rng)?;
        }

        let (fused, attention) = if c.use_location_attention {
            let scores = attention_scores(
                g,
                h,
                p.var("attn.Ws"),
                p.var("attn.Wt"),
                p.var("attn.v"),
                p.var("attn.bs"),
                p.var("attn.bv"),
            )?;
            let a = normalize_rows(g, scores, c.norm_p, c.norm_eps)?;
            let geo = g.constant(self.adjacency.normalized().clone());
            let (gate, fused) = fuse_attention(g, a, geo, p.var("gate.Wm"), p.var("gate.bm"))?;
            (fused, Some((a, gate, fused)))
        } else {
            (g.constant(self.adjacency.normalized().clone()), None)
        };

        let h0 = if c.use_temporal_conv {
            temporal_conv(g, input, p.var("conv.c"))?
        } else {
            g.constant(input.clone())
        };
        let layers: Vec<(Var, Var)> = (0..c.num_layers())
            .map(|l| (p.var(&format!("graph.W{l}")), p.var(&format!("graph.b{l}"))))
            .collect();
        let hl = message_pass(g, h0, fused, &layers, c.dropout, dropout_rng)?;
        let prediction = predict_head(g, &[h, hl], p.var("out.theta"), p.var("out.b"))?;
        Ok(ForwardNodes { prediction, attention })
    }

    /// Eval-mode attention for one window, or an error under the no-loc
    /// ablation.
    pub fn attention(&self, input: &Tensor) -> Result<AttentionMatrix> {
        if !self.config.use_location_attention {
            return Err(Error::Config(
                "this model was trained without location attention, so it has no attention matrix".into(),
            ));
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.forward_nodes(&mut g, &p, input, None)?;
        let (a, m, f) = out.attention.expect("attention enabled");
        Ok(AttentionMatrix {
            raw: g.value(a).clone(),
            gate: g.value(m).clone(),
            fused: g.value(f).clone(),
        })
    }
}

impl Predictor for ColaGnn {
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

impl Forecaster for ColaGnn {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph, p: &Bound, input: &Tensor, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        Ok(self.forward_nodes(g, p, input, dropout_rng)?.prediction)
    }
}
