use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColaGnnConfig {
    /// Number of locations; the gate weights are `N×N`.
    pub locations: usize,
    /// Input window length `W`.
    pub window: usize,
    /// RNN hidden size `D`.
    pub hidden: usize,
    /// Attention inner size `d_a`.
    pub attn_dim: usize,
    /// Temporal filter count `K`.
    pub filters: usize,
    /// Temporal filter length `Q`.
    pub filter_len: usize,
    /// Output widths of the message-passing layers, `F^(1)..F^(L)`.
    pub graph_dims: Vec<usize>,
    pub norm_p: f64,
    pub norm_eps: f64,
    pub dropout: f64,
    pub use_temporal_conv: bool,
    pub use_location_attention: bool,
}

impl ColaGnnConfig {
    /// Defaults: `D=20`, `d_a=D/2`, `K=10`, `Q=W`, two graph layers of
    /// width `K`, `p=2`, `ε=1e-12`, dropout 0.2.
    pub fn new(locations: usize, window: usize) -> Self {
        ColaGnnConfig {
            locations,
            window,
            hidden: 20,
            attn_dim: 10,
            filters: 10,
            filter_len: window,
            graph_dims: vec![10, 10],
            norm_p: 2.0,
            norm_eps: 1e-12,
            dropout: 0.2,
            use_temporal_conv: true,
            use_location_attention: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("locations", self.locations),
            ("window", self.window),
            ("hidden", self.hidden),
            ("attn_dim", self.attn_dim),
            ("filters", self.filters),
            ("filter_len", self.filter_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.graph_dims.is_empty() || self.graph_dims.contains(&0) {
            return Err(Error::Config(format!(
                "model.graph_dims needs at least one layer and positive widths, got {:?}",
                self.graph_dims
            )));
        }
        if self.use_temporal_conv && self.filter_len > self.window {
            return Err(Error::Config(format!(
                "model.filter_len {} exceeds the window {}",
                self.filter_len, self.window
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.norm_p < 1.0 || self.norm_eps <= 0.0 {
            return Err(Error::Config(format!(
                "model.norm_p must be >= 1 and model.norm_eps > 0, got {} and {}",
                self.norm_p, self.norm_eps
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.graph_dims.len()
    }

    /// Width of the node features entering the first graph layer: `K`,
    /// or `W` when raw windows replace the convolution features.
    pub fn graph_input_width(&self) -> usize {
        if self.use_temporal_conv {
            self.filters
        } else {
            self.window
        }
    }

    pub fn graph_output_width(&self) -> usize {
        *self.graph_dims.last().expect("validated config has graph layers")
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let (n, d, da) = (self.locations, self.hidden, self.attn_dim);
        let rnn = d + d * d + d;
        let attention = if self.use_location_attention {
            2 * da * d + da + da + 1 + n * n + 1
        } else {
            0
        };
        let conv = if self.use_temporal_conv { self.filters * self.filter_len } else { 0 };
        let mut graph = 0;
        let mut width = self.graph_input_width();
        for &f in &self.graph_dims {
            graph += f * width + f;
            width = f;
        }
        let output = d + width + 1;
        rnn + attention + conv + graph + output
    }
}
