//! The Cola-GNN forward computation and the traits shared with the
//! trainable baselines.

mod cola;
mod config;
pub mod layers;
mod params;

pub use cola::{AttentionMatrix, ColaGnn, ForwardNodes};
pub use config::ColaGnnConfig;
pub use params::{glorot_bound, glorot_init, Bound, Param, ParamKind, ParamStore};

use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::Result;

/// The normalized series a window was cut from: `N×T`, with the window
/// occupying columns `start..start + W`.
#[derive(Clone, Copy, Debug)]
pub struct History<'a> {
    pub series: &'a Tensor,
    pub start: usize,
}

/// Anything that maps an `N×W` normalized window to `N` normalized
/// forecasts.
pub trait Predictor {
    fn window(&self) -> usize;

    fn predict(&self, input: &Tensor) -> Result<Vec<f64>>;

    /// Like `predict`, for models that can also read the weeks observed
    /// before the window. Columns at or after `start + W` must not be read.
    fn predict_with_history(&self, input: &Tensor, history: Option<History<'_>>) -> Result<Vec<f64>> {
        let _ = history;
        self.predict(input)
    }
}

/// A predictor whose parameters are fitted by gradient descent.
pub trait Forecaster: Predictor + Clone + Send + Sync {
    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// Appends one sample's forward pass to `g` using the bound
    /// parameters and returns the `N×1` prediction. Dropout is active
    /// when `dropout_rng` is given.
    fn forward(&self, g: &mut Graph, p: &Bound, input: &Tensor, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Var>;
}
