//! Direct `h`-step statistical baselines and the global RNN.

mod arma;
mod linear;
pub mod lstsq;
mod rnn;

pub use arma::{fit_arma, ArmaLocation, ArmaModel, DEFAULT_MA_ORDER};
pub use linear::{fit_direct_linear, DirectLinearModel, LinearVariant};
pub use rnn::{RnnBaseline, RnnConfig};

use crate::data::WindowSet;
use crate::error::Result;
use crate::model::Predictor;

/// Mean squared error per entry of `model` on `set`, in normalized units,
/// with each window's history available when the set carries its series.
pub fn training_mse(model: &impl Predictor, set: &WindowSet) -> Result<f64> {
    let mut total = 0.0;
    for s in &set.samples {
        let p = model.predict_with_history(&s.input, set.history(s))?;
        total += p.iter().zip(&s.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / (set.len() * set.num_locations()).max(1) as f64)
}
