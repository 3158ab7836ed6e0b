//! Self-describing JSON checkpoints: named parameter tensors with their
//! shapes and row-major values, the model configuration and the
//! normalizer. Floats are written in shortest round-trip form, so a save
//! and load reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::experiment::{AnyModel, Method};
use crate::model::Predictor;

pub const FORMAT: &str = "colagnn-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub method: Method,
    pub horizon: usize,
    pub window: usize,
    pub locations: Vec<String>,
    pub normalizer: Normalizer,
    pub model: AnyModel,
}

impl Checkpoint {
    pub fn new(horizon: usize, locations: Vec<String>, normalizer: Normalizer, model: AnyModel) -> Result<Self> {
        let ck = Checkpoint {
            format: FORMAT.to_string(),
            method: model.method(),
            horizon,
            window: model.window(),
            locations,
            normalizer,
            model,
        };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {:?}, expected {FORMAT:?}", self.format)));
        }
        if self.method != self.model.method() {
            return Err(Error::Checkpoint(format!(
                "header says {} but the stored model is {}",
                self.method,
                self.model.method()
            )));
        }
        if self.window != self.model.window() {
            return Err(Error::Checkpoint(format!(
                "header window {} disagrees with the model window {}",
                self.window,
                self.model.window()
            )));
        }
        if self.normalizer.num_locations() != self.locations.len() {
            return Err(Error::Checkpoint(format!(
                "{} location names but a normalizer for {}",
                self.locations.len(),
                self.normalizer.num_locations()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Checkpoint("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
