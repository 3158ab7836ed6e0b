use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use colagnn::checkpoint::Checkpoint;
use colagnn::data::Normalizer;
use colagnn::diffcore::Tensor;
use colagnn::experiment::AnyModel;
use colagnn::model::ParamStore;
use colagnn::train::{EpochRecord, TrainObserver};
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    write_text(path, &text)
}

/// Runs `f` against a buffered file and maps I/O failures to `path`.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

/// `location,<names>` header, then one labelled row per location.
pub fn write_matrix(path: &Path, names: &[String], m: &Tensor) -> Result<()> {
    write_with(path, |out| {
        write!(out, "location")?;
        for n in names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for (i, n) in names.iter().enumerate() {
            write!(out, "{n}")?;
            for v in m.row_slice(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    })
}

/// Appends `epoch,train_l1,val_l1,seconds` lines and rewrites the
/// checkpoint whenever validation improves.
pub struct RunLog {
    log: BufWriter<File>,
    log_path: PathBuf,
    checkpoint: PathBuf,
    horizon: usize,
    locations: Vec<String>,
    normalizer: Normalizer,
    template: AnyModel,
}

impl RunLog {
    pub fn new(dir: &Path, horizon: usize, locations: Vec<String>, normalizer: Normalizer, template: AnyModel) -> Result<Self> {
        let log_path = dir.join("train_log.csv");
        let mut log = create(&log_path)?;
        writeln!(log, "epoch,train_l1,val_l1,seconds").map_err(|e| CliError::io(&log_path, e))?;
        Ok(RunLog {
            log,
            log_path,
            checkpoint: dir.join("checkpoint.json"),
            horizon,
            locations,
            normalizer,
            template,
        })
    }

    pub fn save(&self, model: AnyModel) -> Result<()> {
        Checkpoint::new(self.horizon, self.locations.clone(), self.normalizer.clone(), model)?.save(&self.checkpoint)?;
        Ok(())
    }
}

impl TrainObserver for RunLog {
    fn on_epoch(&mut self, r: &EpochRecord) -> colagnn::Result<()> {
        writeln!(self.log, "{},{},{},{:.6}", r.epoch, r.train_l1, r.val_l1, r.seconds)
            .and_then(|_| self.log.flush())
            .map_err(|e| colagnn::Error::Io {
                path: self.log_path.clone(),
                source: e,
            })
    }

    fn on_best(&mut self, _epoch: usize, params: &ParamStore) -> colagnn::Result<()> {
        let model = self.template.with_params(params.clone())?;
        Checkpoint::new(self.horizon, self.locations.clone(), self.normalizer.clone(), model)?.save(&self.checkpoint)
    }
}
