//! Run configuration: a TOML file with `[data]`, `[model]`, `[train]` and
//! `[experiment]` sections, then command-line overrides on top.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use colagnn::data::{NormalizationScope, DEFAULT_SPLIT};
use colagnn::experiment::{Ablation, Method, ModelSettings, Settings};
use colagnn::train::TrainConfig;
use colagnn::Execution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub series: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub normalization: NormalizationScope,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            series: None,
            adjacency: None,
            normalization: NormalizationScope::TrainSplit,
            split: DEFAULT_SPLIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub window: usize,
    /// Horizon of `train`.
    pub horizon: usize,
    /// Horizons of `benchmark` and `sweep`.
    pub horizons: Vec<usize>,
    pub method: Method,
    pub methods: Vec<Method>,
    pub ablation: Ablation,
    pub out: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            window: 20,
            horizon: 2,
            horizons: vec![2, 3, 4, 5, 10, 15],
            method: Method::ColaGnn,
            methods: Method::ALL.to_vec(),
            ablation: Ablation::None,
            out: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order and validates.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for (key, value) in overrides {
            set_key(&mut table, key, value.clone())?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let e = &self.experiment;
        if e.window == 0 || e.horizon == 0 || e.horizons.contains(&0) {
            return Err(CliError::Config("experiment.window and horizons must be positive".into()));
        }
        if e.horizons.is_empty() || e.methods.is_empty() {
            return Err(CliError::Config("experiment.horizons and experiment.methods must be nonempty".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> Settings {
        Settings {
            window: self.experiment.window,
            ratios: self.data.split,
            scope: self.data.normalization,
            model: self.model.clone(),
            train: self.train.clone(),
            ablation: self.experiment.ablation,
            exec: Execution::default(),
        }
    }

    pub fn series_path(&self) -> Result<&Path> {
        self.data
            .series
            .as_deref()
            .ok_or_else(|| CliError::Config("data.series is not set (use --data or the [data] section)".into()))
    }

    /// A reloadable TOML snapshot headed by comments that pin the exact
    /// input files and seeds.
    pub fn snapshot(&self, command: &str, seeds: &[u64]) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "# colagnn {} {command}", env!("CARGO_PKG_VERSION")).unwrap();
        for (key, path) in [("data.series", &self.data.series), ("data.adjacency", &self.data.adjacency)] {
            if let Some(p) = path {
                writeln!(out, "# {key} sha256 = {}", sha256_file(p)?).unwrap();
            }
        }
        writeln!(out, "# seeds = {seeds:?}").unwrap();
        out.push_str(&toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?);
        Ok(out)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parses the right-hand side of `--set key=value`: any TOML value, with
/// bare words taken as strings.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got {s:?}")))?;
    Ok((key.trim().to_string(), parse_value(raw.trim())))
}

fn set_key(table: &mut Table, dotted: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key must look like section.key, got {dotted:?}")));
    }
    let section = table
        .entry(parts[0])
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("{} is not a section", parts[0])))?;
    section.insert(parts[1].to_string(), value);
    Ok(())
}

/// Comma-separated list argument such as `2,3,4` or `gar,ar`.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}
