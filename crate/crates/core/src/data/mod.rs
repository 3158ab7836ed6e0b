//! Series and adjacency ingestion, min-max normalization, date-based
//! splits and direct `h`-step windows.

mod adjacency;
mod dataset;
mod normalize;
pub mod synthetic;
mod window;

pub use adjacency::{load_adjacency, write_adjacency, AdjacencyMatrix};
pub use dataset::{load_series, split_by_time, split_points, write_series, EpiDataset};
pub use normalize::{NormalizationScope, Normalizer};
pub use window::{make_windows, window_at, window_count, WindowSample, WindowSet};

use std::sync::Arc;

use crate::error::Result;

pub const DEFAULT_SPLIT: [f64; 3] = [0.5, 0.2, 0.3];

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub window: usize,
    pub horizon: usize,
    pub ratios: [f64; 3],
    pub scope: NormalizationScope,
}

impl SplitSpec {
    pub fn new(window: usize, horizon: usize) -> Self {
        SplitSpec {
            window,
            horizon,
            ratios: DEFAULT_SPLIT,
            scope: NormalizationScope::TrainSplit,
        }
    }
}

/// Normalized train/val/test windows plus the fitted normalizer.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub normalizer: Normalizer,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

/// Splits by date (the same boundaries for every horizon), fits the
/// normalizer and cuts windows inside each split.
pub fn prepare(ds: &EpiDataset, spec: &SplitSpec) -> Result<SplitData> {
    let (train, val, test) = split_by_time(ds, spec.ratios)?;
    let normalizer = match spec.scope {
        NormalizationScope::TrainSplit => Normalizer::fit(&train)?,
        NormalizationScope::FullSeries => Normalizer::fit(ds)?,
    };
    // Every split sees the weeks observed before it.
    let full = Arc::new(normalizer.apply(ds)?.values().clone());
    let windows = |part: &EpiDataset, name: &str| -> Result<WindowSet> {
        let mut set = make_windows(&normalizer.apply(part)?, spec.window, spec.horizon, name)?;
        set.series = Some(full.clone());
        set.series_offset = 0;
        Ok(set)
    };
    Ok(SplitData {
        train: windows(&train, "train")?,
        val: windows(&val, "validation")?,
        test: windows(&test, "test")?,
        normalizer,
    })
}
