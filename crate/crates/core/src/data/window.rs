use std::sync::Arc;

use super::dataset::EpiDataset;
use crate::model::History;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One direct `h`-step training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `N×W` normalized history.
    pub input: Tensor,
    /// Normalized values at the target week, one per location.
    pub target: Vec<f64>,
    /// Index of the target week in the full series.
    pub target_week: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub samples: Vec<WindowSample>,
    pub window: usize,
    pub horizon: usize,
    /// Normalized observations the windows were cut from, as an `N×T`
    /// matrix whose column 0 is week `series_offset` of the full series.
    /// It may extend before the split so windows can see earlier weeks.
    pub series: Option<Arc<Tensor>>,
    pub series_offset: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_locations(&self) -> usize {
        self.samples.first().map_or(0, |s| s.target.len())
    }

    /// Where `sample`'s window sits in `series`, if the set carries one.
    pub fn history(&self, sample: &WindowSample) -> Option<History<'_>> {
        let series = self.series.as_deref()?;
        let start = (sample.target_week + 1).checked_sub(self.window + self.horizon + self.series_offset)?;
        Some(History { series, start })
    }
}

/// Number of windows a split of `length` weeks yields.
pub fn window_count(length: usize, window: usize, horizon: usize) -> usize {
    (length + 1).saturating_sub(window + horizon)
}

/// The `N×W` slice of weeks `[start, start + window)`.
pub fn window_at(ds: &EpiDataset, start: usize, window: usize) -> Tensor {
    let n = ds.num_locations();
    let mut data = Vec::with_capacity(n * window);
    for i in 0..n {
        data.extend_from_slice(&ds.series(i)[start..start + window]);
    }
    Tensor::new(vec![n, window], data).expect("window shape")
}

/// Inputs are weeks `[s, s+W)`, the target is week `s+W+h−1`, for every
/// start `s` that keeps both inside `ds`.
pub fn make_windows(ds: &EpiDataset, window: usize, horizon: usize, split: &str) -> Result<WindowSet> {
    if window == 0 || horizon == 0 {
        return Err(Error::Config(format!("window and horizon must be positive, got {window} and {horizon}")));
    }
    let length = ds.num_weeks();
    if length < window + horizon {
        return Err(Error::Window {
            split: split.to_string(),
            length,
            window,
            horizon,
        });
    }
    let samples = (0..window_count(length, window, horizon))
        .map(|s| {
            let t = s + window + horizon - 1;
            WindowSample {
                input: window_at(ds, s, window),
                target: (0..ds.num_locations()).map(|i| ds.value(i, t)).collect(),
                target_week: ds.offset() + t,
            }
        })
        .collect();
    Ok(WindowSet {
        samples,
        window,
        horizon,
        series: Some(Arc::new(ds.values().clone())),
        series_offset: ds.offset(),
    })
}
