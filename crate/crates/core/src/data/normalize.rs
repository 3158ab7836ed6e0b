use serde::{Deserialize, Serialize};

use super::dataset::EpiDataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Which weeks supply the per-location extrema.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationScope {
    /// Training split only.
    #[default]
    TrainSplit,
    /// The whole series before splitting.
    FullSeries,
}

/// Per-location min-max scaling `x' = (x − min) / (max − min)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(ds: &EpiDataset) -> Result<Self> {
        if ds.num_weeks() == 0 {
            return Err(Error::Validation("cannot fit a normalizer on an empty split".into()));
        }
        let (mut min, mut max) = (Vec::new(), Vec::new());
        for i in 0..ds.num_locations() {
            let s = ds.series(i);
            min.push(s.iter().copied().fold(f64::INFINITY, f64::min));
            max.push(s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Normalizer { min, max })
    }

    pub fn num_locations(&self) -> usize {
        self.min.len()
    }

    fn range(&self, location: usize) -> f64 {
        self.max[location] - self.min[location]
    }

    /// A constant location maps to 0.
    pub fn apply_value(&self, location: usize, x: f64) -> f64 {
        let r = self.range(location);
        if r > 0.0 {
            (x - self.min[location]) / r
        } else {
            0.0
        }
    }

    /// Inverse of [`apply_value`](Self::apply_value); a constant location
    /// inverts to its constant.
    pub fn invert_value(&self, location: usize, z: f64) -> f64 {
        let r = self.range(location);
        if r > 0.0 {
            z * r + self.min[location]
        } else {
            self.min[location]
        }
    }

    pub fn apply(&self, ds: &EpiDataset) -> Result<EpiDataset> {
        if ds.num_locations() != self.num_locations() {
            return Err(Error::shape("normalize", &[ds.num_locations()], &[self.num_locations()]));
        }
        let (n, t) = (ds.num_locations(), ds.num_weeks());
        let mut data = Vec::with_capacity(n * t);
        for i in 0..n {
            data.extend(ds.series(i).iter().map(|&x| self.apply_value(i, x)));
        }
        Ok(ds.with_values(Tensor::new(vec![n, t], data)?))
    }
}
