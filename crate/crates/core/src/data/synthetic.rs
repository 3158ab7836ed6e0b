//! Phase-lagged seasonal benchmark generator.
//!
//! Every location follows the same sharpened annual cosine, shifted by a
//! location-specific lag. Each season's peak week and height are jittered
//! jointly for all locations, so early locations carry information about
//! the timing of later ones. Locations whose lags are close are adjacent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adjacency::AdjacencyMatrix;
use super::dataset::EpiDataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub locations: usize,
    pub weeks: usize,
    pub seed: u64,
    pub period: f64,
    /// Largest location lag, in weeks.
    pub max_lag: f64,
    /// Season peaks move by up to this many weeks, shared by all locations.
    pub peak_jitter: f64,
    /// Season heights are scaled by `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Exponent applied to the raised cosine; larger is more peaked.
    pub sharpness: f64,
    /// Off-season level relative to the peak.
    pub baseline: f64,
    /// Multiplicative noise standard deviation.
    pub noise: f64,
    /// Peak count of the smallest location.
    pub scale: f64,
    /// Locations whose lags differ by at most this many weeks are adjacent.
    pub adjacency_lag: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            locations: 10,
            weeks: 500,
            seed: 7,
            period: 52.0,
            max_lag: 12.0,
            peak_jitter: 6.0,
            amplitude_jitter: 0.4,
            sharpness: 6.0,
            baseline: 0.08,
            noise: 0.05,
            scale: 1000.0,
            adjacency_lag: 3.0,
        }
    }
}

pub struct SyntheticData {
    pub dataset: EpiDataset,
    pub adjacency: AdjacencyMatrix,
    pub lags: Vec<f64>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.locations < 2 || cfg.weeks == 0 || cfg.period <= 0.0 {
        return Err(Error::Config(format!(
            "synthetic data needs >= 2 locations, >= 1 week and a positive period, got {cfg:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.locations;

    let mut lags: Vec<f64> = (0..n).map(|i| cfg.max_lag * i as f64 / (n - 1) as f64).collect();
    lags.shuffle(&mut rng);
    let scales: Vec<f64> = (0..n).map(|_| cfg.scale * rng.random_range(1.0..3.0)).collect();

    let seasons = (cfg.weeks as f64 / cfg.period).ceil() as usize + 2;
    let shifts: Vec<f64> = (0..seasons)
        .map(|_| if cfg.peak_jitter > 0.0 { rng.random_range(-cfg.peak_jitter..=cfg.peak_jitter) } else { 0.0 })
        .collect();
    let heights: Vec<f64> = (0..seasons)
        .map(|_| {
            if cfg.amplitude_jitter > 0.0 {
                1.0 + rng.random_range(-cfg.amplitude_jitter..=cfg.amplitude_jitter)
            } else {
                1.0
            }
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;

    let half = cfg.period / 2.0;
    let mut data = Vec::with_capacity(n * cfg.weeks);
    for i in 0..n {
        for t in 0..cfg.weeks {
            let mut level = cfg.baseline;
            // Season k peaks at week k·period + period/2 + shift_k, minus one
            // period so the series opens mid-season.
            for k in 0..seasons {
                let peak = (k as f64 - 1.0) * cfg.period + half + shifts[k] + lags[i];
                let u = t as f64 - peak;
                if u.abs() < half {
                    let c = 0.5 * (1.0 + (std::f64::consts::TAU * u / cfg.period).cos());
                    level += heights[k] * c.powf(cfg.sharpness);
                }
            }
            let value = scales[i] * level * (1.0 + noise.sample(&mut rng));
            data.push(value.max(0.0).round());
        }
    }

    let locations = (0..n).map(|i| format!("loc{:02}", i + 1)).collect();
    let weeks = (0..cfg.weeks).map(|t| format!("w{:04}", t + 1)).collect();
    let dataset = EpiDataset::new(locations, weeks, Tensor::new(vec![n, cfg.weeks], data)?)?;

    let mut raw = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if (lags[i] - lags[j]).abs() <= cfg.adjacency_lag {
                raw.set(i, j, 1.0);
            }
        }
    }
    let adjacency = AdjacencyMatrix::from_raw(raw)?;
    Ok(SyntheticData { dataset, adjacency, lags })
}
