//! Twin-experiment truths and noisy data.
//!
//! Data come from a solve on the finer data grid (and, for time-dependent
//! problems, the finer data step) so the inversion never sees its own
//! discretization.

use iesis_core::forward::{arctan_map_inverse, Grid2D};
use iesis_core::ies::{standard_normal, ForwardModel, ObservationSetup};
use iesis_core::oracle::LinearModel;
use iesis_core::rng::{Stream, Streams};
use iesis_core::{DMatrix, DVector};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{ExperimentError, Result};
use crate::models::{grids, sensors, ChannelModel, FractureModel, SourceModel};

const CHANNEL_BITMAP: &str = include_str!("../assets/channel_facies.txt");

/// Channel indicator (`true` inside a channel) sampled at the cell centers
/// of `grid` from the bundled bitmap.
pub fn channel_indicator(grid: Grid2D) -> Vec<bool> {
    let rows: Vec<&[u8]> = CHANNEL_BITMAP.lines().map(str::as_bytes).filter(|r| !r.is_empty()).collect();
    let (h, w) = (rows.len(), rows[0].len());
    grid.centers()
        .map(|(_, x, y)| {
            let col = ((x * w as f64) as usize).min(w - 1);
            let row = (((1.0 - y) * h as f64) as usize).min(h - 1);
            rows[row][col] == b'#'
        })
        .collect()
}

/// Log-permeability of the channel truth on `grid`.
pub fn channel_truth(grid: Grid2D, low: f64, high: f64) -> Vec<f64> {
    channel_indicator(grid)
        .into_iter()
        .map(|c| if c { high } else { low })
        .collect()
}

/// Synthetic observations with the truth that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: DVector<f64>,
    pub sigma: f64,
    /// Noise-free data from the data-grid solve.
    pub noiseless: DVector<f64>,
    /// Physical truth parameters (source location, fracture parameters or
    /// the linear coefficients).
    pub truth: Option<Vec<f64>>,
    /// Truth field on the inversion grid (channel experiment).
    pub truth_field: Option<Vec<f64>>,
    /// Forward matrix of the linear problem.
    pub linear: Option<LinearModel>,
}

impl SyntheticData {
    /// Observation setup for the inversion; needs `σ > 0`.
    pub fn observation(&self) -> Result<ObservationSetup> {
        Ok(ObservationSetup::new(self.data.clone(), self.sigma)?)
    }
}

fn add_noise(clean: &DVector<f64>, sigma: f64, streams: &Streams) -> DVector<f64> {
    let z = standard_normal(clean.len(), 1, &mut streams.get(Stream::Noise, 0, 0));
    clean + z.column(0) * sigma
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| ExperimentError::config(format!("experiment needs a [{name}] section")))
}

pub fn generate_synthetic_data(cfg: &ExperimentConfig) -> Result<SyntheticData> {
    let streams = Streams::new(cfg.seed);
    match cfg.experiment {
        ExperimentKind::SourceLocation => {
            let (_, fine) = grids(cfg)?;
            let obs = section(&cfg.observation, "observation")?;
            let src = section(&cfg.source, "source")?;
            let model = SourceModel::new(fine, sensors(obs)?, src.strength, src.width)?;
            let clean = model.predict(&DVector::from_row_slice(&src.truth))?;
            Ok(SyntheticData {
                data: add_noise(&clean, obs.sigma, &streams),
                sigma: obs.sigma,
                noiseless: clean,
                truth: Some(src.truth.to_vec()),
                truth_field: None,
                linear: None,
            })
        }
        ExperimentKind::ChannelDct => {
            let (coarse, fine) = grids(cfg)?;
            let obs = section(&cfg.observation, "observation")?;
            let time = section(&cfg.time, "time")?;
            let ch = section(&cfg.channel, "channel")?;
            let model = ChannelModel::new(fine, sensors(obs)?, ch.source, time.data_dt, time.horizon);
            let truth = DVector::from_vec(channel_truth(fine, ch.facies_low, ch.facies_high));
            let clean = model.predict(&truth)?;
            Ok(SyntheticData {
                data: add_noise(&clean, obs.sigma, &streams),
                sigma: obs.sigma,
                noiseless: clean,
                truth: None,
                truth_field: Some(channel_truth(coarse, ch.facies_low, ch.facies_high)),
                linear: None,
            })
        }
        ExperimentKind::FractureFractional => {
            let (_, fine) = grids(cfg)?;
            let obs = section(&cfg.observation, "observation")?;
            let time = section(&cfg.time, "time")?;
            let fr = section(&cfg.fracture, "fracture")?;
            let model = FractureModel::new(fine, sensors(obs)?, fr, time.data_dt, time.horizon);
            let q = arctan_map_inverse(&fr.truth)?;
            let clean = model.predict(&DVector::from_vec(q))?;
            Ok(SyntheticData {
                data: add_noise(&clean, obs.sigma, &streams),
                sigma: obs.sigma,
                noiseless: clean,
                truth: Some(fr.truth.to_vec()),
                truth_field: None,
                linear: None,
            })
        }
        ExperimentKind::CustomLinear => {
            let lin = section(&cfg.linear, "linear")?;
            let g = standard_normal(lin.n_data, lin.n_params, &mut streams.get(Stream::Noise, 0, 1));
            let truth = standard_normal(lin.n_params, 1, &mut streams.get(Stream::Noise, 0, 2)).column(0).into_owned();
            let c_d = DMatrix::identity(lin.n_data, lin.n_data) * (lin.sigma * lin.sigma);
            let model = LinearModel::new(g, c_d)?;
            let clean = model.g() * &truth;
            Ok(SyntheticData {
                data: add_noise(&clean, lin.sigma, &streams),
                sigma: lin.sigma,
                noiseless: clean,
                truth: Some(truth.as_slice().to_vec()),
                truth_field: None,
                linear: Some(model),
            })
        }
    }
}
