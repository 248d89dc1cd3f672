use std::f64::consts::PI;

use super::Grid2D;
use crate::{Error, Result};

/// Source term of the flow problems.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// `s / (π ι) · exp(-‖θ - x‖² / (2 ι²))`.
    GaussianBump {
        location: [f64; 2],
        strength: f64,
        width: f64,
    },
    Constant(f64),
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::GaussianBump {
                location,
                strength,
                width,
            } => {
                if !(width > 0.0) || !(strength > 0.0) {
                    return Err(Error::validation(format!(
                        "gaussian source needs positive strength and width, got s={strength}, iota={width}"
                    )));
                }
                if !location.iter().all(|v| v.is_finite()) {
                    return Err(Error::validation("source location must be finite"));
                }
                Ok(())
            }
            SourceSpec::Constant(v) if v.is_finite() => Ok(()),
            SourceSpec::Constant(v) => Err(Error::validation(format!("non-finite source {v}"))),
        }
    }

    /// Source sampled at cell centers.
    pub fn sample(&self, grid: &Grid2D) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            SourceSpec::GaussianBump {
                location,
                strength,
                width,
            } => gaussian_source(location, strength, width, grid),
            SourceSpec::Constant(v) => vec![v; grid.n_cells()],
        })
    }
}

/// Gaussian bump source evaluated at the cell centers of `grid`.
pub fn gaussian_source(theta: [f64; 2], s: f64, iota: f64, grid: &Grid2D) -> Vec<f64> {
    let peak = s / (PI * iota);
    let denom = 2.0 * iota * iota;
    grid.centers()
        .map(|(_, x, y)| {
            let r2 = (theta[0] - x).powi(2) + (theta[1] - y).powi(2);
            peak * (-r2 / denom).exp()
        })
        .collect()
}
