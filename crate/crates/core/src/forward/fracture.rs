use std::f64::consts::PI;

use super::PermeabilityField;
use crate::{Error, Result};

/// Straight fracture parallel to the `y` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractureSpec {
    pub x0: f64,
    pub y0: f64,
    pub length: f64,
    pub permeability: f64,
}

impl FractureSpec {
    pub const DEFAULT_PERMEABILITY: f64 = 1e4;

    pub fn new(x0: f64, y0: f64, length: f64) -> Self {
        Self {
            x0,
            y0,
            length,
            permeability: Self::DEFAULT_PERMEABILITY,
        }
    }

    /// Endpoints `(x0, y0 - L/2, x0, y0 + L/2)`.
    pub fn endpoints(&self) -> [f64; 4] {
        let h = 0.5 * self.length;
        [self.x0, self.y0 - h, self.x0, self.y0 + h]
    }
}

/// Background field with `permeability` in every cell the segment crosses.
///
/// The segment occupies the cell column containing `x0`; a cell in that
/// column is fractured when its center lies in the clipped interval
/// `[y0 - L/2, y0 + L/2] ∩ [0, 1]`.
pub fn embed_fracture(spec: &FractureSpec, background: &PermeabilityField) -> Result<PermeabilityField> {
    if ![spec.x0, spec.y0, spec.length].iter().all(|v| v.is_finite()) {
        return Err(Error::validation("fracture geometry must be finite"));
    }
    if !(spec.permeability > 0.0 && spec.permeability.is_finite()) {
        return Err(Error::validation("fracture permeability must be positive"));
    }
    let mut out = background.clone();
    if spec.length <= 0.0 {
        return Ok(out);
    }
    let grid = background.grid();
    let col = ((spec.x0.clamp(0.0, 1.0) * grid.nx() as f64).floor() as usize).min(grid.nx() - 1);
    let lo = (spec.y0 - 0.5 * spec.length).max(0.0);
    let hi = (spec.y0 + 0.5 * spec.length).min(1.0);
    let values = out.values_mut();
    for j in 0..grid.ny() {
        let (_, y) = grid.cell_center(col, j);
        if y >= lo && y <= hi {
            values[grid.cell(col, j)] = spec.permeability;
        }
    }
    Ok(out)
}

/// Componentwise `1/2 + arctan(q)/π`.
pub fn arctan_map(q: &[f64]) -> Result<Vec<f64>> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("arctan map needs finite input"));
    }
    Ok(q.iter().map(|v| 0.5 + v.atan() / PI).collect())
}

pub fn arctan_map_inverse(theta: &[f64]) -> Result<Vec<f64>> {
    theta
        .iter()
        .map(|&t| {
            if t > 0.0 && t < 1.0 {
                Ok((PI * (t - 0.5)).tan())
            } else {
                Err(Error::validation(format!(
                    "arctan map inverse is defined on (0, 1), got {t}"
                )))
            }
        })
        .collect()
}
