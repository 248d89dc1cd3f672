//! Blockwise regularized projection of continuous field values.
//!
//! Each block value `Ã` is replaced by the minimizer over `[A_l, A_u]` of
//! `G(A) = (Ã - A)² + τ (b1 A - b2)(b3 - b4 A)`, which is convex when
//! `1 - τ b1 b4 > 0`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostProcessSpec {
    pub tau: f64,
    pub b: [f64; 4],
    pub lower: f64,
    pub upper: f64,
}

impl PostProcessSpec {
    pub fn new(tau: f64, b: [f64; 4], lower: f64, upper: f64) -> Result<Self> {
        let spec = Self { tau, b, lower, upper };
        spec.validate()?;
        Ok(spec)
    }

    /// `T(A) = A(1 - A)` on `[0, 1]` with weight `tau`.
    pub fn indicator(tau: f64) -> Result<Self> {
        Self::new(tau, [1.0, 0.0, 1.0, 1.0], 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::validation(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !self.b.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("penalty coefficients must be finite"));
        }
        if !(1.0 - self.tau * self.b[0] * self.b[3] > 0.0) {
            return Err(Error::validation("penalty violates 1 - tau*b1*b4 > 0"));
        }
        if !(self.lower < self.upper) {
            return Err(Error::validation(format!(
                "bounds [{}, {}] are empty",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Unconstrained minimizer of `G`.
    pub fn interior(&self, a_tilde: f64) -> f64 {
        let [b1, b2, b3, b4] = self.b;
        (2.0 * a_tilde - self.tau * (b1 * b3 + b2 * b4)) / (2.0 * (1.0 - self.tau * b1 * b4))
    }

    /// `G(A)` for the block value `a_tilde`.
    pub fn objective(&self, a_tilde: f64, a: f64) -> f64 {
        let [b1, b2, b3, b4] = self.b;
        (a_tilde - a).powi(2) + self.tau * (b1 * a - b2) * (b3 - b4 * a)
    }
}

pub fn project_block(a_tilde: f64, spec: &PostProcessSpec) -> f64 {
    spec.interior(a_tilde).clamp(spec.lower, spec.upper)
}

pub fn project_field(field: &[f64], spec: &PostProcessSpec) -> Vec<f64> {
    field.iter().map(|&v| project_block(v, spec)).collect()
}

/// Affine correspondence between two facies values and `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaciesScale {
    pub low: f64,
    pub high: f64,
}

impl FaciesScale {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::validation(format!("facies values need low < high, got {low}, {high}")));
        }
        Ok(Self { low, high })
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.low) / (self.high - self.low)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.low + u * (self.high - self.low)
    }

    /// Projects `field` (in facies units) through the unit-interval `spec`.
    pub fn project(&self, field: &[f64], spec: &PostProcessSpec) -> Vec<f64> {
        field
            .iter()
            .map(|&v| self.from_unit(project_block(self.to_unit(v), spec)))
            .collect()
    }
}
