//! Error metrics, percentile summaries and ensemble field statistics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::Error;
use crate::Result;

/// Levels reported by [`IntervalSummary`].
pub const SUMMARY_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// `‖x̂ − x‖ / ‖x‖`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::validation(format!(
            "estimate has {} entries, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::validation("truth has zero norm"));
    }
    let diff = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Same metric applied to fracture endpoints or any other derived vector.
pub fn relative_error_endpoints(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    relative_error(estimate, truth)
}

/// Linear interpolation between order statistics at `(n−1)p`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    let mut v = checked(values, p)?;
    v.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&v, p))
}

fn checked(values: &[f64], p: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::validation("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("probability {p} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("sample contains non-finite values"));
    }
    Ok(values.to_vec())
}

fn sorted_quantile(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Weighted analogue of [`quantile`]: the k-th order statistic sits at
/// cumulative position `S_{k−1} / (S − w_last)`, which reduces to the
/// unweighted rule for equal weights.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    checked(values, p)?;
    if weights.len() != values.len() {
        return Err(Error::validation("values and weights differ in length"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::validation("weights must be finite and nonnegative"));
    }
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    if pairs.is_empty() {
        return Err(Error::validation("all weights are zero"));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let span = total - pairs[pairs.len() - 1].1;
    if pairs.len() == 1 || span <= 0.0 {
        return Ok(pairs[pairs.len() - 1].0);
    }
    let mut below = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(v, w) in &pairs {
        let pos = below / span;
        if pos >= p {
            return Ok(match prev {
                Some((pv, ppos)) if pos > ppos => pv + (p - ppos) / (pos - ppos) * (v - pv),
                _ => v,
            });
        }
        prev = Some((v, pos));
        below += w;
    }
    Ok(pairs[pairs.len() - 1].0)
}

/// Five-number credible summary of one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub lower95: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub upper95: f64,
}

impl IntervalSummary {
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        let mut v = checked(values, 0.5)?;
        v.sort_by(f64::total_cmp);
        let q = SUMMARY_LEVELS.map(|p| sorted_quantile(&v, p));
        Ok(Self::from_levels(q))
    }

    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        let mut q = [0.0; 5];
        for (o, p) in q.iter_mut().zip(SUMMARY_LEVELS) {
            *o = weighted_quantile(values, weights, p)?;
        }
        Ok(Self::from_levels(q))
    }

    fn from_levels(q: [f64; 5]) -> Self {
        Self {
            lower95: q[0],
            p25: q[1],
            median: q[2],
            p75: q[3],
            upper95: q[4],
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower95 <= x && x <= self.upper95
    }

    pub fn is_ordered(&self) -> bool {
        self.lower95 <= self.p25 && self.p25 <= self.median && self.median <= self.p75 && self.p75 <= self.upper95
    }
}

/// Per-row summaries of a `n × N` sample matrix.
pub fn ensemble_percentiles(samples: &DMatrix<f64>) -> Result<Vec<IntervalSummary>> {
    samples
        .row_iter()
        .map(|r| IntervalSummary::from_sample(&r.iter().copied().collect::<Vec<_>>()))
        .collect()
}

pub fn weighted_ensemble_percentiles(samples: &DMatrix<f64>, weights: &[f64]) -> Result<Vec<IntervalSummary>> {
    samples
        .row_iter()
        .map(|r| IntervalSummary::from_weighted(&r.iter().copied().collect::<Vec<_>>(), weights))
        .collect()
}

/// Credible and prediction intervals at one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorInterval {
    pub credible: IntervalSummary,
    pub prediction: IntervalSummary,
}

/// Credible intervals from predicted states; prediction intervals from the
/// same states plus `replicates` independent `N(0, σ²)` draws per member.
pub fn prediction_intervals<R: Rng + ?Sized>(
    predictions: &DMatrix<f64>,
    sigma: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<SensorInterval>> {
    if !(sigma >= 0.0) || replicates == 0 {
        return Err(Error::validation("need sigma >= 0 and at least one replicate"));
    }
    let mut out = Vec::with_capacity(predictions.nrows());
    for row in predictions.row_iter() {
        let states: Vec<f64> = row.iter().copied().collect();
        let mut noisy = Vec::with_capacity(states.len() * replicates);
        for &s in &states {
            for _ in 0..replicates {
                let z: f64 = StandardNormal.sample(rng);
                noisy.push(s + sigma * z);
            }
        }
        out.push(SensorInterval {
            credible: IntervalSummary::from_sample(&states)?,
            prediction: IntervalSummary::from_sample(&noisy)?,
        });
    }
    Ok(out)
}

/// Pointwise ensemble standard deviation with the `1/N` convention.
pub fn state_std_field(fields: &[Vec<f64>]) -> Result<Vec<f64>> {
    if fields.len() < 2 {
        return Err(Error::validation("need at least two fields"));
    }
    let n = fields[0].len();
    if fields.iter().any(|f| f.len() != n) {
        return Err(Error::validation("fields differ in size"));
    }
    let ne = fields.len() as f64;
    Ok((0..n)
        .map(|p| {
            let mean = fields.iter().map(|f| f[p]).sum::<f64>() / ne;
            (fields.iter().map(|f| (f[p] - mean).powi(2)).sum::<f64>() / ne).sqrt()
        })
        .collect())
}

/// Normalized histogram on equal-width bins spanning the sample range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

pub const DEFAULT_BINS: usize = 30;

pub fn marginal_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    checked(values, 0.5)?;
    if bins == 0 {
        return Err(Error::validation("need at least one bin"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1e-12_f64.max(lo.abs() * 1e-12);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let scale = 1.0 / (values.len() as f64 * width);
    Ok(Histogram {
        edges: (0..=bins).map(|b| lo + b as f64 * width).collect(),
        density: counts.into_iter().map(|c| c * scale).collect(),
    })
}
