//! Ensembles, Monte Carlo covariance estimators, importance weights and
//! systematic resampling.
//!
//! All covariance estimators normalize by `1/N_e`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::symmetrize;
use crate::{Error, Result};

/// `n_params × n_members` matrix whose columns are the members.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    samples: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() < 2 || samples.nrows() == 0 {
            return Err(Error::validation(format!(
                "ensemble needs at least 2 members of nonzero dimension, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("ensemble has non-finite entries"));
        }
        Ok(Self { samples })
    }

    pub fn from_members(members: &[DVector<f64>]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::validation("empty member list"));
        }
        let n = members[0].len();
        if members.iter().any(|m| m.len() != n) {
            return Err(Error::validation("members differ in dimension"));
        }
        Self::new(DMatrix::from_columns(members))
    }

    pub fn n_params(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_members(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> DMatrix<f64> {
        self.samples
    }

    pub fn member(&self, j: usize) -> DVector<f64> {
        self.samples.column(j).into_owned()
    }

    pub fn mean(&self) -> DVector<f64> {
        ensemble_mean(self)
    }

    /// Ensemble with only the parameter rows at `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&r| r >= self.n_params()) {
            return Err(Error::validation("row index beyond ensemble dimension"));
        }
        Self::new(self.samples.select_rows(rows))
    }

    /// Members reordered or duplicated by `indices`.
    pub fn select_members(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&j| j >= self.n_members()) {
            return Err(Error::validation("member index beyond ensemble size"));
        }
        Self::new(self.samples.select_columns(indices))
    }
}

pub fn ensemble_mean(ens: &Ensemble) -> DVector<f64> {
    ens.samples.column_mean()
}

fn centered(m: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= center;
    }
    c
}

/// `(1/N_e) Σ (θ_j - θ̄)(θ_j - θ̄)ᵀ`.
pub fn mc_cov_theta(ens: &Ensemble) -> DMatrix<f64> {
    let a = centered(&ens.samples, &ens.mean());
    symmetrize(&(&a * a.transpose() / ens.n_members() as f64))
}

fn check_predictions(ens: &Ensemble, predictions: &DMatrix<f64>) -> Result<()> {
    if predictions.ncols() != ens.n_members() {
        return Err(Error::validation(format!(
            "{} predictions for {} members",
            predictions.ncols(),
            ens.n_members()
        )));
    }
    Ok(())
}

/// `(1/N_e) Σ (θ_j - θ̄)(g_j - ḡ)ᵀ`.
pub fn mc_cross_cov(ens: &Ensemble, predictions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_predictions(ens, predictions)?;
    let a = centered(&ens.samples, &ens.mean());
    let b = centered(predictions, &predictions.column_mean());
    Ok(&a * b.transpose() / ens.n_members() as f64)
}

/// `(1/N_e) Σ (g_j - ḡ)(g_j - ḡ)ᵀ`.
pub fn mc_data_cov(predictions: &DMatrix<f64>) -> DMatrix<f64> {
    let b = centered(predictions, &predictions.column_mean());
    symmetrize(&(&b * b.transpose() / predictions.ncols() as f64))
}

/// Membership-weighted covariance blocks of one mixture component.
#[derive(Debug, Clone)]
pub struct WeightedCovs {
    pub c_theta: DMatrix<f64>,
    pub c_theta_d: DMatrix<f64>,
    pub c_dd: DMatrix<f64>,
    /// `n_i = Σ_j γ_ij`.
    pub mass: f64,
}

/// Covariances about a supplied center `mu` (parameters) and `pred_center`
/// (predictions), weighted by `gamma_row` and divided by its sum.
pub fn weighted_mc_covs(
    ens: &Ensemble,
    gamma_row: &[f64],
    mu: &DVector<f64>,
    predictions: &DMatrix<f64>,
    pred_center: &DVector<f64>,
) -> Result<WeightedCovs> {
    check_predictions(ens, predictions)?;
    if gamma_row.len() != ens.n_members() || mu.len() != ens.n_params() || pred_center.len() != predictions.nrows() {
        return Err(Error::validation("weighted covariance inputs differ in shape"));
    }
    let mass: f64 = gamma_row.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateComponent(0));
    }
    let mut a = centered(&ens.samples, mu);
    let mut b = centered(predictions, pred_center);
    for (j, g) in gamma_row.iter().enumerate() {
        let s = g.max(0.0).sqrt();
        a.column_mut(j).scale_mut(s);
        b.column_mut(j).scale_mut(s);
    }
    Ok(WeightedCovs {
        c_theta: symmetrize(&(&a * a.transpose() / mass)),
        c_theta_d: &a * b.transpose() / mass,
        c_dd: symmetrize(&(&b * b.transpose() / mass)),
        mass,
    })
}

/// Normalized importance weights together with the scale they were built at.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    rho: f64,
}

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
            rho: 1.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `1 / Σ w_j²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.values.iter().map(|w| w * w).sum::<f64>()
    }
}

/// `w_j ∝ exp(Δ_j / ρ)`, evaluated with the maximum subtracted.
pub fn normalize_weights(delta: &[f64], rho: f64) -> Result<WeightVector> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::validation(format!("weight scale must be positive, got {rho}")));
    }
    if delta.is_empty() {
        return Err(Error::validation("no log-weights given"));
    }
    if delta.iter().any(|d| d.is_nan() || *d == f64::INFINITY) {
        return Err(Error::DegenerateWeights("log-weights contain NaN or +inf".into()));
    }
    let max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights("every log-weight is -inf".into()));
    }
    let mut values: Vec<f64> = delta.iter().map(|d| ((d - max) / rho).exp()).collect();
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= total;
    }
    Ok(WeightVector { values, rho })
}

/// `draws` member indices chosen by systematic resampling with offset
/// `u ∈ [0, 1)`.
///
/// Positions are `(u + k) / draws`; member `j` is chosen for every position in
/// `[c_{j-1}, c_j)` of the cumulative weights.
pub fn systematic_indices(weights: &[f64], draws: usize, u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(draws);
    let mut cum = 0.0;
    let mut j = 0;
    for k in 0..draws {
        let pos = (u + k as f64) / draws as f64;
        while j < n - 1 && cum + weights[j] / total <= pos {
            cum += weights[j] / total;
            j += 1;
        }
        // skip trailing zero-weight members reached by rounding
        while weights[j] == 0.0 && j > 0 {
            j -= 1;
        }
        out.push(j);
    }
    out
}

/// Systematic resampling of `ens` by `weights`; also returns the chosen
/// member indices.
pub fn systematic_resample<R: Rng + ?Sized>(
    ens: &Ensemble,
    weights: &WeightVector,
    rng: &mut R,
) -> Result<(Ensemble, Vec<usize>)> {
    if weights.values.len() != ens.n_members() {
        return Err(Error::validation("weight count differs from ensemble size"));
    }
    let u: f64 = rng.random();
    let idx = systematic_indices(&weights.values, weights.values.len(), u);
    Ok((ens.select_members(&idx)?, idx))
}
