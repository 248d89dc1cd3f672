//! Iterative ensemble smoother combined with linear-map implicit sampling.
//!
//! One iteration moves every member with a damped Gauss-Newton step built
//! from Monte Carlo covariances, takes the mean of the moved ensemble as the
//! MAP point and the damped covariance update as the inverse Hessian, maps
//! standard-normal draws through `θ = μ̃ + L ξ`, weights them against the
//! exact objective and resamples.
//!
//! [`run_gaussian_ies_is`], [`run_dct_ies_is`] and [`run_gmm_ies_is`] drive
//! the three variants.

mod driver;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ensemble::{mc_cov_theta, mc_cross_cov, mc_data_cov, normalize_weights, Ensemble, WeightVector};
use crate::gmm::GaussianMixture;
use crate::linalg::{cholesky_with_jitter, clip_to_spd, symmetrize};
use crate::rng::{Stream, Streams};
use crate::{Error, Result};

pub use driver::{
    analysis_mixture, run_dct_ies_is, run_gaussian_ies_is, run_gmm_ies_is, DctSetup, FieldProjection, GmmSettings,
    IesSettings, InversionResult, IterationRecord,
};

/// Parameter-to-data map `g`.
pub trait ForwardModel: Sync {
    fn n_params(&self) -> usize;
    fn n_data(&self) -> usize;
    fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<T: ForwardModel + ?Sized> ForwardModel for &T {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn n_data(&self) -> usize {
        (**self).n_data()
    }
    fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).predict(theta)
    }
}

/// Evaluates `g` on every column; failures stay in place.
pub fn predict_columns(model: &dyn ForwardModel, samples: &DMatrix<f64>) -> Vec<Result<DVector<f64>>> {
    (0..samples.ncols())
        .into_par_iter()
        .map(|j| {
            let p = model.predict(&samples.column(j).into_owned())?;
            if p.len() != model.n_data() {
                return Err(Error::validation(format!(
                    "forward model returned {} values, expected {}",
                    p.len(),
                    model.n_data()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver("non-finite prediction".into()));
            }
            Ok(p)
        })
        .collect()
}

/// Gaussian prior `N(θ_pr, C_θ)`.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PriorSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) || mean.is_empty() {
            return Err(Error::validation("prior mean and covariance differ in dimension"));
        }
        let chol = Cholesky::new(symmetrize(&cov))
            .ok_or_else(|| Error::validation("prior covariance is not positive definite"))?;
        Ok(Self { mean, cov, chol })
    }

    /// `N(0, I)`.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_members: usize, rng: &mut R) -> Result<Ensemble> {
        let z = standard_normal(self.dim(), n_members, rng);
        let mut s = self.chol.l() * z;
        for mut c in s.column_iter_mut() {
            c += &self.mean;
        }
        Ensemble::new(s)
    }

    /// `C_θ⁻¹ (θ - θ_pr)` for every column.
    pub fn whiten_deviations(&self, samples: &DMatrix<f64>) -> DMatrix<f64> {
        let mut dev = samples.clone();
        for mut c in dev.column_iter_mut() {
            c -= &self.mean;
        }
        self.chol.solve(&dev)
    }

    /// `½ (θ - θ_pr)ᵀ C_θ⁻¹ (θ - θ_pr)`.
    pub fn misfit(&self, theta: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&(theta - &self.mean))
            .expect("invertible factor");
        0.5 * z.norm_squared()
    }

    /// Marginal on the coordinates `rows`.
    pub fn restrict(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&r| r >= self.dim()) {
            return Err(Error::validation("prior restriction beyond dimension"));
        }
        Self::new(self.mean.select_rows(rows), self.cov.select_rows(rows).select_columns(rows))
    }
}

/// Observed data with i.i.d. Gaussian noise of standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSetup {
    data: DVector<f64>,
    sigma: f64,
}

impl ObservationSetup {
    pub fn new(data: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!("noise level must be positive, got {sigma}")));
        }
        if data.iter().any(|v| !v.is_finite()) || data.is_empty() {
            return Err(Error::validation("data must be a nonempty finite vector"));
        }
        Ok(Self { data, sigma })
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `C_D = σ² I`.
    pub fn c_d(&self) -> DMatrix<f64> {
        DMatrix::identity(self.len(), self.len()) * (self.sigma * self.sigma)
    }

    /// `½ ‖d - g‖² / σ²`.
    pub fn misfit(&self, prediction: &DVector<f64>) -> f64 {
        0.5 * (&self.data - prediction).norm_squared() / (self.sigma * self.sigma)
    }
}

/// `W(θ) = ½‖d - g(θ)‖²/σ² + ½(θ - θ_pr)ᵀ C_θ⁻¹ (θ - θ_pr)`.
pub fn objective(prior: &PriorSpec, obs: &ObservationSetup, theta: &DVector<f64>, prediction: &DVector<f64>) -> f64 {
    obs.misfit(prediction) + prior.misfit(theta)
}

/// `n × m` matrix of independent standard-normal draws (column by column).
pub fn standard_normal<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    z
}

/// Covariance blocks entering one smoother update.
#[derive(Debug, Clone)]
pub struct CovarianceBlocks {
    pub c_theta: DMatrix<f64>,
    pub c_theta_d: DMatrix<f64>,
    pub c_dd: DMatrix<f64>,
}

impl CovarianceBlocks {
    /// Unweighted estimators about the ensemble and prediction means.
    pub fn from_ensemble(ens: &Ensemble, predictions: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            c_theta: mc_cov_theta(ens),
            c_theta_d: mc_cross_cov(ens, predictions)?,
            c_dd: mc_data_cov(predictions),
        })
    }
}

/// `K = C_θD ((1+λ) C_D + C_DD)⁻¹` through a Cholesky solve.
pub fn kalman_gain(c_theta_d: &DMatrix<f64>, c_dd: &DMatrix<f64>, lambda: f64, c_d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::validation(format!("damping must be nonnegative, got {lambda}")));
    }
    if c_dd.shape() != c_d.shape() || c_theta_d.ncols() != c_d.nrows() {
        return Err(Error::validation("gain inputs differ in shape"));
    }
    let m = symmetrize(&(c_d * (1.0 + lambda) + c_dd));
    let (chol, jitter) = cholesky_with_jitter(&m)?;
    if jitter > 0.0 {
        warn!("gain system needed diagonal jitter {jitter:e}");
    }
    Ok(chol.solve(&c_theta_d.transpose()).transpose())
}

/// `(C_θ - K C_θDᵀ) / (1 + λ)`, symmetrized.
pub fn hessian_inverse(c_theta: &DMatrix<f64>, gain: &DMatrix<f64>, c_theta_d: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    symmetrize(&damped_update(c_theta, gain, c_theta_d, lambda))
}

fn damped_update(c_theta: &DMatrix<f64>, gain: &DMatrix<f64>, c_theta_d: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    (c_theta - gain * c_theta_d.transpose()) / (1.0 + lambda)
}

/// Output of one smoother update.
#[derive(Debug, Clone)]
pub struct IesUpdate {
    pub intermediate: Ensemble,
    pub gain: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
}

/// Moves every member:
/// `θ̃ = θ - (C_θ - K C_θDᵀ) C_pr⁻¹ (θ - θ_pr) / (1+λ) - K (g(θ) - d)`.
pub fn ies_update(
    ens: &Ensemble,
    predictions: &DMatrix<f64>,
    covs: &CovarianceBlocks,
    prior: &PriorSpec,
    lambda: f64,
    obs: &ObservationSetup,
) -> Result<IesUpdate> {
    if predictions.shape() != (obs.len(), ens.n_members()) || prior.dim() != ens.n_params() {
        return Err(Error::validation("update inputs differ in shape"));
    }
    let gain = kalman_gain(&covs.c_theta_d, &covs.c_dd, lambda, &obs.c_d())?;
    let p = damped_update(&covs.c_theta, &gain, &covs.c_theta_d, lambda);
    let mut innovation = predictions.clone();
    for mut c in innovation.column_iter_mut() {
        c -= obs.data();
    }
    let moved = ens.samples() - &p * prior.whiten_deviations(ens.samples()) - &gain * innovation;
    Ok(IesUpdate {
        intermediate: Ensemble::new(moved)?,
        h_inv: symmetrize(&p),
        gain,
    })
}

/// Gaussian update with unweighted covariances.
pub fn ies_update_gaussian(
    ens: &Ensemble,
    predictions: &DMatrix<f64>,
    prior: &PriorSpec,
    lambda: f64,
    obs: &ObservationSetup,
) -> Result<IesUpdate> {
    ies_update(ens, predictions, &CovarianceBlocks::from_ensemble(ens, predictions)?, prior, lambda, obs)
}

/// Update for one mixture component, with covariances weighted by
/// `gamma_row` about `mu` and `pred_center = g(mu)`.
#[allow(clippy::too_many_arguments)]
pub fn ies_update_component(
    ens: &Ensemble,
    gamma_row: &[f64],
    mu: &DVector<f64>,
    predictions: &DMatrix<f64>,
    pred_center: &DVector<f64>,
    prior: &PriorSpec,
    lambda: f64,
    obs: &ObservationSetup,
) -> Result<IesUpdate> {
    let w = crate::ensemble::weighted_mc_covs(ens, gamma_row, mu, predictions, pred_center)?;
    let covs = CovarianceBlocks {
        c_theta: w.c_theta,
        c_theta_d: w.c_theta_d,
        c_dd: w.c_dd,
    };
    ies_update(ens, predictions, &covs, prior, lambda, obs)
}

/// Mean of the intermediate ensemble.
pub fn map_point(intermediate: &Ensemble) -> DVector<f64> {
    intermediate.mean()
}

/// `θ_j = μ̃ + L ξ_j` with `L Lᵀ = H̃⁻¹`.
///
/// An indefinite `H̃⁻¹` has its eigenvalues clipped at `1e-12` first; the
/// flag in the result reports whether that happened.
pub fn implicit_map(mu: &DVector<f64>, h_inv: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<(Ensemble, bool)> {
    if h_inv.shape() != (mu.len(), mu.len()) || xi.nrows() != mu.len() {
        return Err(Error::validation("implicit map inputs differ in dimension"));
    }
    let sym = symmetrize(h_inv);
    let (l, repaired) = match Cholesky::new(sym.clone()) {
        Some(c) => (c.unpack(), false),
        None => {
            let clipped = clip_to_spd(&sym, 1e-12)?;
            let (c, _) = cholesky_with_jitter(&clipped).map_err(|e| Error::DegenerateHessian(e.to_string()))?;
            (c.unpack(), true)
        }
    };
    let mut s = l * xi;
    for mut c in s.column_iter_mut() {
        c += mu;
    }
    Ok((Ensemble::new(s)?, repaired))
}

/// `w_j ∝ exp((½ ξ_jᵀ ξ_j - W(θ_j)) / ρ)`; non-finite `W` gives weight 0.
pub fn is_weights(xi: &DMatrix<f64>, objective_values: &[f64], rho: f64) -> Result<WeightVector> {
    if xi.ncols() != objective_values.len() {
        return Err(Error::validation("reference draws and objective values differ in count"));
    }
    let delta: Vec<f64> = xi
        .column_iter()
        .zip(objective_values)
        .map(|(x, w)| {
            if w.is_finite() {
                0.5 * x.norm_squared() - w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    normalize_weights(&delta, rho)
}

/// `θ_j = Σ_i γ_ij θ_j^(i)`.
pub fn combine_ensembles(per_model: &[Ensemble], gamma: &DMatrix<f64>) -> Result<Ensemble> {
    let first = per_model
        .first()
        .ok_or_else(|| Error::validation("no ensembles to combine"))?;
    let shape = first.samples().shape();
    if per_model.iter().any(|e| e.samples().shape() != shape) || gamma.shape() != (per_model.len(), shape.1) {
        return Err(Error::validation("ensembles and memberships differ in shape"));
    }
    let mut out = DMatrix::zeros(shape.0, shape.1);
    for (i, e) in per_model.iter().enumerate() {
        for j in 0..shape.1 {
            let g = gamma[(i, j)];
            if g != 0.0 {
                out.column_mut(j).axpy(g, &e.samples().column(j), 1.0);
            }
        }
    }
    Ensemble::new(out)
}

/// `Σ π_i μ_i`.
pub fn point_estimate(mixture: &GaussianMixture) -> DVector<f64> {
    mixture.mean()
}

/// Central-difference Jacobian of `g` at `theta`.
pub fn finite_difference_jacobian(model: &dyn ForwardModel, theta: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
    let n = theta.len();
    let cols = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[p] += step;
            minus[p] -= step;
            Ok((model.predict(&plus)? - model.predict(&minus)?) / (2.0 * step))
        })
        .collect::<Result<Vec<DVector<f64>>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Predictions for every member; a member whose forward solve fails is
/// replaced by a fresh prior draw (up to ten attempts).
pub fn predict_with_repair(
    model: &dyn ForwardModel,
    ens: &Ensemble,
    prior: &PriorSpec,
    streams: &Streams,
    iteration: usize,
) -> Result<(Ensemble, DMatrix<f64>)> {
    let mut samples = ens.samples().clone();
    let results = predict_columns(model, &samples);
    let mut preds = DMatrix::zeros(model.n_data(), samples.ncols());
    for (j, r) in results.into_iter().enumerate() {
        let p = match r {
            Ok(p) => p,
            Err(e) => {
                warn!("member {j} failed in the forward model ({e}); redrawing from the prior");
                let mut rng = streams.get(Stream::Repair, iteration, j);
                let mut fixed = None;
                for _ in 0..10 {
                    let draw = prior.sample(2, &mut rng)?.member(0);
                    if let Ok(p) = model.predict(&draw) {
                        if p.iter().all(|v| v.is_finite()) {
                            samples.set_column(j, &draw);
                            fixed = Some(p);
                            break;
                        }
                    }
                }
                fixed.ok_or_else(|| Error::Solver(format!("member {j} could not be repaired")))?
            }
        };
        preds.set_column(j, &p);
    }
    Ok((Ensemble::new(samples)?, preds))
}
