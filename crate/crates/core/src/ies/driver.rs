use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};

use super::{
    finite_difference_jacobian, ies_update_component, ies_update_gaussian, implicit_map, is_weights, map_point,
    objective, predict_columns, predict_with_repair, standard_normal, ForwardModel, IesUpdate, ObservationSetup,
    PriorSpec,
};
use crate::dct::{reduce_dimension, DctBasis};
use crate::ensemble::{systematic_resample, Ensemble, WeightVector};
use crate::gmm::{initial_smoothing, log_gaussian_pdf, smem_fit, GaussianMixture, SmemConfig};
use crate::linalg::{cholesky_with_jitter, symmetrize};
use crate::postprocess::{FaciesScale, PostProcessSpec};
use crate::rng::{Stream, StreamRng, Streams};
use crate::{Error, Result};

/// Settings shared by all drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IesSettings {
    pub n_ensemble: usize,
    /// Initial damping `λ₀`.
    pub lambda0: f64,
    /// Damping decay `ν`: `λ_l = λ₀ / ν^l`.
    pub nu: f64,
    /// Weight scale `ρ`.
    pub rho: f64,
    /// Stop when the ensemble mean moves less than this.
    pub eps_stop: f64,
    pub max_iter: usize,
}

impl Default for IesSettings {
    fn default() -> Self {
        Self {
            n_ensemble: 500,
            lambda0: 1.0,
            nu: 2.0,
            rho: 1.0,
            eps_stop: 1e-3,
            max_iter: 20,
        }
    }
}

impl IesSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_ensemble < 2 {
            return Err(Error::validation("ensemble size must be at least 2"));
        }
        if !(self.lambda0 > 0.0 && self.nu >= 1.0 && self.rho > 0.0 && self.eps_stop >= 0.0) {
            return Err(Error::validation(
                "need lambda0 > 0, nu >= 1, rho > 0 and a nonnegative stopping tolerance",
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be positive"));
        }
        Ok(())
    }

    /// `λ₀ / ν^l`.
    pub fn lambda(&self, l: usize) -> f64 {
        self.lambda0 / self.nu.powi(l as i32)
    }
}

/// State after one outer iteration; iteration 0 is the prior ensemble.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1 for the first update.
    pub iteration: usize,
    pub lambda: f64,
    /// Resampled (and, for mixtures, combined) ensemble.
    pub ensemble: Ensemble,
    /// Predicted data for every member of `ensemble`.
    pub predictions: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// `‖θ̄_{l+1} - θ̄_l‖` over the coordinates kept in this iteration.
    pub step_norm: f64,
    /// Importance weights before resampling, one vector per component.
    pub weights: Vec<WeightVector>,
    pub map_points: Vec<DVector<f64>>,
    /// Whether the inverse Hessian needed eigenvalue clipping, per component.
    pub hessian_repaired: Vec<bool>,
    /// Retained basis columns after reduction (cosine parameterization).
    pub retained: Option<Vec<usize>>,
    /// Forecast component count before the update (mixture prior).
    pub forecast_k: Option<usize>,
    pub smoothing: Option<f64>,
    /// Analysis mixture (mixture prior).
    pub mixture: Option<GaussianMixture>,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    /// Prior draw after replacing members whose forward solve failed.
    pub prior_ensemble: Ensemble,
    pub prior_predictions: DMatrix<f64>,
    /// Cosine basis matching the prior ensemble rows.
    pub prior_basis: Option<DctBasis>,
    /// Updates only; the prior is not repeated here.
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub final_basis: Option<DctBasis>,
    pub final_mixture: Option<GaussianMixture>,
}

impl InversionResult {
    pub fn final_ensemble(&self) -> &Ensemble {
        self.iterations
            .last()
            .map(|r| &r.ensemble)
            .unwrap_or(&self.prior_ensemble)
    }
}

/// Record handed to the observer before the first update.
fn prior_record(ens: &Ensemble, preds: &DMatrix<f64>, retained: Option<Vec<usize>>) -> IterationRecord {
    IterationRecord {
        iteration: 0,
        lambda: 0.0,
        ensemble: ens.clone(),
        predictions: preds.clone(),
        mean: ens.mean(),
        step_norm: 0.0,
        weights: vec![WeightVector::uniform(ens.n_members())],
        map_points: Vec::new(),
        hessian_repaired: Vec::new(),
        retained,
        forecast_k: None,
        smoothing: None,
        mixture: None,
    }
}

struct StepOutput {
    analysis: Ensemble,
    analysis_preds: DMatrix<f64>,
    weights: WeightVector,
    map_point: DVector<f64>,
    repaired: bool,
}

/// Implicit map, weighting and resampling around one smoother update.
fn sample_and_resample(
    model: &dyn ForwardModel,
    update: &IesUpdate,
    prior: &PriorSpec,
    obs: &ObservationSetup,
    rho: f64,
    xi_rng: &mut StreamRng,
    resample_rng: &mut StreamRng,
) -> Result<StepOutput> {
    let mu = map_point(&update.intermediate);
    let (n, ne) = update.intermediate.samples().shape();
    let xi = standard_normal(n, ne, xi_rng);
    let (samples, repaired) = implicit_map(&mu, &update.h_inv, &xi)?;
    if repaired {
        debug!("inverse Hessian clipped to positive definite");
    }
    let mut preds = DMatrix::from_element(obs.len(), ne, f64::NAN);
    let mut w = vec![f64::INFINITY; ne];
    for (j, r) in predict_columns(model, samples.samples()).into_iter().enumerate() {
        match r {
            Ok(p) => {
                w[j] = objective(prior, obs, &samples.member(j), &p);
                preds.set_column(j, &p);
            }
            Err(e) => debug!("importance sample {j} dropped: {e}"),
        }
    }
    let weights = is_weights(&xi, &w, rho)?;
    let (analysis, idx) = systematic_resample(&samples, &weights, resample_rng)?;
    Ok(StepOutput {
        analysis,
        analysis_preds: preds.select_columns(&idx),
        weights,
        map_point: mu,
        repaired,
    })
}

fn check_dims(model: &dyn ForwardModel, prior: &PriorSpec, obs: &ObservationSetup) -> Result<()> {
    if model.n_params() != prior.dim() {
        return Err(Error::validation(format!(
            "model takes {} parameters but the prior has {}",
            model.n_params(),
            prior.dim()
        )));
    }
    if model.n_data() != obs.len() {
        return Err(Error::validation(format!(
            "model predicts {} values but {} were observed",
            model.n_data(),
            obs.len()
        )));
    }
    Ok(())
}

/// Gaussian-prior iteration.
pub fn run_gaussian_ies_is(
    model: &dyn ForwardModel,
    prior: &PriorSpec,
    obs: &ObservationSetup,
    settings: &IesSettings,
    streams: &Streams,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<InversionResult> {
    settings.validate()?;
    check_dims(model, prior, obs)?;
    let prior_draw = prior.sample(settings.n_ensemble, &mut streams.get(Stream::Prior, 0, 0))?;
    let (mut ens, mut preds) = predict_with_repair(model, &prior_draw, prior, streams, 0)?;
    let (prior_ens, prior_preds) = (ens.clone(), preds.clone());
    observer(&prior_record(&ens, &preds, None))?;
    let mut iterations = Vec::new();
    let mut converged = false;
    for l in 0..settings.max_iter {
        let lambda = settings.lambda(l);
        let update = ies_update_gaussian(&ens, &preds, prior, lambda, obs)?;
        let step = sample_and_resample(
            model,
            &update,
            prior,
            obs,
            settings.rho,
            &mut streams.get(Stream::Reference, l, 0),
            &mut streams.get(Stream::Resample, l, 0),
        )?;
        let mean = step.analysis.mean();
        let step_norm = (&mean - ens.mean()).norm();
        info!(
            "iteration {}: lambda {lambda:.3e}, step {step_norm:.3e}, ess {:.1}",
            l + 1,
            step.weights.effective_sample_size()
        );
        let record = IterationRecord {
            iteration: l + 1,
            lambda,
            ensemble: step.analysis.clone(),
            predictions: step.analysis_preds.clone(),
            mean,
            step_norm,
            weights: vec![step.weights],
            map_points: vec![step.map_point],
            hessian_repaired: vec![step.repaired],
            retained: None,
            forecast_k: None,
            smoothing: None,
            mixture: None,
        };
        observer(&record)?;
        iterations.push(record);
        ens = step.analysis;
        preds = step.analysis_preds;
        if step_norm < settings.eps_stop {
            converged = true;
            break;
        }
    }
    Ok(InversionResult {
        prior_ensemble: prior_ens,
        prior_predictions: prior_preds,
        prior_basis: None,
        iterations,
        converged,
        final_basis: None,
        final_mixture: None,
    })
}

/// Projection of synthesized fields through the blockwise regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProjection {
    pub spec: PostProcessSpec,
    pub scale: FaciesScale,
}

impl FieldProjection {
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        self.scale.project(field, &self.spec)
    }
}

/// Cosine parameterization of a gridded field.
#[derive(Debug, Clone)]
pub struct DctSetup {
    /// Initial basis; its column count is the starting dimension.
    pub basis: DctBasis,
    /// Mass fraction kept by the dimension reduction; `1.0` keeps every
    /// nonzero mean coefficient.
    pub reduce_alpha: f64,
    pub projection: Option<FieldProjection>,
    /// Feed projected (rather than raw) fields to the forward model.
    pub project_forward: bool,
}

impl DctSetup {
    /// Field of one coefficient vector as seen by the forward model.
    pub fn forward_field(&self, basis: &DctBasis, theta: &DVector<f64>) -> Result<Vec<f64>> {
        let raw = basis.synthesize(theta.as_slice())?;
        Ok(match (&self.projection, self.project_forward) {
            (Some(p), true) => p.apply(&raw),
            _ => raw,
        })
    }
}

struct DctModel<'a> {
    setup: &'a DctSetup,
    basis: &'a DctBasis,
    field_model: &'a dyn ForwardModel,
}

impl ForwardModel for DctModel<'_> {
    fn n_params(&self) -> usize {
        self.basis.n_retained()
    }

    fn n_data(&self) -> usize {
        self.field_model.n_data()
    }

    fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let field = self.setup.forward_field(self.basis, theta)?;
        self.field_model.predict(&DVector::from_vec(field))
    }
}

/// Cosine-parameterized iteration with dimension reduction.
///
/// `field_model` maps a cell field (log-permeability) to data; `prior` is
/// over the initial coefficients.
pub fn run_dct_ies_is(
    field_model: &dyn ForwardModel,
    setup: &DctSetup,
    prior: &PriorSpec,
    obs: &ObservationSetup,
    settings: &IesSettings,
    streams: &Streams,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<InversionResult> {
    settings.validate()?;
    if !(setup.reduce_alpha > 0.0 && setup.reduce_alpha <= 1.0) {
        return Err(Error::validation("reduction threshold must lie in (0, 1]"));
    }
    if field_model.n_params() != setup.basis.nx() * setup.basis.ny() {
        return Err(Error::validation("field model size differs from the basis grid"));
    }
    let mut basis = setup.basis.clone();
    let mut prior = prior.clone();
    {
        let model = DctModel {
            setup,
            basis: &basis,
            field_model,
        };
        check_dims(&model, &prior, obs)?;
    }
    let prior_draw = prior.sample(settings.n_ensemble, &mut streams.get(Stream::Prior, 0, 0))?;
    let (mut ens, mut preds) = {
        let model = DctModel {
            setup,
            basis: &basis,
            field_model,
        };
        predict_with_repair(&model, &prior_draw, &prior, streams, 0)?
    };
    let (prior_ens, prior_preds) = (ens.clone(), preds.clone());
    observer(&prior_record(&ens, &preds, Some(basis.retained().to_vec())))?;
    let mut iterations = Vec::new();
    let mut converged = false;
    for l in 0..settings.max_iter {
        let lambda = settings.lambda(l);
        let model = DctModel {
            setup,
            basis: &basis,
            field_model,
        };
        let update = ies_update_gaussian(&ens, &preds, &prior, lambda, obs)?;
        let step = sample_and_resample(
            &model,
            &update,
            &prior,
            obs,
            settings.rho,
            &mut streams.get(Stream::Reference, l, 0),
            &mut streams.get(Stream::Resample, l, 0),
        )?;
        let full_mean = step.analysis.mean();
        let keep = reduce_dimension(full_mean.as_slice(), setup.reduce_alpha)?;
        let old_mean = ens.mean().select_rows(&keep);
        let (next_ens, next_preds, next_basis, next_prior) = if keep.len() < basis.n_retained() {
            let nb = basis.restrict(&keep)?;
            let np = prior.restrict(&keep)?;
            let ne = step.analysis.select_rows(&keep)?;
            let m = DctModel {
                setup,
                basis: &nb,
                field_model,
            };
            let (ne, pp) = predict_with_repair(&m, &ne, &np, streams, l + 1)?;
            (ne, pp, nb, np)
        } else {
            (step.analysis.clone(), step.analysis_preds, basis.clone(), prior.clone())
        };
        let mean = next_ens.mean();
        let step_norm = (&mean - old_mean).norm();
        info!(
            "iteration {}: lambda {lambda:.3e}, step {step_norm:.3e}, ess {:.1}, dimension {}",
            l + 1,
            step.weights.effective_sample_size(),
            next_basis.n_retained()
        );
        let record = IterationRecord {
            iteration: l + 1,
            lambda,
            ensemble: next_ens.clone(),
            predictions: next_preds.clone(),
            mean,
            step_norm,
            weights: vec![step.weights],
            map_points: vec![step.map_point],
            hessian_repaired: vec![step.repaired],
            retained: Some(next_basis.retained().to_vec()),
            forecast_k: None,
            smoothing: None,
            mixture: None,
        };
        observer(&record)?;
        iterations.push(record);
        ens = next_ens;
        preds = next_preds;
        basis = next_basis;
        prior = next_prior;
        if step_norm < settings.eps_stop {
            converged = true;
            break;
        }
    }
    Ok(InversionResult {
        prior_ensemble: prior_ens,
        prior_predictions: prior_preds,
        prior_basis: Some(setup.basis.clone()),
        iterations,
        converged,
        final_basis: Some(basis),
        final_mixture: None,
    })
}

/// Mixture-specific settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmSettings {
    pub k_max: usize,
    pub smem: SmemConfig,
    /// Central-difference step for the Jacobian in the weight update.
    pub fd_step: f64,
}

impl Default for GmmSettings {
    fn default() -> Self {
        Self {
            k_max: 5,
            smem: SmemConfig::default(),
            fd_step: 1e-4,
        }
    }
}

fn regularized(cov: DMatrix<f64>) -> DMatrix<f64> {
    let cov = symmetrize(&cov);
    if nalgebra::Cholesky::new(cov.clone()).is_some() {
        return cov;
    }
    let n = cov.nrows();
    let shift = 1e-10 * (cov.trace() / n as f64).max(1e-6);
    warn!("analysis covariance is singular; adding {shift:e} to the diagonal");
    cov + DMatrix::identity(n, n) * shift
}

/// Mixture-prior iteration.
pub fn run_gmm_ies_is(
    model: &dyn ForwardModel,
    prior: &PriorSpec,
    obs: &ObservationSetup,
    settings: &IesSettings,
    gmm: &GmmSettings,
    streams: &Streams,
    observer: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> Result<InversionResult> {
    settings.validate()?;
    check_dims(model, prior, obs)?;
    let k_min = gmm.smem.k_min;
    if k_min == 0 || gmm.k_max < k_min {
        return Err(Error::validation(format!(
            "need 1 <= k_min <= k_max, got k_min={k_min}, k_max={}",
            gmm.k_max
        )));
    }
    if gmm.k_max > settings.n_ensemble {
        return Err(Error::validation("k_max exceeds the ensemble size"));
    }
    if !(gmm.fd_step > 0.0) {
        return Err(Error::validation("finite-difference step must be positive"));
    }
    let prior_draw = prior.sample(settings.n_ensemble, &mut streams.get(Stream::Prior, 0, 0))?;
    let (mut ens, mut preds) = predict_with_repair(model, &prior_draw, prior, streams, 0)?;
    let (prior_ens, prior_preds) = (ens.clone(), preds.clone());
    observer(&prior_record(&ens, &preds, None))?;
    let mut analysis: Option<GaussianMixture> = None;
    let mut iterations = Vec::new();
    let mut converged = false;
    let ne = settings.n_ensemble;
    for l in 0..settings.max_iter {
        let lambda = settings.lambda(l);
        let init = match &analysis {
            Some(m) => m.clone(),
            None => {
                let h0 = initial_smoothing(ens.samples());
                GaussianMixture::from_random_members(
                    ens.samples(),
                    gmm.k_max,
                    h0 * h0,
                    &mut streams.get(Stream::MixtureInit, l, 0),
                )?
            }
        };
        let fit = smem_fit(ens.samples(), &init, &gmm.smem)?;
        let forecast = fit.mixture;
        let k_fit = forecast.k();

        let mut gamma_rows: Vec<Vec<f64>> = Vec::new();
        let mut active: Vec<usize> = Vec::new();
        for i in 0..k_fit {
            let row: Vec<f64> = fit.gamma.row(i).iter().copied().collect();
            if row.iter().sum::<f64>() < 1e-8 {
                warn!("component {i} has no membership mass; skipped");
                continue;
            }
            gamma_rows.push(row);
            active.push(i);
        }
        if active.is_empty() {
            return Err(Error::DegenerateComponent(0));
        }
        if active.len() < k_fit {
            for j in 0..ne {
                let s: f64 = gamma_rows.iter().map(|r| r[j]).sum();
                if s > 0.0 {
                    for r in gamma_rows.iter_mut() {
                        r[j] /= s;
                    }
                } else {
                    for r in gamma_rows.iter_mut() {
                        r[j] = 1.0 / active.len() as f64;
                    }
                }
            }
        }
        let k = active.len();
        let gamma = DMatrix::from_fn(k, ne, |i, j| gamma_rows[i][j]);

        let mut per_model = Vec::with_capacity(k);
        let mut per_model_preds = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        let mut map_points = Vec::with_capacity(k);
        let mut repaired = Vec::with_capacity(k);
        for (slot, &i) in active.iter().enumerate() {
            let mu_f = &forecast.means()[i];
            let center = model.predict(mu_f)?;
            let update = ies_update_component(&ens, &gamma_rows[slot], mu_f, &preds, &center, prior, lambda, obs)?;
            let step = sample_and_resample(
                model,
                &update,
                prior,
                obs,
                settings.rho,
                &mut streams.get(Stream::Reference, l, slot),
                &mut streams.get(Stream::Resample, l, slot),
            )?;
            per_model.push(step.analysis);
            per_model_preds.push(step.analysis_preds);
            weights.push(step.weights);
            map_points.push(step.map_point);
            repaired.push(step.repaired);
        }
        let combined = super::combine_ensembles(&per_model, &gamma)?;
        let mixture = analysis_mixture(model, obs, &per_model, &gamma, gmm.fd_step)?;

        let (next_ens, next_preds) = if k == 1 {
            (per_model.pop().expect("one model"), per_model_preds.pop().expect("one model"))
        } else {
            predict_with_repair(model, &combined, prior, streams, l + 1)?
        };
        let mean = next_ens.mean();
        let step_norm = (&mean - ens.mean()).norm();
        info!(
            "iteration {}: lambda {lambda:.3e}, k {k}, h {:.3e}, step {step_norm:.3e}",
            l + 1,
            fit.h
        );
        let record = IterationRecord {
            iteration: l + 1,
            lambda,
            ensemble: next_ens.clone(),
            predictions: next_preds.clone(),
            mean,
            step_norm,
            weights,
            map_points,
            hessian_repaired: repaired,
            retained: None,
            forecast_k: Some(k),
            smoothing: Some(fit.h),
            mixture: Some(mixture.clone()),
        };
        observer(&record)?;
        iterations.push(record);
        ens = next_ens;
        preds = next_preds;
        analysis = Some(mixture);
        if step_norm < settings.eps_stop {
            converged = true;
            break;
        }
    }
    Ok(InversionResult {
        prior_ensemble: prior_ens,
        prior_predictions: prior_preds,
        prior_basis: None,
        iterations,
        converged,
        final_basis: None,
        final_mixture: analysis,
    })
}

/// Membership-weighted moments of the per-model ensembles, with weights
/// `π_i ∝ n_i · N(d | g(μ_i), Ḡ_i Σ_i Ḡ_iᵀ + C_D)` where `Ḡ_i` is a
/// central-difference Jacobian at `μ_i`.
pub fn analysis_mixture(
    model: &dyn ForwardModel,
    obs: &ObservationSetup,
    per_model: &[Ensemble],
    gamma: &DMatrix<f64>,
    fd_step: f64,
) -> Result<GaussianMixture> {
    let k = per_model.len();
    if gamma.nrows() != k {
        return Err(Error::validation("memberships and ensembles differ in count"));
    }
    let c_d = obs.c_d();
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut log_w = Vec::with_capacity(k);
    for (i, e) in per_model.iter().enumerate() {
        let row = gamma.row(i).transpose();
        let mass = row.sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateComponent(i));
        }
        let mu = e.samples() * &row / mass;
        let mut cov = DMatrix::zeros(mu.len(), mu.len());
        for j in 0..e.n_members() {
            let d = e.samples().column(j) - &mu;
            cov.ger(row[j], &d, &d, 1.0);
        }
        let cov = regularized(cov / mass);
        if k > 1 {
            let jac = finite_difference_jacobian(model, &mu, fd_step)?;
            let pred_cov = symmetrize(&(&jac * &cov * jac.transpose() + &c_d));
            let (_, jitter) = cholesky_with_jitter(&pred_cov)?;
            let pred_cov = pred_cov + DMatrix::identity(c_d.nrows(), c_d.nrows()) * jitter;
            let center = model.predict(&mu)?;
            log_w.push(mass.ln() + log_gaussian_pdf(obs.data(), &center, &pred_cov)?);
        } else {
            log_w.push(0.0);
        }
        means.push(mu);
        covs.push(cov);
    }
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    GaussianMixture::new(w.iter().map(|v| v / total).collect(), means, covs)
}
