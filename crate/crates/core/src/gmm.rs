//! Gaussian mixtures and the smoothed EM fit with harmony screening.
//!
//! Samples are passed as the columns of a matrix (`n_params × n_samples`).

use std::f64::consts::PI;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::Rng;

use crate::linalg::{log_det, symmetrize, trace_of_inverse};
use crate::{Error, Result};

/// Lower bound applied to the smoothing parameter after each update.
pub const H_FLOOR: f64 = 1e-8;

fn factor(sigma: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))
}

fn log_pdf_factored(x: &DVector<f64>, mu: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = x.len() as f64;
    let z = chol.l().solve_lower_triangular(&(x - mu)).expect("triangular factor is invertible");
    -0.5 * (n * (2.0 * PI).ln() + log_det(chol) + z.norm_squared())
}

/// `log N(x | mu, sigma)`.
pub fn log_gaussian_pdf(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mu.len() || sigma.nrows() != mu.len() || !sigma.is_square() {
        return Err(Error::validation("dimension mismatch in gaussian density"));
    }
    Ok(log_pdf_factored(x, mu, &factor(sigma)?))
}

/// `N(x | mu, sigma)`.
pub fn component_pdf(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    log_gaussian_pdf(x, mu, sigma).map(f64::exp)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Weighted sum of Gaussian densities.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::validation("mixture needs matching, nonempty component lists"));
        }
        let n = means[0].len();
        if means.iter().any(|m| m.len() != n) || covariances.iter().any(|c| c.shape() != (n, n)) {
            return Err(Error::validation("mixture components have inconsistent dimensions"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::validation("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!("mixture weights sum to {total}")));
        }
        for c in &covariances {
            factor(c)?;
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Single component.
    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    /// `k` distinct random samples as means, each with the sample covariance
    /// plus `floor·I`, equal weights.
    pub fn from_random_members<R: Rng + ?Sized>(
        samples: &DMatrix<f64>,
        k: usize,
        floor: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (n, ne) = samples.shape();
        if k == 0 || k > ne {
            return Err(Error::validation(format!("cannot pick {k} components from {ne} samples")));
        }
        let (mean, cov) = moments(samples);
        let cov = cov + DMatrix::identity(n, n) * floor.max(H_FLOOR * H_FLOOR);
        if k == 1 {
            return Self::new(vec![1.0], vec![mean], vec![cov]);
        }
        let picks = sample(rng, ne, k);
        let means = picks.iter().map(|j| samples.column(j).into_owned()).collect();
        Self::new(vec![1.0 / k as f64; k], means, vec![cov; k])
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Mixture mean `Σ π_i μ_i`.
    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.dim()), |acc, (w, m)| acc + m * *w)
    }

    /// Mixture covariance `Σ π_i (Σ_i + μ_i μ_iᵀ) - μ μᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let mut c = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.k() {
            let d = &self.means[i] - &mu;
            c += (&self.covariances[i] + &d * d.transpose()) * self.weights[i];
        }
        symmetrize(&c)
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let terms = (0..self.k())
            .map(|i| Ok(self.weights[i].ln() + log_gaussian_pdf(x, &self.means[i], &self.covariances[i])?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&terms))
    }

    /// Component `i` with weight 1.
    pub fn component(&self, i: usize) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![self.means[i].clone()],
            covariances: vec![self.covariances[i].clone()],
        }
    }

    fn keep(&self, idx: &[usize]) -> Self {
        let total: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        Self {
            weights: idx.iter().map(|&i| self.weights[i] / total).collect(),
            means: idx.iter().map(|&i| self.means[i].clone()).collect(),
            covariances: idx.iter().map(|&i| self.covariances[i].clone()).collect(),
        }
    }
}

/// Sample mean and biased (`1/N`) covariance of the columns.
fn moments(samples: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let ne = samples.ncols() as f64;
    let mean = samples.column_mean();
    let mut centered = samples.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let cov = &centered * centered.transpose() / ne;
    (mean, symmetrize(&cov))
}

/// `J = Σ π_i (½ log|Σ_i| + ½ h² tr(Σ_i⁻¹) - log π_i)`.
pub fn byy_criterion(mixture: &GaussianMixture, h: f64) -> Result<f64> {
    let mut j = 0.0;
    for i in 0..mixture.k() {
        let chol = factor(&mixture.covariances[i])?;
        let pi = mixture.weights[i];
        j += pi * (0.5 * log_det(&chol) + 0.5 * h * h * trace_of_inverse(&chol) - pi.ln());
    }
    Ok(j)
}

/// Membership matrix `γ` (`k × n_samples`), columns summing to one.
pub fn e_step(samples: &DMatrix<f64>, mixture: &GaussianMixture) -> Result<DMatrix<f64>> {
    let k = mixture.k();
    let ne = samples.ncols();
    if samples.nrows() != mixture.dim() {
        return Err(Error::validation("samples and mixture differ in dimension"));
    }
    let chols = mixture
        .covariances
        .iter()
        .map(factor)
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = mixture.weights.iter().map(|w| w.ln()).collect();
    let mut gamma = DMatrix::zeros(k, ne);
    let mut terms = vec![0.0; k];
    for j in 0..ne {
        let x = samples.column(j).into_owned();
        for i in 0..k {
            terms[i] = log_w[i] + log_pdf_factored(&x, &mixture.means[i], &chols[i]);
        }
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            warn!("all component densities vanish for sample {j}; using uniform memberships");
            for i in 0..k {
                gamma[(i, j)] = 1.0 / k as f64;
            }
            continue;
        }
        for i in 0..k {
            gamma[(i, j)] = (terms[i] - lse).exp();
        }
    }
    Ok(gamma)
}

/// Weighted moment update with `h² I` added to every covariance.
///
/// Components with no membership mass are dropped; the second return value
/// lists the indices of the surviving components.
pub fn m_step(samples: &DMatrix<f64>, gamma: &DMatrix<f64>, h: f64) -> Result<(GaussianMixture, Vec<usize>)> {
    let (n, ne) = samples.shape();
    if gamma.ncols() != ne {
        return Err(Error::validation("membership matrix does not match samples"));
    }
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covs = Vec::new();
    let mut kept = Vec::new();
    for i in 0..gamma.nrows() {
        let mass: f64 = gamma.row(i).sum();
        if !(mass > 0.0) {
            continue;
        }
        let mu = samples * gamma.row(i).transpose() / mass;
        let mut cov = DMatrix::zeros(n, n);
        for j in 0..ne {
            let g = gamma[(i, j)];
            if g == 0.0 {
                continue;
            }
            let d = samples.column(j) - &mu;
            cov.ger(g, &d, &d, 1.0);
        }
        cov /= mass;
        for d in 0..n {
            cov[(d, d)] += h * h;
        }
        weights.push(mass / ne as f64);
        means.push(mu);
        covs.push(symmetrize(&cov));
        kept.push(i);
    }
    if kept.is_empty() {
        return Err(Error::DegenerateComponent(0));
    }
    let total: f64 = weights.iter().sum();
    let weights = weights.iter().map(|w| w / total).collect();
    Ok((GaussianMixture::new(weights, means, covs)?, kept))
}

/// Squared pairwise distances between columns.
pub fn pairwise_sq_distances(samples: &DMatrix<f64>) -> DMatrix<f64> {
    let ne = samples.ncols();
    let mut d = DMatrix::zeros(ne, ne);
    for i in 0..ne {
        for j in i + 1..ne {
            let v = (samples.column(i) - samples.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Initial smoothing `h0 = √(Σ_ij ‖θ_i - θ_j‖² / (N_θ N³))`.
///
/// Uses `Σ_ij ‖θ_i - θ_j‖² = 2N Σ_j ‖θ_j - θ̄‖²`.
pub fn initial_smoothing(samples: &DMatrix<f64>) -> f64 {
    let (n, ne) = samples.shape();
    let mean = samples.column_mean();
    let spread: f64 = samples.column_iter().map(|c| (c - &mean).norm_squared()).sum();
    (2.0 * ne as f64 * spread / (n as f64 * (ne as f64).powi(3))).sqrt()
}

/// `S(h) = N_θ/h - h Σ π_i tr(Σ_i⁻¹) - Σ_ij β_ij ‖θ_i - θ_j‖² / h³`.
///
/// `sq_dist` holds the squared pairwise distances of the samples.
pub fn smoothing_score(h: f64, sq_dist: &DMatrix<f64>, n_params: usize, mixture: &GaussianMixture) -> Result<f64> {
    let mut trace = 0.0;
    for i in 0..mixture.k() {
        trace += mixture.weights[i] * trace_of_inverse(&factor(&mixture.covariances[i])?);
    }
    let inv = 0.5 / (h * h);
    let mut num = 0.0;
    let mut den = 0.0;
    for d2 in sq_dist.iter() {
        let w = (-d2 * inv).exp();
        num += w * d2;
        den += w;
    }
    Ok(n_params as f64 / h - h * trace - num / den / h.powi(3))
}

/// `h + η S(h)`, floored at [`H_FLOOR`].
pub fn update_smoothing(h: f64, sq_dist: &DMatrix<f64>, n_params: usize, mixture: &GaussianMixture, eta: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::validation(format!("smoothing parameter must be positive, got {h}")));
    }
    Ok((h + eta * smoothing_score(h, sq_dist, n_params, mixture)?).max(H_FLOOR))
}

/// Drops components lighter than `eps`, lightest first, never going below
/// `k_min`, and renormalizes.
pub fn screen_components(mixture: &GaussianMixture, eps: f64, k_min: usize) -> GaussianMixture {
    let mut order: Vec<usize> = (0..mixture.k()).collect();
    order.sort_by(|&a, &b| mixture.weights[a].total_cmp(&mixture.weights[b]));
    let mut k = mixture.k();
    let mut dropped = vec![false; k];
    for &i in &order {
        if k <= k_min.max(1) || mixture.weights[i] >= eps {
            break;
        }
        dropped[i] = true;
        k -= 1;
    }
    let keep: Vec<usize> = (0..mixture.k()).filter(|&i| !dropped[i]).collect();
    if keep.len() == mixture.k() {
        return mixture.clone();
    }
    mixture.keep(&keep)
}

fn refit(samples: &DMatrix<f64>, mixture: &GaussianMixture, h: f64) -> Result<GaussianMixture> {
    let gamma = e_step(samples, mixture)?;
    Ok(m_step(samples, &gamma, h)?.0)
}

/// Removes the lightest component while that lowers the criterion.
///
/// Both the current and the reduced mixture get one E/M pass at the same
/// `h` before their criteria are compared, so the removal is judged on
/// refitted parameters rather than on a stale fit.
pub fn harmony_prune(samples: &DMatrix<f64>, mixture: &GaussianMixture, h: f64, k_min: usize) -> Result<GaussianMixture> {
    let mut current = mixture.clone();
    while current.k() > k_min.max(1) {
        let lightest = (0..current.k())
            .min_by(|&a, &b| current.weights[a].total_cmp(&current.weights[b]))
            .expect("nonempty mixture");
        let keep: Vec<usize> = (0..current.k()).filter(|&i| i != lightest).collect();
        let reduced = refit(samples, &current.keep(&keep), h)?;
        let full = refit(samples, &current, h)?;
        if byy_criterion(&reduced, h)? < byy_criterion(&full, h)? {
            current = reduced;
        } else {
            break;
        }
    }
    Ok(current)
}

/// Tuning of the smoothed EM fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmemConfig {
    pub k_min: usize,
    pub eps_screen: f64,
    /// Step for the smoothing update; `None` means `0.01 h0²`.
    pub eta: Option<f64>,
    pub max_inner: usize,
    /// Also drop components whose removal lowers the criterion.
    pub prune_by_criterion: bool,
}

impl Default for SmemConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            eps_screen: 0.05,
            eta: None,
            max_inner: 50,
            prune_by_criterion: true,
        }
    }
}

/// Result of [`smem_fit`].
#[derive(Debug, Clone)]
pub struct SmemFit {
    pub mixture: GaussianMixture,
    /// Memberships of the samples under `mixture`.
    pub gamma: DMatrix<f64>,
    pub h: f64,
    /// Criterion values of the accepted states, starting with the initial one.
    pub criterion: Vec<f64>,
    /// The accepted states themselves, aligned with `criterion`.
    pub accepted: Vec<GaussianMixture>,
}

/// Smoothed EM with screening, starting from `init`.
///
/// Each round screens light components (by weight and, if enabled, by
/// [`harmony_prune`]), runs one E and M step and one
/// smoothing update; the round is kept only while the criterion decreases.
pub fn smem_fit(samples: &DMatrix<f64>, init: &GaussianMixture, config: &SmemConfig) -> Result<SmemFit> {
    let (n, ne) = samples.shape();
    if ne == 0 {
        return Err(Error::validation("cannot fit a mixture to an empty ensemble"));
    }
    if init.dim() != n {
        return Err(Error::validation("initial mixture dimension differs from the samples"));
    }
    let h0 = initial_smoothing(samples);
    if h0 <= H_FLOOR || !h0.is_finite() {
        warn!("ensemble has collapsed to a point; fitting a single component");
        let h = H_FLOOR;
        let mixture = GaussianMixture::gaussian(samples.column(0).into_owned(), DMatrix::identity(n, n) * (h * h))?;
        let criterion = vec![byy_criterion(&mixture, h)?];
        return Ok(SmemFit {
            accepted: vec![mixture.clone()],
            mixture,
            gamma: DMatrix::from_element(1, ne, 1.0),
            h,
            criterion,
        });
    }
    let eta = config.eta.unwrap_or(0.01 * h0 * h0);
    let sq_dist = pairwise_sq_distances(samples);

    let mut h = h0;
    let mut mixture = init.clone();
    let mut criterion = Vec::new();
    let mut accepted = Vec::new();
    for _ in 0..config.max_inner {
        mixture = screen_components(&mixture, config.eps_screen, config.k_min);
        if config.prune_by_criterion {
            mixture = harmony_prune(samples, &mixture, h, config.k_min)?;
        }
        let j_now = byy_criterion(&mixture, h)?;
        // screening may have changed the last accepted state
        if criterion.is_empty() {
            criterion.push(j_now);
            accepted.push(mixture.clone());
        } else {
            *criterion.last_mut().expect("nonempty") = j_now;
            *accepted.last_mut().expect("nonempty") = mixture.clone();
        }
        let gamma = e_step(samples, &mixture)?;
        let (next, _) = m_step(samples, &gamma, h)?;
        let h_next = update_smoothing(h, &sq_dist, n, &next, eta)?;
        let j_next = byy_criterion(&next, h_next)?;
        if !(j_next < j_now) {
            break;
        }
        mixture = next;
        h = h_next;
        criterion.push(j_next);
        accepted.push(mixture.clone());
    }
    let gamma = e_step(samples, &mixture)?;
    Ok(SmemFit {
        mixture,
        gamma,
        h,
        criterion,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_densities() {
        let x = DVector::from_element(1, 0.0);
        let p = component_pdf(&x, &x, &DMatrix::identity(1, 1)).unwrap();
        assert!((p - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        let z = DVector::zeros(2);
        let p = component_pdf(&z, &z, &DMatrix::identity(2, 2)).unwrap();
        assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(component_pdf(&z, &z, &(-DMatrix::<f64>::identity(2, 2))).is_err());
    }

    #[test]
    fn criterion_hand_values() {
        let g = GaussianMixture::gaussian(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert_eq!(byy_criterion(&g, 0.0).unwrap(), 0.0);
        let g = GaussianMixture::gaussian(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!((byy_criterion(&g, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let two = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![DVector::zeros(2); 2],
            vec![DMatrix::identity(2, 2); 2],
        )
        .unwrap();
        assert!((byy_criterion(&two, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn screening_examples() {
        let mk = |w: Vec<f64>| {
            let k = w.len();
            GaussianMixture::new(w, vec![DVector::zeros(1); k], vec![DMatrix::identity(1, 1); k]).unwrap()
        };
        let s = screen_components(&mk(vec![0.6, 0.39, 0.01]), 0.02, 2);
        assert_eq!(s.k(), 2);
        assert!((s.weights()[0] - 0.6 / 0.99).abs() < 1e-15);
        assert!((s.weights()[1] - 0.39 / 0.99).abs() < 1e-15);
        let s = screen_components(&mk(vec![0.98, 0.01, 0.01]), 0.02, 2);
        assert_eq!(s.k(), 2);
        let s = screen_components(&mk(vec![0.99, 0.01]), 0.5, 2);
        assert_eq!(s.k(), 2);
    }

    #[test]
    fn smoothing_hand_value() {
        // k = 1, Σ = 1, samples {0, 1}, h = 1
        let samples = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let g = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let s = smoothing_score(1.0, &pairwise_sq_distances(&samples), 1, &g).unwrap();
        let e = (-0.5f64).exp();
        let pair = 2.0 * e / (2.0 + 2.0 * e);
        assert!((s - (1.0 - 1.0 - pair)).abs() < 1e-15);
        assert!((s + 0.377540668798145).abs() < 1e-12);
    }

    #[test]
    fn initial_smoothing_matches_pairwise_sum() {
        let samples = DMatrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin());
        let brute: f64 = pairwise_sq_distances(&samples).iter().sum();
        let h0 = (brute / (3.0 * 343.0)).sqrt();
        assert!((initial_smoothing(&samples) - h0).abs() < 1e-14);
    }
}
