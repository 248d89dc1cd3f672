//! Closed-form posterior of a linear model under a Gaussian-mixture prior,
//! plus a brute-force quadrature check for one and two dimensions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::gmm::{log_gaussian_pdf, GaussianMixture};
use crate::ies::ForwardModel;
use crate::linalg::symmetrize;
use crate::{Error, Result};

/// `d = G θ + ε`, `ε ~ N(0, C_D)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    g: DMatrix<f64>,
    c_d: DMatrix<f64>,
    c_d_chol: Cholesky<f64, Dyn>,
}

impl LinearModel {
    pub fn new(g: DMatrix<f64>, c_d: DMatrix<f64>) -> Result<Self> {
        if c_d.shape() != (g.nrows(), g.nrows()) {
            return Err(Error::validation(format!(
                "noise covariance is {}x{} but G has {} rows",
                c_d.nrows(),
                c_d.ncols(),
                g.nrows()
            )));
        }
        if g.iter().chain(c_d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("linear model has non-finite entries"));
        }
        let c_d_chol = Cholesky::new(c_d.clone())
            .ok_or_else(|| Error::validation("noise covariance is not positive definite"))?;
        Ok(Self { g, c_d, c_d_chol })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn c_d(&self) -> &DMatrix<f64> {
        &self.c_d
    }

    /// `log p(d | θ)`.
    pub fn log_likelihood(&self, d: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let r = d - &self.g * theta;
        let z = self.c_d_chol.l().solve_lower_triangular(&r).expect("invertible factor");
        let n = d.len() as f64;
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + crate::linalg::log_det(&self.c_d_chol) + z.norm_squared())
    }
}

impl ForwardModel for LinearModel {
    fn n_params(&self) -> usize {
        self.g.ncols()
    }

    fn n_data(&self) -> usize {
        self.g.nrows()
    }

    fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.g * theta)
    }
}

fn inverse_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(symmetrize(m))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::validation(format!("{what} is not positive definite")))
}

/// Posterior mixture of a linear model.
///
/// Component `i` is the Gaussian conditional of prior component `i`; its
/// weight is proportional to `π_i · N(d | G μ_i, G Σ_i Gᵀ + C_D)`, the
/// marginal likelihood of the data under that component.
pub fn linear_gmm_posterior(model: &LinearModel, d: &DVector<f64>, prior: &GaussianMixture) -> Result<GaussianMixture> {
    if d.len() != model.n_data() || prior.dim() != model.n_params() {
        return Err(Error::validation("data, model and prior dimensions disagree"));
    }
    let g = &model.g;
    let cd_inv = model.c_d_chol.inverse();
    let gt_cdi = g.transpose() * &cd_inv;
    let info = &gt_cdi * g;
    let gt_cdi_d = &gt_cdi * d;
    let mut log_w = Vec::with_capacity(prior.k());
    let mut means = Vec::with_capacity(prior.k());
    let mut covs = Vec::with_capacity(prior.k());
    for i in 0..prior.k() {
        let (mu, sigma) = (&prior.means()[i], &prior.covariances()[i]);
        let sigma_inv = inverse_spd(sigma, "prior covariance")?;
        let post_cov = inverse_spd(&(&info + &sigma_inv), "posterior precision")?;
        means.push(&post_cov * (&gt_cdi_d + &sigma_inv * mu));
        covs.push(post_cov);
        let pred_cov = symmetrize(&(g * sigma * g.transpose() + &model.c_d));
        log_w.push(prior.weights()[i].ln() + log_gaussian_pdf(d, &(g * mu), &pred_cov)?);
    }
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    GaussianMixture::new(w.iter().map(|v| v / total).collect(), means, covs)
}

/// Tensor grid for [`quadrature_posterior`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

/// Normalized posterior density on a tensor grid.
#[derive(Debug, Clone)]
pub struct GriddedDensity {
    pub axes: Vec<Vec<f64>>,
    /// Values in row-major order (last axis fastest).
    pub density: Vec<f64>,
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let h = axis[1] - axis[0];
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

impl GriddedDensity {
    fn cell_weights(&self) -> Vec<f64> {
        let w: Vec<Vec<f64>> = self.axes.iter().map(|a| trapezoid_weights(a)).collect();
        match w.len() {
            1 => w[0].clone(),
            _ => w[0]
                .iter()
                .flat_map(|a| w[1].iter().map(move |b| a * b))
                .collect(),
        }
    }

    fn point(&self, k: usize) -> DVector<f64> {
        match self.axes.len() {
            1 => DVector::from_element(1, self.axes[0][k]),
            _ => {
                let n1 = self.axes[1].len();
                DVector::from_vec(vec![self.axes[0][k / n1], self.axes[1][k % n1]])
            }
        }
    }

    /// Trapezoid integral of the density.
    pub fn mass(&self) -> f64 {
        self.cell_weights().iter().zip(&self.density).map(|(w, p)| w * p).sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let w = self.cell_weights();
        let mut m = DVector::zeros(self.axes.len());
        for (k, p) in self.density.iter().enumerate() {
            m += self.point(k) * (w[k] * p);
        }
        m
    }

    /// Grid points in the same order as `density`.
    pub fn points(&self) -> Vec<DVector<f64>> {
        let n: usize = self.axes.iter().map(Vec::len).product();
        (0..n).map(|k| self.point(k)).collect()
    }
}

/// Prior times likelihood on a grid, normalized by the trapezoid rule.
pub fn quadrature_posterior(
    model: &LinearModel,
    d: &DVector<f64>,
    prior: &GaussianMixture,
    grid: &QuadratureGrid,
) -> Result<GriddedDensity> {
    let dim = model.n_params();
    if !(1..=2).contains(&dim) {
        return Err(Error::validation("quadrature is limited to one or two parameters"));
    }
    if grid.lower.len() != dim || grid.upper.len() != dim || grid.points.len() != dim {
        return Err(Error::validation("grid dimension differs from the model"));
    }
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|a| {
            let n = grid.points[a];
            (0..n)
                .map(|i| grid.lower[a] + (grid.upper[a] - grid.lower[a]) * i as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();
    if grid.points.iter().any(|&n| n < 2) || (0..dim).any(|a| !(grid.upper[a] > grid.lower[a])) {
        return Err(Error::validation("grid needs at least two points on a nonempty interval"));
    }
    let mut out = GriddedDensity {
        axes,
        density: Vec::new(),
    };
    let logs = out
        .points()
        .iter()
        .map(|t| Ok(prior.log_pdf(t)? + model.log_likelihood(d, t)))
        .collect::<Result<Vec<f64>>>()?;
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.density = logs.iter().map(|l| (l - m).exp()).collect();
    let mass = out.mass();
    for p in &mut out.density {
        *p /= mass;
    }
    Ok(out)
}
