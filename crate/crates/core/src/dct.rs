//! Orthonormal 2D cosine basis on a cell grid.
//!
//! Column `(i, j)` evaluated at cell `(m, n)` is
//! `2 α(i) α(j) / √(nx ny) · cos(π(2m+1)i / 2nx) · cos(π(2n+1)j / 2ny)`
//! with `α(0) = 1/√2` and `α(k) = 1` otherwise. Cells are indexed
//! `m * ny + n`, matching [`crate::forward::Grid2D::cell`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Order in which frequency pairs `(i, j)` are enumerated for truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Linear index `i * ny + j`.
    #[serde(rename = "paper_linear")]
    Linear,
    /// By total frequency `i + j`, then by `i`.
    #[default]
    Zigzag,
}

/// Frequency pairs of an `nx × ny` grid in the requested order.
pub fn frequency_order(nx: usize, ny: usize, ordering: Ordering) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).collect();
    if ordering == Ordering::Zigzag {
        pairs.sort_by_key(|&(i, j)| (i + j, i));
    }
    pairs
}

#[inline]
fn alpha(k: usize) -> f64 {
    if k == 0 {
        FRAC_1_SQRT_2
    } else {
        1.0
    }
}

fn column(nx: usize, ny: usize, i: usize, j: usize) -> impl Iterator<Item = f64> {
    let scale = 2.0 * alpha(i) * alpha(j) / ((nx * ny) as f64).sqrt();
    let cx: Vec<f64> = (0..nx)
        .map(|m| (PI * (2 * m + 1) as f64 * i as f64 / (2 * nx) as f64).cos())
        .collect();
    let cy: Vec<f64> = (0..ny)
        .map(|n| (PI * (2 * n + 1) as f64 * j as f64 / (2 * ny) as f64).cos())
        .collect();
    (0..nx * ny).map(move |p| scale * cx[p / ny] * cy[p % ny])
}

/// Retained columns of the cosine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    nx: usize,
    ny: usize,
    /// Linear indices `i * ny + j` of the retained columns.
    retained: Vec<usize>,
    columns: DMatrix<f64>,
}

impl DctBasis {
    /// First `n_c` columns under `ordering`.
    pub fn build(nx: usize, ny: usize, n_c: usize, ordering: Ordering) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::validation("basis needs a nonempty grid"));
        }
        if n_c == 0 || n_c > nx * ny {
            return Err(Error::validation(format!(
                "truncation {n_c} must lie in 1..={}",
                nx * ny
            )));
        }
        let retained: Vec<usize> = frequency_order(nx, ny, ordering)
            .into_iter()
            .take(n_c)
            .map(|(i, j)| i * ny + j)
            .collect();
        Ok(Self::from_indices(nx, ny, retained))
    }

    /// Basis with the given linear column indices, in that order.
    pub fn with_columns(nx: usize, ny: usize, retained: Vec<usize>) -> Result<Self> {
        if nx == 0 || ny == 0 || retained.is_empty() {
            return Err(Error::validation("basis needs a nonempty grid and column set"));
        }
        let mut seen = vec![false; nx * ny];
        for &r in &retained {
            if r >= nx * ny || std::mem::replace(&mut seen[r], true) {
                return Err(Error::validation(format!("column index {r} is out of range or repeated")));
            }
        }
        Ok(Self::from_indices(nx, ny, retained))
    }

    fn from_indices(nx: usize, ny: usize, retained: Vec<usize>) -> Self {
        let n_m = nx * ny;
        let mut columns = DMatrix::zeros(n_m, retained.len());
        for (c, &r) in retained.iter().enumerate() {
            for (p, v) in column(nx, ny, r / ny, r % ny).enumerate() {
                columns[(p, c)] = v;
            }
        }
        Self {
            nx,
            ny,
            retained,
            columns,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Retained frequency pairs `(i, j)`.
    pub fn frequencies(&self) -> Vec<(usize, usize)> {
        self.retained.iter().map(|r| (r / self.ny, r % self.ny)).collect()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Basis keeping only the columns at `positions` (indices into the
    /// current retained list), in the given order.
    pub fn restrict(&self, positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::validation("cannot restrict to an empty set of columns"));
        }
        let mut retained = Vec::with_capacity(positions.len());
        for &p in positions {
            let r = *self.retained.get(p).ok_or_else(|| {
                Error::validation(format!("position {p} beyond {} retained columns", self.retained.len()))
            })?;
            if retained.contains(&r) {
                return Err(Error::validation(format!("position {p} repeated")));
            }
            retained.push(r);
        }
        let columns = self.columns.select_columns(positions);
        Ok(Self {
            nx: self.nx,
            ny: self.ny,
            retained,
            columns,
        })
    }

    /// Field `Φ θ`.
    pub fn synthesize(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n_retained() {
            return Err(Error::validation(format!(
                "{} coefficients for {} basis columns",
                theta.len(),
                self.n_retained()
            )));
        }
        Ok((&self.columns * DVector::from_column_slice(theta)).as_slice().to_vec())
    }

    /// Retained coefficients `Φᵀ A`.
    pub fn project(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.nx * self.ny {
            return Err(Error::validation(format!(
                "field has {} values for a {}x{} grid",
                field.len(),
                self.nx,
                self.ny
            )));
        }
        Ok((self.columns.tr_mul(&DVector::from_column_slice(field)))
            .as_slice()
            .to_vec())
    }
}

/// Full coefficient vector of `field`, indexed `i * ny + j`.
pub fn analyze(field: &[f64], nx: usize, ny: usize) -> Result<Vec<f64>> {
    if field.len() != nx * ny {
        return Err(Error::validation(format!(
            "field has {} values for a {nx}x{ny} grid",
            field.len()
        )));
    }
    // separable transform: along y for every row, then along x
    let cos_x: Vec<Vec<f64>> = (0..nx)
        .map(|i| {
            (0..nx)
                .map(|m| alpha(i) * (PI * (2 * m + 1) as f64 * i as f64 / (2 * nx) as f64).cos())
                .collect()
        })
        .collect();
    let cos_y: Vec<Vec<f64>> = (0..ny)
        .map(|j| {
            (0..ny)
                .map(|n| alpha(j) * (PI * (2 * n + 1) as f64 * j as f64 / (2 * ny) as f64).cos())
                .collect()
        })
        .collect();
    let mut tmp = vec![0.0; nx * ny];
    for m in 0..nx {
        for j in 0..ny {
            tmp[m * ny + j] = (0..ny).map(|n| cos_y[j][n] * field[m * ny + n]).sum();
        }
    }
    let scale = 2.0 / ((nx * ny) as f64).sqrt();
    let mut out = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = scale * (0..nx).map(|m| cos_x[i][m] * tmp[m * ny + j]).sum::<f64>();
        }
    }
    Ok(out)
}

/// Positions to keep so that the kept `|θ̄|` mass reaches `alpha` of the
/// total.
///
/// Components are ranked by magnitude (ties keep ascending index) and the
/// shortest prefix reaching the threshold is kept. The result is sorted
/// ascending. A zero vector keeps everything.
pub fn reduce_dimension(theta_mean: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::validation(format!("mass fraction {alpha} must lie in (0, 1]")));
    }
    if theta_mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite mean coefficients"));
    }
    let mut order: Vec<usize> = (0..theta_mean.len()).collect();
    order.sort_by(|&a, &b| theta_mean[b].abs().total_cmp(&theta_mean[a].abs()));
    let total: f64 = order.iter().map(|&k| theta_mean[k].abs()).sum();
    if total == 0.0 {
        return Ok((0..theta_mean.len()).collect());
    }
    let mut keep = Vec::new();
    let mut mass = 0.0;
    for &k in &order {
        if theta_mean[k] == 0.0 {
            break;
        }
        keep.push(k);
        mass += theta_mean[k].abs();
        if mass >= alpha * total {
            break;
        }
    }
    keep.sort_unstable();
    Ok(keep)
}
