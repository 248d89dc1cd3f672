//! Dense and banded linear-algebra helpers shared by the solvers and the
//! ensemble machinery.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

/// Symmetric positive-definite matrix stored as its lower band.
///
/// Row `i` holds columns `i - bw ..= i`; entries left of column 0 are
/// padding and stay zero.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)`; the symmetric partner is implied.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({r},{c}) outside band {}", self.bw);
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            return 0.0;
        }
        self.data[self.idx(r, c)]
    }

    /// Adds `v` to every diagonal entry.
    pub fn shift_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-place band Cholesky factorization `A = L Lᵀ`.
    pub fn factor(mut self) -> Result<BandedCholesky> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                // Shared column range of rows i and j is [max(lo_i, lo_j), j).
                let lo_j = j.saturating_sub(self.bw);
                let k0 = lo.max(lo_j);
                let mut s = self.data[i * w + (j + self.bw - i)];
                let ri = i * w + self.bw - i;
                let rj = j * w + self.bw - j;
                for k in k0..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "banded matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

/// Factor produced by [`BandedSpd::factor`].
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bw;
        let w = bw + 1;
        let d = &self.l.data;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + bw - i + lo..i * w + bw + 1];
            let s = dot(&row[..i - lo], &b[lo..i]);
            b[i] = (b[i] - s) / row[i - lo];
        }
        // Lᵀ x = y, sweeping rows of L so memory access stays contiguous.
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + bw - i + lo..i * w + bw + 1];
            let xi = b[i] / row[i - lo];
            b[i] = xi;
            for (x, l) in b[lo..i].iter_mut().zip(&row[..i - lo]) {
                *x -= l * xi;
            }
        }
    }
}

/// Four running sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization, retrying with a growing diagonal jitter.
///
/// Returns the factor and the jitter that was finally added (zero when the
/// matrix factored as given).
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("matrix has non-finite entries".into()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let n = m.nrows().max(1);
    let scale = (m.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    let mut jitter = scale * 1e-12;
    for _ in 0..8 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            log::debug!("cholesky succeeded after jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= 100.0;
    }
    Err(Error::Factorization(format!(
        "{}x{} matrix is not positive definite even with jitter",
        m.nrows(),
        m.ncols()
    )))
}

/// Symmetrizes `m` and clips its eigenvalues from below at `floor`.
///
/// Fails when no eigenvalue exceeds `floor`.
pub fn clip_to_spd(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&v| !(v > floor)) {
        return Err(Error::DegenerateHessian(
            "all eigenvalues are at or below the clipping floor".into(),
        ));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&clipped) * q.transpose())))
}

/// `log det A` from its Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `tr(A⁻¹)` from its Cholesky factor.
pub fn trace_of_inverse(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.inverse().trace()
}

/// Euclidean norm of `a - b`.
pub fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize, bw: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.01);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
            if i + bw < n {
                a.add(i + bw, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn banded_solve_matches_dense() {
        let a = laplacian_like(40, 5);
        let dense = a.to_dense();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = b.clone();
        a.factor().unwrap().solve_in_place(&mut x);
        let xd = dense.cholesky().unwrap().solve(&DVector::from_vec(b));
        for i in 0..40 {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn banded_rejects_indefinite() {
        let mut a = BandedSpd::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.factor(), Err(Error::Solver(_))));
    }

    #[test]
    fn clip_repairs_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let r = clip_to_spd(&m, 1e-12).unwrap();
        assert!(r.clone().cholesky().is_some());
        assert!((r[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(clip_to_spd(&DMatrix::zeros(2, 2), 1e-12).is_err());
    }

    #[test]
    fn jitter_recovers_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, jitter) = cholesky_with_jitter(&m).unwrap();
        assert!(jitter > 0.0);
    }
}
