use super::StateField;
use crate::{Error, Result};

/// Sensor coordinates in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    points: Vec<[f64; 2]>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

impl Sensors {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        for p in &points {
            if !p.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::validation(format!(
                    "sensor ({}, {}) lies outside the unit square",
                    p[0], p[1]
                )));
            }
        }
        Ok(Self { points })
    }

    /// `nx × ny` points spanning `x_range × y_range` with endpoints included,
    /// ordered by `x` first, then `y`.
    pub fn lattice(nx: usize, ny: usize, x_range: [f64; 2], y_range: [f64; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::validation("sensor lattice needs at least one point per axis"));
        }
        let xs = linspace(x_range[0], x_range[1], nx);
        let ys = linspace(y_range[0], y_range[1], ny);
        Self::new(
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
                .collect(),
        )
    }

    /// Evenly spaced points strictly inside the square: `x = k/(nx+1)`,
    /// `y = l/(ny+1)`.
    pub fn interior_lattice(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::validation("sensor lattice needs at least one point per axis"));
        }
        let hx = 1.0 / (nx + 1) as f64;
        let hy = 1.0 / (ny + 1) as f64;
        Self::lattice(nx, ny, [hx, 1.0 - hx], [hy, 1.0 - hy])
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Interval index and local coordinate of `v` on the sorted lattice `xs`.
fn locate(xs: &[f64], v: f64) -> (usize, f64) {
    let n = xs.len();
    let k = xs.partition_point(|&x| x <= v).clamp(1, n - 1) - 1;
    let t = (v - xs[k]) / (xs[k + 1] - xs[k]);
    (k, t)
}

fn bilinear(values: &[f64], w: usize, ix: (usize, f64), iy: (usize, f64)) -> f64 {
    let (i, tx) = ix;
    let (j, ty) = iy;
    let v00 = values[i * w + j];
    let v01 = values[i * w + j + 1];
    let v10 = values[(i + 1) * w + j];
    let v11 = values[(i + 1) * w + j + 1];
    (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
}

/// Bilinear interpolation of the state at each sensor and at `time`.
///
/// Between stored time levels the two neighbouring snapshots are blended
/// linearly.
pub fn observe(state: &StateField, sensors: &Sensors, time: f64) -> Result<Vec<f64>> {
    let times = state.times();
    let t0 = times[0];
    let t1 = *times.last().expect("state has at least one snapshot");
    let tol = 1e-9 * t1.abs().max(1.0);
    if !(time >= t0 - tol && time <= t1 + tol) {
        return Err(Error::validation(format!(
            "observation time {time} outside [{t0}, {t1}]"
        )));
    }
    let grid = state.grid();
    let xs = grid.lattice_x();
    let ys = grid.lattice_y();
    let w = ys.len();
    let (k, s) = if times.len() == 1 {
        (0, 0.0)
    } else {
        let (k, s) = locate(times, time);
        (k, s.clamp(0.0, 1.0))
    };
    let exact = s.abs() < 1e-12 || times.len() == 1;
    let mut out = Vec::with_capacity(sensors.len());
    for p in sensors.points() {
        let ix = locate(&xs, p[0]);
        let iy = locate(&ys, p[1]);
        let a = bilinear(state.snapshot(k), w, ix, iy);
        out.push(if exact {
            a
        } else if (1.0 - s).abs() < 1e-12 {
            bilinear(state.snapshot(k + 1), w, ix, iy)
        } else {
            (1.0 - s) * a + s * bilinear(state.snapshot(k + 1), w, ix, iy)
        });
    }
    Ok(out)
}
