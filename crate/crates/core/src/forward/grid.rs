use crate::{Error, Result};

/// Uniform cell grid on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::validation(format!(
                "grid needs at least 2 cells per axis, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Linear index of cell `(i, j)`; `x` is the slow axis.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Iterator over `(index, x, y)` of all cell centers.
    pub fn centers(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.nx).flat_map(move |i| {
            (0..self.ny).map(move |j| {
                let (x, y) = self.cell_center(i, j);
                (self.cell(i, j), x, y)
            })
        })
    }

    /// Lattice abscissae: `0`, the cell centers, `1`.
    pub fn lattice_x(&self) -> Vec<f64> {
        lattice(self.nx)
    }

    pub fn lattice_y(&self) -> Vec<f64> {
        lattice(self.ny)
    }

    /// Grid with twice the resolution in both directions.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
        }
    }
}

fn lattice(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut v = Vec::with_capacity(n + 2);
    v.push(0.0);
    v.extend((0..n).map(|i| (i as f64 + 0.5) * h));
    v.push(1.0);
    v
}

/// Cellwise permeability `a(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl PermeabilityField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::validation(format!(
                "permeability has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation(format!(
                "permeability values must be positive and finite, found {v}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_cells()])
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = grid.centers().map(|(_, x, y)| f(x, y)).collect();
        Self::new(grid, values)
    }

    /// `exp` of a log-permeability vector.
    pub fn from_log(grid: Grid2D, log_values: &[f64]) -> Result<Self> {
        Self::new(grid, log_values.iter().map(|v| v.exp()).collect())
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// State on the extended lattice, one snapshot per time level.
///
/// Lattice index is `ix * (ny + 2) + iy`; interior lattice points
/// (`1..=nx`, `1..=ny`) coincide with cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: Grid2D,
    times: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
}

impl StateField {
    pub(crate) fn new(grid: Grid2D, times: Vec<f64>, snapshots: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(times.len(), snapshots.len());
        Self {
            grid,
            times,
            snapshots,
        }
    }

    /// Builds a single-snapshot state from lattice values of `f`.
    pub fn from_lattice_fn(grid: Grid2D, time: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.lattice_x();
        let ys = grid.lattice_y();
        let vals = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(grid, vec![time], vec![vals])
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.snapshots[k]
    }

    pub fn last(&self) -> &[f64] {
        self.snapshots.last().expect("state has at least one snapshot")
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        (self.grid.nx() + 2, self.grid.ny() + 2)
    }

    /// Cell-center values of snapshot `k`, in cell order.
    pub fn cell_values(&self, k: usize) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let s = &self.snapshots[k];
        let mut out = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            let row = (i + 1) * (ny + 2);
            out.extend_from_slice(&s[row + 1..row + 1 + ny]);
        }
        out
    }

    pub(crate) fn lift(grid: Grid2D, left: f64, right: f64, cells: &[f64]) -> Vec<f64> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let w = ny + 2;
        let mut s = vec![0.0; (nx + 2) * w];
        for iy in 0..w {
            s[iy] = left;
            s[(nx + 1) * w + iy] = right;
        }
        for i in 0..nx {
            let row = (i + 1) * w;
            s[row + 1..row + 1 + ny].copy_from_slice(&cells[i * ny..(i + 1) * ny]);
            // zero normal derivative on the y boundaries
            s[row] = cells[i * ny];
            s[row + ny + 1] = cells[i * ny + ny - 1];
        }
        s
    }

    pub(crate) fn push(&mut self, time: f64, snapshot: Vec<f64>) {
        self.times.push(time);
        self.snapshots.push(snapshot);
    }
}
