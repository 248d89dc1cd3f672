use super::{Grid2D, PermeabilityField, SourceSpec, StateField};
use crate::linalg::{BandedCholesky, BandedSpd};
use crate::{Error, Result};

/// Dirichlet values on the `x = 0` and `x = 1` edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub left: f64,
    pub right: f64,
}

impl Default for Boundary {
    fn default() -> Self {
        Self {
            left: 1.0,
            right: 0.0,
        }
    }
}

/// Discrete `-∇·(a∇u)` with its Dirichlet contribution.
#[derive(Debug, Clone)]
pub struct FlowOperator {
    grid: Grid2D,
    boundary: Boundary,
    matrix: BandedSpd,
    bc_rhs: Vec<f64>,
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl FlowOperator {
    pub fn assemble(perm: &PermeabilityField, boundary: Boundary) -> Result<Self> {
        if !(boundary.left.is_finite() && boundary.right.is_finite()) {
            return Err(Error::validation("non-finite boundary values"));
        }
        let grid = perm.grid();
        let (nx, ny) = (grid.nx(), grid.ny());
        let a = perm.values();
        let ihx2 = 1.0 / (grid.hx() * grid.hx());
        let ihy2 = 1.0 / (grid.hy() * grid.hy());
        let mut m = BandedSpd::zeros(grid.n_cells(), ny);
        let mut bc = vec![0.0; grid.n_cells()];
        for i in 0..nx {
            for j in 0..ny {
                let p = grid.cell(i, j);
                if i + 1 < nx {
                    let e = grid.cell(i + 1, j);
                    let t = harmonic(a[p], a[e]) * ihx2;
                    m.add(p, p, t);
                    m.add(e, e, t);
                    m.add(e, p, -t);
                }
                if j + 1 < ny {
                    let n = grid.cell(i, j + 1);
                    let t = harmonic(a[p], a[n]) * ihy2;
                    m.add(p, p, t);
                    m.add(n, n, t);
                    m.add(n, p, -t);
                }
                // Dirichlet faces sit half a cell away from the center.
                if i == 0 {
                    let t = 2.0 * a[p] * ihx2;
                    m.add(p, p, t);
                    bc[p] += t * boundary.left;
                }
                if i + 1 == nx {
                    let t = 2.0 * a[p] * ihx2;
                    m.add(p, p, t);
                    bc[p] += t * boundary.right;
                }
            }
        }
        Ok(Self {
            grid,
            boundary,
            matrix: m,
            bc_rhs: bc,
        })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn matrix(&self) -> &BandedSpd {
        &self.matrix
    }

    /// Right-hand side contribution of the Dirichlet data.
    pub fn boundary_rhs(&self) -> &[f64] {
        &self.bc_rhs
    }

    /// `A u - (f + b)` relative to `‖f + b‖`.
    pub fn relative_residual(&self, u: &[f64], source: &[f64]) -> f64 {
        let au = self.matrix.mul_vec(u);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..u.len() {
            let rhs = source[k] + self.bc_rhs[k];
            num += (au[k] - rhs).powi(2);
            den += rhs * rhs;
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    fn lift(&self, cells: &[f64]) -> Vec<f64> {
        StateField::lift(self.grid, self.boundary.left, self.boundary.right, cells)
    }

    fn factor_shifted(&self, shift: f64) -> Result<BandedCholesky> {
        let mut m = self.matrix.clone();
        if shift != 0.0 {
            m.shift_diagonal(shift);
        }
        m.factor()
    }
}

/// Total `x`-flux `-∫ a ∂u/∂x dy` through every vertical face line,
/// from `x = 0` to `x = 1` (`nx + 1` values).
pub fn vertical_line_fluxes(perm: &PermeabilityField, boundary: Boundary, cells: &[f64]) -> Vec<f64> {
    let grid = perm.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let a = perm.values();
    let mut out = vec![0.0; nx + 1];
    for j in 0..ny {
        let first = grid.cell(0, j);
        out[0] += -2.0 * a[first] * (cells[first] - boundary.left) / hx * hy;
        for i in 0..nx - 1 {
            let (p, e) = (grid.cell(i, j), grid.cell(i + 1, j));
            out[i + 1] += -harmonic(a[p], a[e]) * (cells[e] - cells[p]) / hx * hy;
        }
        let last = grid.cell(nx - 1, j);
        out[nx] += -2.0 * a[last] * (boundary.right - cells[last]) / hx * hy;
    }
    out
}

/// Reusable factorization of the steady operator.
#[derive(Debug, Clone)]
pub struct SteadySolver {
    op: FlowOperator,
    chol: BandedCholesky,
}

impl SteadySolver {
    pub fn new(perm: &PermeabilityField, boundary: Boundary) -> Result<Self> {
        let op = FlowOperator::assemble(perm, boundary)?;
        let chol = op.factor_shifted(0.0)?;
        Ok(Self { op, chol })
    }

    pub fn operator(&self) -> &FlowOperator {
        &self.op
    }

    /// Cell-center solution for a source sampled at cell centers.
    pub fn solve_cells(&self, source: &[f64]) -> Result<Vec<f64>> {
        if source.len() != self.op.grid.n_cells() {
            return Err(Error::validation("source length does not match grid"));
        }
        if source.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite source values"));
        }
        let mut u: Vec<f64> = source
            .iter()
            .zip(&self.op.bc_rhs)
            .map(|(f, b)| f + b)
            .collect();
        self.chol.solve_in_place(&mut u);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("steady solve produced non-finite values".into()));
        }
        Ok(u)
    }

    pub fn solve(&self, source: &[f64]) -> Result<StateField> {
        let cells = self.solve_cells(source)?;
        Ok(StateField::new(
            self.op.grid,
            vec![0.0],
            vec![self.op.lift(&cells)],
        ))
    }
}

fn check_grid(perm: &PermeabilityField, grid: &Grid2D) -> Result<()> {
    if perm.grid() != *grid {
        return Err(Error::validation("permeability field lives on a different grid"));
    }
    Ok(())
}

/// Steady `-∇·(a∇u) = f` with `u(0, y) = 1`, `u(1, y) = 0`.
pub fn solve_steady_flow(
    perm: &PermeabilityField,
    source: &SourceSpec,
    grid: &Grid2D,
) -> Result<StateField> {
    check_grid(perm, grid)?;
    let f = source.sample(grid)?;
    SteadySolver::new(perm, Boundary::default())?.solve(&f)
}

/// Number of steps and the uniform step actually used to reach `horizon`.
///
/// The step count is `⌈T/Δt⌉`; when `T/Δt` is not an integer the step is
/// shortened to `T / ⌈T/Δt⌉`.
pub fn time_levels(dt: f64, horizon: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::validation(format!("time step must be positive, got {dt}")));
    }
    if !(horizon.is_finite()) || horizon < dt * (1.0 - 1e-9) {
        return Err(Error::validation(format!(
            "horizon {horizon} must be at least one time step {dt}"
        )));
    }
    let r = horizon / dt;
    let n = if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
        r.round()
    } else {
        r.ceil()
    } as usize;
    Ok((n, horizon / n as f64))
}

fn check_initial(grid: &Grid2D, u0: &[f64]) -> Result<()> {
    if u0.len() != grid.n_cells() {
        return Err(Error::validation(format!(
            "initial state has {} values for {} cells",
            u0.len(),
            grid.n_cells()
        )));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("initial state has non-finite values"));
    }
    Ok(())
}

fn sample_source(grid: &Grid2D, source: &dyn Fn(f64) -> Vec<f64>, t: f64) -> Result<Vec<f64>> {
    let f = source(t);
    if f.len() != grid.n_cells() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "source at t={t} must be {} finite values",
            grid.n_cells()
        )));
    }
    Ok(f)
}

/// Implicit-Euler march of `∂u/∂t - ∇·(a∇u) = f` with the default
/// Dirichlet data. `u0` holds cell-center values.
pub fn solve_unsteady_flow(
    perm: &PermeabilityField,
    source: &SourceSpec,
    grid: &Grid2D,
    dt: f64,
    horizon: f64,
    u0: &[f64],
) -> Result<StateField> {
    check_grid(perm, grid)?;
    let f = source.sample(grid)?;
    solve_unsteady_flow_with(perm, Boundary::default(), &move |_| f.clone(), dt, horizon, u0)
}

/// Implicit-Euler march with explicit boundary data and a time-dependent
/// source `t ↦ f(·, t)` sampled at cell centers.
pub fn solve_unsteady_flow_with(
    perm: &PermeabilityField,
    boundary: Boundary,
    source: &dyn Fn(f64) -> Vec<f64>,
    dt: f64,
    horizon: f64,
    u0: &[f64],
) -> Result<StateField> {
    let grid = perm.grid();
    check_initial(&grid, u0)?;
    let (steps, dt) = time_levels(dt, horizon)?;
    let op = FlowOperator::assemble(perm, boundary)?;
    let chol = op.factor_shifted(1.0 / dt)?;
    let mut state = StateField::new(grid, vec![0.0], vec![op.lift(u0)]);
    let mut u = u0.to_vec();
    for n in 1..=steps {
        let t = n as f64 * dt;
        let f = sample_source(&grid, source, t)?;
        for k in 0..u.len() {
            u[k] = u[k] / dt + f[k] + op.bc_rhs[k];
        }
        chol.solve_in_place(&mut u);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite state at step {n}")));
        }
        state.push(t, op.lift(&u));
    }
    Ok(state)
}

/// Caputo time-fractional diffusion `D^α u - ∇·(a∇u) = f` with the L1
/// scheme, default Dirichlet data and `u(·, 0) = u0`.
pub fn solve_fractional_diffusion(
    perm: &PermeabilityField,
    alpha: f64,
    source: &SourceSpec,
    grid: &Grid2D,
    dt: f64,
    horizon: f64,
    u0: &[f64],
) -> Result<StateField> {
    check_grid(perm, grid)?;
    let f = source.sample(grid)?;
    solve_fractional_diffusion_with(
        perm,
        alpha,
        Boundary::default(),
        &move |_| f.clone(),
        dt,
        horizon,
        u0,
    )
}

/// L1-scheme solver with explicit boundary data and time-dependent source.
///
/// With `c = Δt^{-α} / Γ(2-α)` and `b_k = (k+1)^{1-α} - k^{1-α}` each step
/// solves `(c I + A) uⁿ = f(tⁿ) + c (uⁿ⁻¹ - Σ_{k=1}^{n-1} b_k (uⁿ⁻ᵏ - uⁿ⁻ᵏ⁻¹))`.
pub fn solve_fractional_diffusion_with(
    perm: &PermeabilityField,
    alpha: f64,
    boundary: Boundary,
    source: &dyn Fn(f64) -> Vec<f64>,
    dt: f64,
    horizon: f64,
    u0: &[f64],
) -> Result<StateField> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "fractional order must lie in (0, 1), got {alpha}"
        )));
    }
    let grid = perm.grid();
    check_initial(&grid, u0)?;
    let (steps, dt) = time_levels(dt, horizon)?;
    let op = FlowOperator::assemble(perm, boundary)?;
    let c = dt.powf(-alpha) / libm::tgamma(2.0 - alpha);
    let chol = op.factor_shifted(c)?;
    let weights: Vec<f64> = (0..steps)
        .map(|k| ((k + 1) as f64).powf(1.0 - alpha) - (k as f64).powf(1.0 - alpha))
        .collect();

    let ncell = grid.n_cells();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    history.push(u0.to_vec());
    // increments[m] = u^{m+1} - u^m
    let mut increments: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut state = StateField::new(grid, vec![0.0], vec![op.lift(u0)]);
    let mut rhs = vec![0.0; ncell];
    for n in 1..=steps {
        let t = n as f64 * dt;
        let f = sample_source(&grid, source, t)?;
        let prev = &history[n - 1];
        rhs[..ncell].copy_from_slice(&prev[..ncell]);
        for (k, w) in weights.iter().enumerate().take(n).skip(1) {
            // u^{n-k} - u^{n-k-1}
            let inc = &increments[n - k - 1];
            for p in 0..ncell {
                rhs[p] -= w * inc[p];
            }
        }
        for p in 0..ncell {
            rhs[p] = c * rhs[p] + f[p] + op.bc_rhs[p];
        }
        chol.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite state at step {n}")));
        }
        let inc: Vec<f64> = rhs.iter().zip(prev).map(|(a, b)| a - b).collect();
        increments.push(inc);
        state.push(t, op.lift(&rhs));
        history.push(rhs.clone());
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid2D {
        Grid2D::new(n, n).unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn harmonic_profile_is_exact() {
        let g = unit_grid(12);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let u = solve_steady_flow(&perm, &SourceSpec::Constant(0.0), &g).unwrap();
        let xs = g.lattice_x();
        let (_, w) = u.lattice_dims();
        for (ix, x) in xs.iter().enumerate() {
            for iy in 0..w {
                assert!((u.last()[ix * w + iy] - (1.0 - x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn steady_matches_dense_factorization() {
        let g = unit_grid(8);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let solver = SteadySolver::new(&perm, Boundary::default()).unwrap();
        let f = vec![1.0; g.n_cells()];
        let u = solver.solve_cells(&f).unwrap();
        let dense = solver.operator().matrix().to_dense();
        let rhs = nalgebra::DVector::from_iterator(
            g.n_cells(),
            f.iter().zip(solver.operator().boundary_rhs()).map(|(a, b)| a + b),
        );
        let lu = dense.lu().solve(&rhs).unwrap();
        for k in 0..g.n_cells() {
            assert!((u[k] - lu[k]).abs() < 1e-12);
        }
        assert!(solver.operator().relative_residual(&u, &f) < 1e-10);
    }

    #[test]
    fn source_experiment_has_interior_peak() {
        let g = unit_grid(50);
        let perm = PermeabilityField::from_fn(g, |x, y| (1.0 + 0.5 * x + y).exp()).unwrap();
        let src = SourceSpec::GaussianBump {
            location: [0.09, 0.23],
            strength: 2f64.exp(),
            width: 0.05,
        };
        let u = solve_steady_flow(&perm, &src, &g).unwrap().cell_values(0);
        let base = solve_steady_flow(&perm, &SourceSpec::Constant(0.0), &g)
            .unwrap()
            .cell_values(0);
        assert!(u.iter().all(|v| v.is_finite()));
        // the bump added by the source peaks next to it
        let bump: Vec<f64> = u.iter().zip(&base).map(|(a, b)| a - b).collect();
        let (imax, peak) = bump
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let (x, y) = g.cell_center(imax / 50, imax % 50);
        assert!(peak > 0.0 && bump.iter().all(|v| *v > -1e-12));
        assert!(((x - 0.09).powi(2) + (y - 0.23).powi(2)).sqrt() < 0.1, "peak at ({x}, {y})");
    }

    #[test]
    fn maximum_principle_and_flux_conservation() {
        let g = unit_grid(20);
        let perm = PermeabilityField::from_fn(g, |x, y| (2.0 * (5.0 * x).sin() * (3.0 * y).cos()).exp()).unwrap();
        let solver = SteadySolver::new(&perm, Boundary::default()).unwrap();
        let u = solver.solve_cells(&vec![0.0; g.n_cells()]).unwrap();
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
        let fl = vertical_line_fluxes(&perm, Boundary::default(), &u);
        for q in &fl {
            assert!((q - fl[0]).abs() <= 1e-8 * fl[0].abs());
        }
    }

    #[test]
    fn singular_or_invalid_inputs() {
        let g = unit_grid(4);
        assert!(PermeabilityField::constant(g, 0.0).is_err());
        assert!(PermeabilityField::constant(g, f64::NAN).is_err());
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let solver = SteadySolver::new(&perm, Boundary::default()).unwrap();
        assert!(solver.solve_cells(&[f64::INFINITY; 16]).is_err());
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let g = unit_grid(10);
        let perm = PermeabilityField::from_fn(g, |x, y| 1.0 + x * y).unwrap();
        let steady = SteadySolver::new(&perm, Boundary::default())
            .unwrap()
            .solve_cells(&vec![0.0; g.n_cells()])
            .unwrap();
        let traj =
            solve_unsteady_flow(&perm, &SourceSpec::Constant(0.0), &g, 0.1, 1.0, &steady).unwrap();
        assert_eq!(traj.n_snapshots(), 11);
        for k in 0..traj.n_snapshots() {
            let c = traj.cell_values(k);
            for (a, b) in c.iter().zip(&steady) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn implicit_euler_is_first_order() {
        let g = unit_grid(12);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let u0 = vec![0.0; g.n_cells()];
        let run = |dt: f64| {
            let s = solve_unsteady_flow(&perm, &SourceSpec::Constant(10.0), &g, dt, 1.0, &u0).unwrap();
            s.cell_values(s.n_snapshots() - 1)
        };
        let (a, b, c) = (run(1.0 / 50.0), run(1.0 / 100.0), run(1.0 / 200.0));
        let e1 = rel_l2(&a, &b);
        let e2 = rel_l2(&b, &c);
        let order = (e1 / e2).log2();
        assert!(order > 0.9, "observed order {order}");
        assert!(e1 < 1.0 / 50.0);
    }

    #[test]
    fn long_horizon_reaches_steady_state() {
        let g = unit_grid(16);
        let perm = PermeabilityField::from_fn(g, |x, _| if ((x * 8.0) as usize).is_multiple_of(2) { 1.0 } else { 20.0 }).unwrap();
        let steady = solve_steady_flow(&perm, &SourceSpec::Constant(10.0), &g).unwrap();
        let traj = solve_unsteady_flow(
            &perm,
            &SourceSpec::Constant(10.0),
            &g,
            0.05,
            20.0,
            &vec![0.0; g.n_cells()],
        )
        .unwrap();
        let e = rel_l2(&traj.cell_values(traj.n_snapshots() - 1), &steady.cell_values(0));
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn time_level_count() {
        assert_eq!(time_levels(0.02, 1.0).unwrap().0, 50);
        assert_eq!(time_levels(0.3, 1.0).unwrap().0, 4);
        assert!(time_levels(0.0, 1.0).is_err());
        assert!(time_levels(2.0, 1.0).is_err());
    }

    #[test]
    fn fractional_rejects_bad_order() {
        let g = unit_grid(4);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let u0 = vec![0.0; 16];
        for alpha in [0.0, 1.0, -0.5, 1.5] {
            assert!(solve_fractional_diffusion(&perm, alpha, &SourceSpec::Constant(1.0), &g, 0.1, 1.0, &u0).is_err());
        }
    }

    #[test]
    fn fractional_zero_dynamics() {
        let g = unit_grid(6);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let zero = Boundary { left: 0.0, right: 0.0 };
        let s = solve_fractional_diffusion_with(&perm, 0.5, zero, &|_| vec![0.0; 36], 0.1, 1.0, &vec![0.0; 36]).unwrap();
        for k in 0..s.n_snapshots() {
            assert!(s.snapshot(k).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn fractional_approaches_classical_limit() {
        let g = unit_grid(12);
        let perm = PermeabilityField::constant(g, 1.0).unwrap();
        let u0 = vec![0.0; g.n_cells()];
        let src = SourceSpec::Constant(10.0);
        let a = solve_fractional_diffusion(&perm, 0.999, &src, &g, 0.02, 1.0, &u0).unwrap();
        let b = solve_unsteady_flow(&perm, &src, &g, 0.02, 1.0, &u0).unwrap();
        let e = rel_l2(a.last(), b.last());
        assert!(e < 0.01, "{e}");
    }
}
