//! Forward models of the three twin experiments plus the linear test problem.

use iesis_core::forward::{
    arctan_map, embed_fracture, gaussian_source, observe, solve_fractional_diffusion, solve_unsteady_flow,
    FractureSpec, Grid2D, PermeabilityField, Sensors, SourceSpec, StateField, SteadySolver,
};
use iesis_core::ies::ForwardModel;
use iesis_core::{DVector, Error, Result};

use crate::config::{ExperimentConfig, ObservationSection, SensorLayout};

pub fn sensors(obs: &ObservationSection) -> Result<Sensors> {
    match obs.layout {
        SensorLayout::Lattice => Sensors::lattice(obs.sensors_x, obs.sensors_y, obs.x_range, obs.y_range),
        SensorLayout::Interior => Sensors::interior_lattice(obs.sensors_x, obs.sensors_y),
    }
}

/// `log a(x, y) = 1 + 0.5x + y`.
pub fn source_background(grid: Grid2D) -> Result<PermeabilityField> {
    PermeabilityField::from_fn(grid, |x, y| (1.0 + 0.5 * x + y).exp())
}

/// Steady flow with an unknown Gaussian source location `θ ∈ ℝ²`.
pub struct SourceModel {
    grid: Grid2D,
    solver: SteadySolver,
    sensors: Sensors,
    strength: f64,
    width: f64,
}

impl SourceModel {
    pub fn new(grid: Grid2D, sensors: Sensors, strength: f64, width: f64) -> Result<Self> {
        SourceSpec::GaussianBump {
            location: [0.5, 0.5],
            strength,
            width,
        }
        .validate()?;
        let solver = SteadySolver::new(&source_background(grid)?, Default::default())?;
        Ok(Self {
            grid,
            solver,
            sensors,
            strength,
            width,
        })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn state(&self, theta: &DVector<f64>) -> Result<StateField> {
        let f = gaussian_source([theta[0], theta[1]], self.strength, self.width, &self.grid);
        self.solver.solve(&f)
    }
}

impl ForwardModel for SourceModel {
    fn n_params(&self) -> usize {
        2
    }

    fn n_data(&self) -> usize {
        self.sensors.len()
    }

    fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != 2 {
            return Err(Error::validation("source location has two coordinates"));
        }
        let state = self.state(theta)?;
        Ok(DVector::from_vec(observe(&state, &self.sensors, 0.0)?))
    }
}

/// Unsteady flow driven by a cell field of log-permeability.
pub struct ChannelModel {
    grid: Grid2D,
    sensors: Sensors,
    source: f64,
    dt: f64,
    horizon: f64,
}

impl ChannelModel {
    pub fn new(grid: Grid2D, sensors: Sensors, source: f64, dt: f64, horizon: f64) -> Self {
        Self {
            grid,
            sensors,
            source,
            dt,
            horizon,
        }
    }

    pub fn state(&self, log_perm: &[f64]) -> Result<StateField> {
        let perm = PermeabilityField::from_log(self.grid, log_perm)?;
        let u0 = vec![0.0; self.grid.n_cells()];
        solve_unsteady_flow(&perm, &SourceSpec::Constant(self.source), &self.grid, self.dt, self.horizon, &u0)
    }
}

impl ForwardModel for ChannelModel {
    fn n_params(&self) -> usize {
        self.grid.n_cells()
    }

    fn n_data(&self) -> usize {
        self.sensors.len()
    }

    fn predict(&self, log_perm: &DVector<f64>) -> Result<DVector<f64>> {
        let state = self.state(log_perm.as_slice())?;
        Ok(DVector::from_vec(observe(&state, &self.sensors, self.horizon)?))
    }
}

/// Fractional diffusion with a single vertical fracture.
///
/// Parameters are the latent `q ∈ ℝ⁴`; `(α, x0, y0, L0) = ½ + arctan(q)/π`.
pub struct FractureModel {
    grid: Grid2D,
    sensors: Sensors,
    source: f64,
    fracture_permeability: f64,
    dt: f64,
    horizon: f64,
}

impl FractureModel {
    pub fn new(grid: Grid2D, sensors: Sensors, section: &crate::config::FractureSection, dt: f64, horizon: f64) -> Self {
        Self {
            grid,
            sensors,
            source: section.source,
            fracture_permeability: section.fracture_permeability,
            dt,
            horizon,
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// State for physical parameters `(α, x0, y0, L0)`.
    pub fn state_physical(&self, theta: &[f64]) -> Result<StateField> {
        let spec = FractureSpec {
            x0: theta[1],
            y0: theta[2],
            length: theta[3],
            permeability: self.fracture_permeability,
        };
        let perm = embed_fracture(&spec, &PermeabilityField::constant(self.grid, 1.0)?)?;
        let u0 = vec![0.0; self.grid.n_cells()];
        solve_fractional_diffusion(
            &perm,
            theta[0],
            &SourceSpec::Constant(self.source),
            &self.grid,
            self.dt,
            self.horizon,
            &u0,
        )
    }

    pub fn state(&self, q: &DVector<f64>) -> Result<StateField> {
        self.state_physical(&arctan_map(q.as_slice())?)
    }
}

impl ForwardModel for FractureModel {
    fn n_params(&self) -> usize {
        4
    }

    fn n_data(&self) -> usize {
        self.sensors.len()
    }

    fn predict(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        if q.len() != 4 {
            return Err(Error::validation("fracture model takes four parameters"));
        }
        let state = self.state(q)?;
        Ok(DVector::from_vec(observe(&state, &self.sensors, self.horizon)?))
    }
}

/// Midpoint `(x0, y0)` and endpoints of a fracture in physical parameters.
pub fn fracture_endpoints(theta: &[f64]) -> [f64; 4] {
    FractureSpec::new(theta[1], theta[2], theta[3]).endpoints()
}

pub(crate) fn grids(cfg: &ExperimentConfig) -> Result<(Grid2D, Grid2D)> {
    let g = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::validation("experiment needs a [grid] section"))?;
    Ok((Grid2D::new(g.nx, g.ny)?, Grid2D::new(g.data_nx, g.data_ny)?))
}
