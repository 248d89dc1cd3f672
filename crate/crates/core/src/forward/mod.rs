//! Forward problems on the unit square and the observation operator.
//!
//! All solvers use cell-centered finite differences on a uniform
//! `nx × ny` grid with harmonic face averaging of the permeability.
//! Dirichlet data are imposed on `x = 0` and `x = 1`; the `y` boundaries
//! are no-flow. States are reported on a tensor lattice made of the cell
//! centers plus the four boundary lines, so that bilinear interpolation is
//! defined everywhere in `[0, 1]²` and Dirichlet nodes carry their exact
//! boundary values.

mod flow;
mod fracture;
mod grid;
mod observe;
mod source;

pub use flow::{
    solve_fractional_diffusion, solve_fractional_diffusion_with, solve_steady_flow,
    solve_unsteady_flow, solve_unsteady_flow_with, time_levels, vertical_line_fluxes, Boundary, FlowOperator,
    SteadySolver,
};
pub use fracture::{arctan_map, arctan_map_inverse, embed_fracture, FractureSpec};
pub use grid::{Grid2D, PermeabilityField, StateField};
pub use observe::{observe, Sensors};
pub use source::{gaussian_source, SourceSpec};
