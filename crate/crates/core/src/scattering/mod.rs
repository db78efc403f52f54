//! Stationary scattering on model ends.
//!
//! Each end `[wall, inf) x M_0` with metric `dr^2 + rho(r) h` is reduced to
//! channel equations through the cross-section eigenvalues. Channels are
//! integrated from a Neumann wall with an adaptive Runge–Kutta scheme and
//! matched to unit-flux model waves beyond the perturbation:
//!
//! * [`compute_smatrix`] and [`solve_radial`] build the S-matrix over the
//!   open channels (closed channels matched to decaying solutions);
//! * [`nd_map_interior`] and [`smatrix_ndmap_bridge`] relate the interior
//!   Neumann-to-Dirichlet map at `r = 2` and the S-matrix;
//! * [`cusp_generalized_smatrix`] handles the growing/decaying cusp modes.

mod bridge;
mod cusp;
pub mod ode;
mod profile;
mod radial;

pub use bridge::{nd_map_interior, ndmap_to_smatrix, smatrix_ndmap_bridge, smatrix_to_ndmap, BridgeData, NDMap};
pub use cusp::{cusp_generalized_smatrix, CuspModel, GeneralizedSMatrix, CONDITIONING_CAP, RAW_EXPONENT_CAP};
pub use profile::{Bump, Coupling, EndProfile, Perturbation, ProfileKind, INTERFACE};
pub use radial::{
    b_star_seminorm, compute_smatrix, radiation_residuals, solve_radial, RadialSolution, SMatrix, ScatterOptions,
    WaveClass,
};
