//! Leapfrog solver for `u_tt = Delta_G u` with Neumann boundary sources and
//! zero initial data, and assembly of the discrete response operator.
//!
//! The semi-discrete system is `M u'' + K u = S F` with lumped mass `M`
//! (the volume weights), symmetric stiffness `K` and boundary weights `S`.
//! In 2D the stiffness is the 5-point edge Laplacian with half weight on
//! boundary edges, which is the ghost-node Neumann scheme written in
//! symmetric form.

mod basis;
mod response;
mod solver;

pub use basis::{BasisElement, BasisSpec, BoundarySource};
pub use response::{
    assemble_response, read_response, read_response_for, write_response, write_response_csv,
    ResponseHeader, ResponseOperator,
};
pub use solver::{boundary_trace, solve_wave, TimeGrid, WaveField, WaveSolver, DEFAULT_CFL};
