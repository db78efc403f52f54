//! Quantities computable from boundary data alone.
//!
//! Everything here consumes a [`BoundaryDataSet`]: the response operator, the
//! boundary nodes with their surface weights, and a horizon. Interior speeds
//! and fields are never touched.
//!
//! Sources are coefficient vectors over the response basis. The volume inner
//! product of two waves at time `T` comes from a discrete (t, s) wave
//! recursion driven by boundary values only; the control, localized inner
//! product and positivity functional are built on top of the resulting Gram
//! matrix.

mod blago;
mod control;
mod data;
mod gram;
mod influence;

pub use blago::blago_inner_product;
pub use control::{
    choose_alpha, control_lcurve, control_projection, ControlSolution, DEFAULT_ALPHA_LADDER,
};
pub use data::BoundaryDataSet;
pub use gram::{gram_matrix, Gram};
pub use influence::{
    influence_inner_product, positivity_functional, Dictionary, InfluenceEngine, Positivity,
};
