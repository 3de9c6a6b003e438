//! Networks of geometrically exact beams in intrinsic variables: simulation by
//! characteristics, nodal profile control synthesis, and reconstruction of
//! positions and rotations.

pub mod beam;
pub mod control;
pub mod error;
pub mod fixtures;
pub mod geb;
pub mod interp;
pub mod kinematics;
pub mod network;
pub mod par;
pub mod planner;
pub mod solver;

pub use error::{Error, Result};
