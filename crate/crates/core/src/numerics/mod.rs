//! Integration, propagation and root finding.

pub mod ode;
mod propagate;
mod root;

pub use propagate::{
    direction_of, propagate, propagate_final, AugmentedState, AugmentedSystem, PropagateOptions, Sample, Trajectory,
    MIN_SAMPLES,
};
pub use root::{solve_root, RootOptions, RootReport};
