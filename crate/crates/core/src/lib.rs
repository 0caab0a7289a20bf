//! Indirect optimal control of low-thrust trajectories in modified equinoctial elements.
//!
//! Energy-, fuel- and time-optimal transfers are solved by single shooting on
//! the initial costates, each seeded from the energy-optimal solution.

pub mod control;
pub mod dynamics;
pub mod eo;
pub mod error;
pub mod fo;
pub mod mission;
pub mod numerics;
pub mod problem;
pub mod runner;
pub mod to;
pub mod units;

pub use control::{Costates, ControlLaw, LawKind};
pub use dynamics::{MeeState, PerturbationConfig, Propulsion};
pub use error::{Error, Result};
pub use mission::{load_mission, MissionConfig};
pub use problem::{Problem, SolverOptions};
pub use eo::EoSolution;
pub use fo::{ContinuationSchedule, ContinuationStep, FoSolution};
pub use runner::{Command, RunArtifacts, RunSettings, Summary, SweepParam, SweepRow};
pub use to::{ToSolution, TofGuess};
