//! Distributed Nash equilibrium seeking for networked games in which players
//! exchange action estimates only during intermittent communication windows.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: directed communication graphs, Laplacian and estimation
//!   coupling matrices, Lyapunov certificates for the coupling matrix.
//! - [`game`]: payoff-gradient models, Nash equilibrium solving and the
//!   regularity constants of the pseudo-gradient.
//! - [`schedule`]: periodic and aperiodic communication schedules and their
//!   verification (communication measure, average communication ratio).
//! - [`dynamics`]: the coupled action/estimate system and a boundary-aligned
//!   fixed-step RK4 integrator.
//! - [`analysis`]: convergence-condition arithmetic, Lyapunov traces and
//!   exponential-rate fits.
//! - [`experiment`]: declarative experiment configs and the pipelines behind
//!   the `inash` command line tool.

pub mod analysis;
pub mod dynamics;
pub mod experiment;
pub mod fixtures;
pub mod game;
pub mod graph;
pub mod linalg;
pub mod schedule;

pub use analysis::{ConditionReport, Regime, TheoremConstants};
pub use dynamics::{SimConfig, Trajectory};
pub use game::{GameModel, NashSolution, RegularityConstants, SeekSign};
pub use graph::{CouplingMatrices, DirectedGraph, Edge, LyapunovCertificate};
pub use schedule::{AcrMode, AcrReport, Schedule, Window};
