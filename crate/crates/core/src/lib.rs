//! Simulation laboratory for first-order average consensus with additive
//! communication noise under switching, adversarial and random topologies.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: weighted digraphs, Laplacians, connectivity and the two
//!   canonical graphs used by the adversarial construction.
//! * [`topology`]: joint-connectivity schedules, their verification, and
//!   topology process generators.
//! * [`gain`], [`noise`], [`dynamics`]: the protocol engine, Monte Carlo
//!   estimation of the mean disagreement and an exact second-moment oracle.
//! * [`analysis`]: disagreement, rate fits and numeric checks of the
//!   contraction and product bounds the convergence theory relies on.
//! * [`manet`]: a mobile ad-hoc network application of the protocol.
//!
//! Node indices are 0-based in the API and 1-based in every text format.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod gain;
pub mod graph;
pub mod manet;
pub mod noise;
pub mod rng;
pub mod suites;
pub mod topology;

pub use analysis::{ConsensusStats, RateFit};
pub use dynamics::{McConfig, McSummary, RecordPlan, SimulationTrace};
pub use error::{Error, Result};
pub use gain::GainSchedule;
pub use graph::{UnionGraph, WeightedDigraph};
pub use noise::{NoiseKind, NoiseModel};
pub use rng::StreamSeed;
pub use topology::{ConnectivitySchedule, TopologyProcess};
