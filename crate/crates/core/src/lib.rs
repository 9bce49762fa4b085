//! Jamming-aided dual-UAV secure communication planner.
//!
//! One transmitter UAV serves `K` ground users while a cooperative jammer UAV
//! degrades a ground eavesdropper. Trajectories follow the collaborative
//! successive hover-and-fly (co-SHF) structure: both UAVs hover at `K`
//! synchronized point pairs, and on every flight segment the UAV with the
//! longer chord flies at maximum speed. The minimum per-user secrecy
//! throughput is maximized by successive convex approximation.
//!
//! Module map:
//!
//! * [`scenario`]: mission parameters, config loading, random generation.
//! * [`channel`]: free-space gains, rates, secrecy rate.
//! * [`trajectory`]: the co-SHF decision object and its exact evaluation.
//! * [`convexify`]: concave lower bounds and affine restrictions around a
//!   reference point, assembled into one convex subproblem.
//! * [`subsolver`]: primal-dual interior-point solver for the subproblem.
//! * [`sca`]: initialization and the outer successive approximation loop.
//! * [`bench_td`]: time-slotted benchmark.
//! * [`validate`] / [`report`]: dense-time auditor and file export.

pub mod bench_td;
pub mod channel;
pub mod cli;
pub mod convexify;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod report;
pub mod sca;
pub mod scenario;
pub mod subsolver;
pub mod trajectory;
pub mod tsp;
pub mod validate;

pub use error::{Error, Result};
pub use scenario::Scenario;
pub use trajectory::{CoShfTrajectory, DiscretePath};
