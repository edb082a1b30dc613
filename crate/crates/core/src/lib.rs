//! Event-driven simulation and analysis of planar no-slip billiards under a
//! constant external force.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: real roots of the quadratic and quartic event polynomials.
//! - [`geometry`]: tables built from oriented boundary components and lattices.
//! - [`dynamics`]: the no-slip collision map, ballistic flight and the event loop.
//! - [`orbits`]: periodic-orbit constructors, linear-stability thresholds and
//!   survival-count stability grids.
//! - [`experiments`]: Galton board statistics, velocity phase portraits and
//!   channel boundedness probes.
//! - [`output`]: SVG rendering plus CSV/NDJSON writers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod experiments;
pub mod geometry;
pub mod numerics;
pub mod orbits;
pub mod output;
pub mod rng;

pub use dynamics::{
    CollisionEvent, CollisionRule, Dynamics, Event, ForceField, MassDistribution, Orbit,
    OrbitStatus, ParticleState, StopCondition,
};
pub use geometry::{BoundaryComponent, Table, TableSpec};
