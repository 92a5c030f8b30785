//! Simulation and numerical verification for synchronously coupled reflected
//! Brownian motions in a flat 3-torus with a unit-ball obstacle.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Simulation entry points take geometry, config and noise explicitly.
#![allow(clippy::too_many_arguments)]

pub mod cli;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod noise;
pub mod excursion;
pub mod flow;
pub mod exponent;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{DomainGeometry, TorusPoint, TorusVector, Vec3};
pub use noise::NoiseStream;
