//! Simulation laboratory for heavy-tailed learning dynamics.
//!
//! The crate integrates coupled empirical/population gradient flows driven
//! by shared alpha-stable noise, estimates the fractal dimension of the
//! resulting trajectories, and evaluates every term of a family of
//! trajectory-wise generalization bounds so their validity and rates can
//! be checked empirically at desk scale.

pub mod bounds;
pub mod dynamics;
pub mod harness;
pub mod fractal;
pub mod pacbayes;
pub mod problems;
pub mod rng;
pub mod stable;
pub mod stats;
