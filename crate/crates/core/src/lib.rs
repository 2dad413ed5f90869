//! Hierarchical solver for Bubble-Ball-style 2D physics puzzles.
//!
//! The crate bundles a deterministic rigid-body simulator (the ground truth
//! every trial runs against) with a three-layer solver:
//!
//! 1. [`guide`]: a geometry-only guide path and the local region where the
//!    recorded ball trajectory departs from it,
//! 2. [`kinematics`] + [`optimizer`]: event-based kinematic surrogates and a
//!    coarse-to-fine search over a single main block (plus supports),
//! 3. [`learner`]: least-squares refits of the surrogate parameters from
//!    failed trials.
//!
//! [`solver`] ties these together into the outer trial loop.

pub mod cli;
pub mod export;
pub mod geometry;
pub mod guide;
pub mod kinematics;
pub mod learner;
pub mod level;
pub mod optimizer;
pub mod physics;
pub mod solver;

pub use geometry::Vec2;
pub use level::{BallState, BlockState, Level, Placement};
