//! Object-centric visual prediction and planning in billiards worlds.
//!
//! The crate is organised bottom-up:
//!
//! * [`physics`] – exact event-driven simulator, the ground truth and the oracle.
//! * [`worldgen`] – seeded sampling of tables, balls and first-frame forces.
//! * [`render`] – rasterised frames and object-centred glimpses.
//! * [`autodiff`] – small reverse-mode tensor engine.
//! * [`predictors`] – constant-velocity, object-centric, frame-centric and oracle predictors.
//! * [`training`] – minibatches, SGD training and the ball-count curriculum.
//! * [`imagination`] – closed-loop rollouts that feed rendered predictions back in.
//! * [`planner`] – CMA-ES search for forces over imagined futures.
//! * [`metrics`] – angular / magnitude error tables, overall and near collisions.

pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod imagination;
pub mod metrics;
pub mod physics;
pub mod planner;
pub mod predictors;
pub mod render;
pub mod seed;
pub mod training;
pub mod worldgen;

pub use error::{Error, Result};
pub use geometry::Vec2;
pub use physics::{Ball, CollisionEvent, EventKind, ForceMap, PhysicsParams, Table, Trajectory, WorldState};
