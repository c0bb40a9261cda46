//! Deterministic billiards physics.
//!
//! Balls are frictionless, spinless discs on a polygonal table. A step of
//! unit length is integrated piecewise: the earliest contact is found by an
//! exact time-of-impact query, every ball is advanced to that instant, the
//! contact is resolved with an impulse and the search repeats for the rest
//! of the step. Simultaneous contacts (within [`SIMULTANEITY_EPS`]) are
//! resolved walls first, then by lowest index, so results are reproducible
//! bit for bit.
//!
//! Forces are instantaneous impulses: a force `F` in Newtons changes the
//! velocity by `impulse_scale * F` px/step.

mod collide;
pub mod io;
mod step;
mod world;

pub use collide::{
    corner_contact, face_contact, resolve_ball_ball, resolve_ball_wall, segment_contact, toi_circle_circle,
    toi_circle_segment, WallContact, CONTACT_TOL,
};
pub use step::{apply_force, apply_forces, simulate, step, CollisionEvent, EventKind, Trajectory, SIMULTANEITY_EPS};
pub use world::{
    mass_for_radius, Ball, ForceMap, PhysicsParams, Table, WorldState, DEFAULT_RADIUS, PENETRATION_EPS,
};
