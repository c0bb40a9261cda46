use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

use super::collide::{corner_contact, face_contact, resolve_ball_ball, resolve_ball_wall, toi_circle_circle};
use super::world::{ForceMap, PhysicsParams, WorldState};

/// Events closer together than this (in step fractions) are simultaneous.
pub const SIMULTANEITY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    BallBall(usize, usize),
    /// Ball index and edge index. Corner contacts report the edge starting at the corner.
    BallWall(usize, usize),
}

impl EventKind {
    pub fn involves(&self, ball: usize) -> bool {
        match *self {
            EventKind::BallBall(i, j) => i == ball || j == ball,
            EventKind::BallWall(i, _) => i == ball,
        }
    }

    fn order_key(&self) -> (u8, usize, usize) {
        match *self {
            EventKind::BallWall(i, e) => (0, i, e),
            EventKind::BallBall(i, j) => (1, i, j),
        }
    }
}

/// A collision resolved during step `step` (the step that moves frame
/// `step` to frame `step + 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub step: usize,
    pub toi_fraction: f64,
    pub kind: EventKind,
}

/// Adds the impulse of `force` to one ball's velocity.
pub fn apply_force(state: &WorldState, ball_id: usize, force: Vec2, params: &PhysicsParams) -> Result<WorldState> {
    if !force.is_finite() {
        return Err(Error::NonFiniteInput("force"));
    }
    let idx = state.ball_index(ball_id)?;
    let mut out = state.clone();
    out.balls[idx].velocity += force * params.impulse_scale;
    Ok(out)
}

pub fn apply_forces(state: &WorldState, forces: &ForceMap, params: &PhysicsParams) -> Result<WorldState> {
    let mut out = state.clone();
    for (&id, &f) in forces {
        out = apply_force(&out, id, f, params)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    toi: f64,
    kind: EventKind,
    normal: Vec2,
}

fn earliest_event(state: &WorldState, remaining: f64) -> Option<Candidate> {
    let table = &state.table;
    let mut found: Vec<Candidate> = Vec::new();
    for (i, ball) in state.balls.iter().enumerate() {
        for e in 0..table.num_edges() {
            let (a, b) = table.edge(e);
            if let Some(c) = face_contact(ball, a, b, table.inward_normal(e), remaining) {
                found.push(Candidate { toi: c.toi, kind: EventKind::BallWall(i, e), normal: c.normal });
            }
            // Only reflex corners can be reached before an adjacent face.
            if table.is_reflex(e) {
                if let Some(c) = corner_contact(ball, a, remaining) {
                    found.push(Candidate { toi: c.toi, kind: EventKind::BallWall(i, e), normal: c.normal });
                }
            }
        }
        for (j, other) in state.balls.iter().enumerate().skip(i + 1) {
            if let Some(toi) = toi_circle_circle(ball, other, remaining) {
                found.push(Candidate { toi, kind: EventKind::BallBall(i, j), normal: Vec2::ZERO });
            }
        }
    }
    let first = found.iter().map(|c| c.toi).fold(f64::INFINITY, f64::min);
    found
        .into_iter()
        .filter(|c| c.toi <= first + SIMULTANEITY_EPS)
        .min_by(|a, b| a.kind.order_key().cmp(&b.kind.order_key()).then(a.toi.total_cmp(&b.toi)))
}

fn advance(state: &mut WorldState, dt: f64) {
    for b in &mut state.balls {
        b.center += b.velocity * dt;
    }
}

/// Advances the world by one unit step, resolving every contact at its exact
/// time of impact in chronological order.
pub fn step(state: &WorldState, params: &PhysicsParams) -> Result<(WorldState, Vec<CollisionEvent>)> {
    let mut next = state.clone();
    let mut events = Vec::new();
    let mut now = 0.0f64;
    while let Some(c) = earliest_event(&next, 1.0 - now) {
        if events.len() == params.max_events_per_step {
            return Err(Error::EventOverflow { step: state.t, limit: params.max_events_per_step });
        }
        if c.toi > 0.0 {
            advance(&mut next, c.toi);
            now += c.toi;
        }
        match c.kind {
            EventKind::BallWall(i, _) => {
                next.balls[i] = resolve_ball_wall(&next.balls[i], c.normal, params.restitution)?;
            }
            EventKind::BallBall(i, j) => {
                let (a, b) = resolve_ball_ball(&next.balls[i], &next.balls[j], params.restitution)?;
                next.balls[i] = a;
                next.balls[j] = b;
            }
        }
        events.push(CollisionEvent { step: state.t, toi_fraction: now, kind: c.kind });
    }
    advance(&mut next, 1.0 - now);
    if params.damping > 0.0 {
        let keep = 1.0 - params.damping;
        for b in &mut next.balls {
            b.velocity = b.velocity * keep;
        }
    }
    next.t = state.t + 1;
    Ok((next, events))
}

/// Ground-truth (or imagined) sequence of world states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `states[t]` is frame `t`; `states[0]` already includes the t = 0 forces.
    pub states: Vec<WorldState>,
    pub events: Vec<CollisionEvent>,
}

impl Trajectory {
    /// Number of steps (one less than the number of frames).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn num_frames(&self) -> usize {
        self.states.len()
    }

    pub fn num_balls(&self) -> usize {
        self.states.first().map_or(0, |s| s.balls.len())
    }

    pub fn center(&self, t: usize, ball: usize) -> Vec2 {
        self.states[t].balls[ball].center
    }

    /// Per-step velocity `u_t = c_t - c_{t-1}` of ball index `ball`, for `t >= 1`.
    pub fn displacement(&self, t: usize, ball: usize) -> Vec2 {
        self.center(t, ball) - self.center(t - 1, ball)
    }

    pub fn events_for(&self, ball: usize) -> impl Iterator<Item = &CollisionEvent> + '_ {
        self.events.iter().filter(move |e| e.kind.involves(ball))
    }
}

/// Applies `forces` once, then steps `steps` times.
pub fn simulate(state: &WorldState, forces: &ForceMap, steps: usize, params: &PhysicsParams) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig("simulate needs at least one step".into()));
    }
    let mut current = apply_forces(state, forces, params)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut events = Vec::new();
    states.push(current.clone());
    for _ in 0..steps {
        let (next, ev) = step(&current, params)?;
        events.extend(ev);
        states.push(next.clone());
        current = next;
    }
    Ok(Trajectory { states, events })
}
