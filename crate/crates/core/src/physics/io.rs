//! `BLRD1` little-endian trajectory files.
//!
//! Layout: magic `BLRD1`, `n_balls: u32`, `steps: u32`, `radius: f64`, then
//! `(steps + 1) * n_balls` records of `(cx, cy, vx, vy): f64`, then
//! `n_events: u32` followed by `(step: u32, kind: u8, a: u32, b: u32, toi: f64)`.
//! The table geometry is not part of the file; readers supply it.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

use super::step::{CollisionEvent, EventKind, Trajectory};
use super::world::{mass_for_radius, Ball, Table, WorldState};

pub const TRAJECTORY_MAGIC: &[u8; 5] = b"BLRD1";

const KIND_BALL_BALL: u8 = 0;
const KIND_BALL_WALL: u8 = 1;

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let n_balls = traj.num_balls();
    let radius = traj.states.first().and_then(|s| s.balls.first()).map_or(0.0, |b| b.radius);
    if traj.states.iter().flat_map(|s| &s.balls).any(|b| b.radius != radius) {
        return Err(Error::Format("BLRD1 stores a single ball radius".into()));
    }
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&u32_of(n_balls)?.to_le_bytes())?;
    w.write_all(&u32_of(traj.steps())?.to_le_bytes())?;
    w.write_all(&radius.to_le_bytes())?;
    let mut buf = Vec::with_capacity(traj.num_frames() * n_balls * 32);
    for s in &traj.states {
        for b in &s.balls {
            for v in [b.center.x, b.center.y, b.velocity.x, b.velocity.y] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    w.write_all(&u32_of(traj.events.len())?.to_le_bytes())?;
    for e in &traj.events {
        let (kind, a, b) = match e.kind {
            EventKind::BallBall(a, b) => (KIND_BALL_BALL, a, b),
            EventKind::BallWall(a, b) => (KIND_BALL_WALL, a, b),
        };
        w.write_all(&u32_of(e.step)?.to_le_bytes())?;
        w.write_all(&[kind])?;
        w.write_all(&u32_of(a)?.to_le_bytes())?;
        w.write_all(&u32_of(b)?.to_le_bytes())?;
        w.write_all(&e.toi_fraction.to_le_bytes())?;
    }
    Ok(())
}

pub fn trajectory_bytes(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_trajectory(&mut out, traj)?;
    Ok(out)
}

pub fn read_trajectory<R: Read>(mut r: R, table: &Table) -> Result<Trajectory> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Format("missing BLRD1 magic".into()));
    }
    let n_balls = read_u32(&mut r)? as usize;
    let steps = read_u32(&mut r)? as usize;
    let radius = read_f64(&mut r)?;
    let mass = mass_for_radius(radius);
    let mut states = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let mut balls = Vec::with_capacity(n_balls);
        for id in 0..n_balls {
            let cx = read_f64(&mut r)?;
            let cy = read_f64(&mut r)?;
            let vx = read_f64(&mut r)?;
            let vy = read_f64(&mut r)?;
            balls.push(Ball { id, center: Vec2::new(cx, cy), velocity: Vec2::new(vx, vy), radius, mass });
        }
        states.push(WorldState { balls, table: table.clone(), t });
    }
    let n_events = read_u32(&mut r)? as usize;
    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let step = read_u32(&mut r)? as usize;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let a = read_u32(&mut r)? as usize;
        let b = read_u32(&mut r)? as usize;
        let toi_fraction = read_f64(&mut r)?;
        let kind = match kind[0] {
            KIND_BALL_BALL if a < n_balls && b < n_balls => EventKind::BallBall(a, b),
            KIND_BALL_WALL if a < n_balls && b < table.num_edges() => EventKind::BallWall(a, b),
            k => return Err(Error::Format(format!("bad event record (kind {k}, a {a}, b {b})"))),
        };
        if step >= steps.max(1) || !(0.0..1.0).contains(&toi_fraction) {
            return Err(Error::Format(format!("event step {step} / toi {toi_fraction} out of range")));
        }
        events.push(CollisionEvent { step, toi_fraction, kind });
    }
    Ok(Trajectory { states, events })
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{n} does not fit in u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
