//! Closed-loop rollouts: predict one step, move every ball by its predicted
//! velocity, re-render and feed the result back to the predictor.
//!
//! No physics is applied to imagined states, so a poor predictor can push
//! balls through each other or out of the table.

use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::{apply_forces, ForceMap, PhysicsParams, Trajectory, WorldState};
use crate::predictors::{Observation, Predictor};
use crate::render::{render_frame, table_viewport, Image, Viewport};

/// Optional rendering of imagined frames, for inspection only. Predictors
/// render their own inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameConfig {
    pub resolution: usize,
    /// Whole table when `None`.
    pub viewport: Option<Viewport>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig { resolution: 128, viewport: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImaginedTrajectory {
    /// `states[0]` is the initial state with forces applied; later velocities
    /// are the k = 1 predictions that moved each ball into that frame.
    pub states: Vec<WorldState>,
    pub frames: Vec<Image>,
}

impl ImaginedTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn center(&self, t: usize, ball: usize) -> crate::geometry::Vec2 {
        self.states[t].balls[ball].center
    }

    /// As a trajectory with no collision events.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory { states: self.states.clone(), events: Vec::new() }
    }

    /// `BLRD1` bytes; the event list is empty.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        crate::physics::io::trajectory_bytes(&self.to_trajectory())
    }
}

fn render(state: &WorldState, cfg: &FrameConfig) -> Result<Image> {
    let vp = cfg.viewport.unwrap_or_else(|| table_viewport(&state.table));
    render_frame(state, vp, cfg.resolution)
}

/// Rolls `predictor` forward `steps` times from `initial`. Forces act at frame 0 only.
pub fn imagine(
    initial: &WorldState,
    forces: &ForceMap,
    predictor: &mut dyn Predictor,
    steps: usize,
    params: &PhysicsParams,
    frames: Option<&FrameConfig>,
) -> Result<ImaginedTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig("imagination needs at least one step".into()));
    }
    let mut current = apply_forces(initial, forces, params)?;
    predictor.begin(&current)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut images = Vec::new();
    let none = ForceMap::new();
    for t in 0..steps {
        if let Some(cfg) = frames {
            images.push(render(&current, cfg)?);
        }
        let f = if t == 0 { forces } else { &none };
        let preds = predictor.predict(&Observation { t, state: &current, forces: f })?;
        if preds.len() != current.balls.len() {
            return Err(Error::InvalidState(format!("{} predictions for {} balls", preds.len(), current.balls.len())));
        }
        let mut next = current.clone();
        next.t = t + 1;
        for (ball, p) in next.balls.iter_mut().zip(&preds) {
            let v = p.velocities.first().copied().ok_or_else(|| Error::InvalidState("empty prediction".into()))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteInput("predicted velocity"));
            }
            ball.velocity = v;
            ball.center += v;
        }
        states.push(std::mem::replace(&mut current, next));
    }
    if let Some(cfg) = frames {
        images.push(render(&current, cfg)?);
    }
    states.push(current);
    Ok(ImaginedTrajectory { states, frames: images })
}

/// Result of [`dump_frames`].
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDump {
    pub count: usize,
    pub warning: Option<String>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.ppm")
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, ... into `dir`.
pub fn dump_frames(imagined: &ImaginedTrajectory, dir: &Path) -> Result<FrameDump> {
    if imagined.frames.is_empty() {
        return Ok(FrameDump { count: 0, warning: Some("imagined trajectory has no rendered frames".into()) });
    }
    std::fs::create_dir_all(dir)?;
    for (i, img) in imagined.frames.iter().enumerate() {
        img.save_ppm(&dir.join(frame_file_name(i)))?;
    }
    Ok(FrameDump { count: imagined.frames.len(), warning: None })
}
