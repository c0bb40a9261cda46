//! Velocity predictors: constant velocity, the ground-truth oracle and the
//! object-centric / frame-centric networks.
//!
//! A predictor is driven frame by frame. [`Predictor::begin`] resets it at the
//! start of a sequence and each [`Predictor::predict`] call sees the current
//! frame only; anything a predictor needs from the past it keeps itself.

mod net;

use std::collections::VecDeque;
use std::sync::Arc;

pub use net::{stack_tensor, LstmState, Model, ModelConfig, ModelKind, StateVars, FORCE_SCALE};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::physics::{simulate, ForceMap, PhysicsParams, WorldState};
use crate::render::{Image, STACK_DEPTH};

pub const DEFAULT_HORIZON: usize = 20;

/// Predicted per-step velocities `u_{t+1} .. u_{t+h}` in px/step.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub velocities: Vec<Vec2>,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.velocities.len()
    }

    pub fn first(&self) -> Vec2 {
        self.velocities[0]
    }

    fn from_flat(v: &[f64]) -> Self {
        Prediction { velocities: v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect() }
    }
}

/// What a predictor sees at frame `t`.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub t: usize,
    /// Ball positions at `t`. Velocities are the last known per-step velocity:
    /// ground truth during evaluation, the previous prediction during imagination.
    pub state: &'a WorldState,
    /// Forces applied at this frame; empty for `t > 0`.
    pub forces: &'a ForceMap,
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> String;

    fn horizon(&self) -> usize;

    /// Resets all per-sequence memory. `state0` is frame 0 with forces applied.
    fn begin(&mut self, state0: &WorldState) -> Result<()>;

    /// One prediction per ball, in the state's ball order.
    fn predict(&mut self, obs: &Observation) -> Result<Vec<Prediction>>;

    /// Same predictor with empty memory.
    fn fresh(&self) -> Box<dyn Predictor>;
}

/// `h` copies of the last velocity.
pub fn cv_predict(prev_velocity: Vec2, h: usize) -> Prediction {
    Prediction { velocities: vec![prev_velocity; h] }
}

/// Future velocities of one ball from the simulator, with no force applied.
pub fn oracle_predict(state: &WorldState, ball_id: usize, h: usize, params: &PhysicsParams) -> Result<Prediction> {
    let idx = state.ball_index(ball_id)?;
    let traj = simulate(state, &ForceMap::new(), h, params)?;
    Ok(Prediction { velocities: (1..=h).map(|k| traj.displacement(k, idx)).collect() })
}

/// Repeats each ball's velocity over the previous step, `c_t - c_{t-1}`.
/// At frame 0 there is no previous step and the state velocity is used.
#[derive(Clone, Debug)]
pub struct ConstantVelocity {
    pub horizon: usize,
    prev: Option<(usize, Vec<Vec2>)>,
}

impl ConstantVelocity {
    pub fn new(horizon: usize) -> Self {
        ConstantVelocity { horizon, prev: None }
    }
}

impl Default for ConstantVelocity {
    fn default() -> Self {
        Self::new(DEFAULT_HORIZON)
    }
}

impl Predictor for ConstantVelocity {
    fn name(&self) -> String {
        "cv".into()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn begin(&mut self, _state0: &WorldState) -> Result<()> {
        self.prev = None;
        Ok(())
    }

    fn predict(&mut self, obs: &Observation) -> Result<Vec<Prediction>> {
        let centers = obs.state.centers();
        let out = match &self.prev {
            Some((t, prev)) if *t + 1 == obs.t && prev.len() == centers.len() => {
                centers.iter().zip(prev).map(|(c, p)| cv_predict(*c - *p, self.horizon)).collect()
            }
            _ => obs.state.balls.iter().map(|b| cv_predict(b.velocity, self.horizon)).collect(),
        };
        self.prev = Some((obs.t, centers));
        Ok(out)
    }

    fn fresh(&self) -> Box<dyn Predictor> {
        Box::new(Self::new(self.horizon))
    }
}

/// Predicts zero motion for every ball.
#[derive(Clone, Debug)]
pub struct ZeroPredictor {
    pub horizon: usize,
}

impl Default for ZeroPredictor {
    fn default() -> Self {
        ZeroPredictor { horizon: DEFAULT_HORIZON }
    }
}

impl Predictor for ZeroPredictor {
    fn name(&self) -> String {
        "zero".into()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn begin(&mut self, _state0: &WorldState) -> Result<()> {
        Ok(())
    }

    fn predict(&mut self, obs: &Observation) -> Result<Vec<Prediction>> {
        Ok(vec![cv_predict(Vec2::ZERO, self.horizon); obs.state.balls.len()])
    }

    fn fresh(&self) -> Box<dyn Predictor> {
        Box::new(self.clone())
    }
}

/// The simulator itself. It tracks its own exact physical state from frame 0,
/// so observations only drive the clock.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub horizon: usize,
    pub params: PhysicsParams,
    state: Option<WorldState>,
}

impl Oracle {
    pub fn new(horizon: usize, params: PhysicsParams) -> Self {
        Oracle { horizon, params, state: None }
    }
}

impl Predictor for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn begin(&mut self, state0: &WorldState) -> Result<()> {
        self.state = Some(state0.clone());
        Ok(())
    }

    fn predict(&mut self, obs: &Observation) -> Result<Vec<Prediction>> {
        let state = self.state.as_ref().ok_or_else(|| Error::InvalidState("oracle used before begin".into()))?;
        if state.t != obs.t {
            return Err(Error::InvalidState(format!("oracle at frame {} observed frame {}", state.t, obs.t)));
        }
        let traj = simulate(state, &ForceMap::new(), self.horizon, &self.params)?;
        let preds = (0..state.balls.len())
            .map(|b| Prediction { velocities: (1..=self.horizon).map(|k| traj.displacement(k, b)).collect() })
            .collect();
        self.state = Some(traj.states[1].clone());
        Ok(preds)
    }

    fn fresh(&self) -> Box<dyn Predictor> {
        Box::new(Oracle::new(self.horizon, self.params))
    }
}

#[derive(Clone, Debug)]
struct Stream {
    frames: VecDeque<Image>,
    state: LstmState,
}

impl Stream {
    fn push(&mut self, img: Image) {
        if self.frames.is_empty() {
            for _ in 1..STACK_DEPTH {
                self.frames.push_back(img.clone());
            }
        } else if self.frames.len() == STACK_DEPTH {
            self.frames.pop_front();
        }
        self.frames.push_back(img);
    }
}

/// A trained network run as a predictor: one recurrent stream per ball for
/// the object-centric model, one for the whole frame for the frame-centric one.
#[derive(Clone, Debug)]
pub struct NetPredictor {
    model: Arc<Model>,
    streams: Vec<Stream>,
}

impl NetPredictor {
    pub fn new(model: Arc<Model>) -> Self {
        NetPredictor { model, streams: Vec::new() }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn run(&mut self, stream: usize, img: Image, force: crate::autodiff::Tensor) -> Result<Vec<f64>> {
        let s = &mut self.streams[stream];
        s.push(img);
        let frames: Vec<&Image> = s.frames.iter().collect();
        let input = stack_tensor(&frames)?;
        let mut g = Graph::new(&self.model.params);
        let x = g.input(input);
        let f = g.input(force);
        let sv = StateVars::input(&mut g, &s.state);
        let (out, next) = self.model.step(&mut g, x, f, sv)?;
        s.state = next.read(&g);
        let out = g.value(out);
        if !out.all_finite() {
            return Err(Error::NonFiniteInput("network output"));
        }
        Ok(out.data().to_vec())
    }
}

impl Predictor for NetPredictor {
    fn name(&self) -> String {
        match self.model.config.kind {
            ModelKind::Oc => "oc".into(),
            ModelKind::Fc => "fc".into(),
        }
    }

    fn horizon(&self) -> usize {
        self.model.config.horizon
    }

    fn begin(&mut self, state0: &WorldState) -> Result<()> {
        let cfg = &self.model.config;
        let n = match cfg.kind {
            ModelKind::Oc => state0.balls.len(),
            ModelKind::Fc => {
                if state0.balls.len() > cfg.max_balls {
                    return Err(Error::TooManyBalls { count: state0.balls.len(), max: cfg.max_balls });
                }
                1
            }
        };
        self.streams = vec![Stream { frames: VecDeque::new(), state: LstmState::zeros(cfg.hidden) }; n];
        Ok(())
    }

    fn predict(&mut self, obs: &Observation) -> Result<Vec<Prediction>> {
        let model = Arc::clone(&self.model);
        let cfg = &model.config;
        let none = ForceMap::new();
        let forces = if obs.t == 0 { obs.forces } else { &none };
        let ids: Vec<usize> = obs.state.balls.iter().map(|b| b.id).collect();
        match cfg.kind {
            ModelKind::Oc => {
                if self.streams.len() != ids.len() {
                    return Err(Error::InvalidState("ball count changed since begin".into()));
                }
                let mut out = Vec::with_capacity(ids.len());
                for (i, &id) in ids.iter().enumerate() {
                    let img = model.render(obs.state, id)?;
                    let flat = self.run(i, img, model.force_input(forces, &[id]))?;
                    out.push(Prediction::from_flat(&flat));
                }
                Ok(out)
            }
            ModelKind::Fc => {
                if ids.len() > cfg.max_balls {
                    return Err(Error::TooManyBalls { count: ids.len(), max: cfg.max_balls });
                }
                if self.streams.len() != 1 {
                    return Err(Error::InvalidState("frame-centric predictor used before begin".into()));
                }
                let img = model.render(obs.state, ids.first().copied().unwrap_or(0))?;
                let flat = self.run(0, img, model.force_input(forces, &ids))?;
                let per = 2 * cfg.horizon;
                Ok((0..ids.len()).map(|s| Prediction::from_flat(&flat[s * per..(s + 1) * per])).collect())
            }
        }
    }

    fn fresh(&self) -> Box<dyn Predictor> {
        Box::new(NetPredictor::new(Arc::clone(&self.model)))
    }
}

#[cfg(test)]
mod tests;
