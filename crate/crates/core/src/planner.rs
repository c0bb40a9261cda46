//! Force planning. CMA-ES searches the first-frame force on the cue ball,
//! scoring each candidate by rolling a predictor forward in imagination; the
//! chosen force is then executed in the simulator.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::imagination::{imagine, ImaginedTrajectory};
use crate::physics::{simulate, CollisionEvent, EventKind, ForceMap, PhysicsParams, Trajectory, WorldState};
use crate::predictors::Predictor;
use crate::seed::{child_seed, rng, Rng};
use crate::worldgen::{sample_world, WorldSpec, MAX_PLACEMENT_REJECTIONS};

pub const HIT_THRESHOLDS: [f64; 3] = [10.0, 25.0, 50.0];
pub const DEFAULT_ROLLOUT: usize = 100;
/// Targets are drawn at least this far from the cue ball.
pub const MIN_TARGET_DISTANCE: f64 = 50.0;

const DOMAIN_TARGET: u64 = 20;
const DOMAIN_CMA: u64 = 21;
const DOMAIN_RANDOM: u64 = 22;
const DOMAIN_TRIAL: u64 = 23;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Goal {
    PushToLocation { cue_id: usize, target: Vec2 },
    HitBall { cue_id: usize, target_ball_id: usize },
}

impl Goal {
    pub fn cue_id(&self) -> usize {
        match *self {
            Goal::PushToLocation { cue_id, .. } | Goal::HitBall { cue_id, .. } => cue_id,
        }
    }

    pub fn validate(&self, state: &WorldState) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidGoal(m));
        if state.ball(self.cue_id()).is_err() {
            return invalid(format!("cue ball {} does not exist", self.cue_id()));
        }
        match *self {
            Goal::PushToLocation { target, .. } => {
                if !target.is_finite() || !state.table.contains(target) {
                    return invalid(format!("target ({}, {}) is outside the table", target.x, target.y));
                }
            }
            Goal::HitBall { cue_id, target_ball_id } => {
                if target_ball_id == cue_id {
                    return invalid("cue and target ball are the same".into());
                }
                if state.ball(target_ball_id).is_err() {
                    return invalid(format!("target ball {target_ball_id} does not exist"));
                }
            }
        }
        Ok(())
    }

    fn label(&self) -> String {
        match *self {
            Goal::PushToLocation { cue_id, target } => format!("push:{cue_id}:{}:{}", target.x, target.y),
            Goal::HitBall { cue_id, target_ball_id } => format!("hit:{cue_id}:{target_ball_id}"),
        }
    }
}

/// Anything with a frame sequence that a goal can be scored on.
pub trait Rollout {
    fn frames(&self) -> &[WorldState];
    fn events(&self) -> &[CollisionEvent];
}

impl Rollout for Trajectory {
    fn frames(&self) -> &[WorldState] {
        &self.states
    }
    fn events(&self) -> &[CollisionEvent] {
        &self.events
    }
}

impl Rollout for ImaginedTrajectory {
    fn frames(&self) -> &[WorldState] {
        &self.states
    }
    fn events(&self) -> &[CollisionEvent] {
        &[]
    }
}

/// Closest approach in px: cue centre to target, or the gap between cue and
/// target ball surfaces (0 once they touch).
pub fn goal_cost(rollout: &(impl Rollout + ?Sized), goal: &Goal) -> Result<f64> {
    let frames = rollout.frames();
    let first = frames.first().ok_or_else(|| Error::InvalidGoal("empty rollout".into()))?;
    goal.validate(first)?;
    let cue = first.ball_index(goal.cue_id())?;
    match *goal {
        Goal::PushToLocation { target, .. } => {
            Ok(frames.iter().map(|s| s.balls[cue].center.distance(target)).fold(f64::INFINITY, f64::min))
        }
        Goal::HitBall { target_ball_id, .. } => {
            let other = first.ball_index(target_ball_id)?;
            let touched = rollout.events().iter().any(|e| match e.kind {
                EventKind::BallBall(i, j) => (i == cue && j == other) || (i == other && j == cue),
                EventKind::BallWall(..) => false,
            });
            if touched {
                return Ok(0.0);
            }
            Ok(frames
                .iter()
                .map(|s| {
                    let (a, b) = (&s.balls[cue], &s.balls[other]);
                    (a.center.distance(b.center) - a.radius - b.radius).max(0.0)
                })
                .fold(f64::INFINITY, f64::min))
        }
    }
}

/// How a point of the normalised search space maps to a force.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// `x0` is the angle in turns, wrapped; `x1` spans the magnitude range, clamped.
    Polar,
    /// Components in `[0, 1]` span `[-max, max]` N; the magnitude is then clamped.
    Cartesian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaConfig {
    pub population: usize,
    pub sigma0: f64,
    pub max_evals: usize,
    pub seed: u64,
    pub parameterization: Parameterization,
    /// Newtons.
    pub force_range: (f64, f64),
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig {
            population: 6,
            sigma0: 0.3,
            max_evals: 180,
            seed: 0,
            parameterization: Parameterization::Polar,
            force_range: (30_000.0, 80_000.0),
        }
    }
}

impl CmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::InvalidConfig(format!("CMA-ES population {} below 4", self.population)));
        }
        if self.max_evals < self.population {
            return Err(Error::InvalidConfig(format!("max_evals {} below population {}", self.max_evals, self.population)));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::InvalidConfig("sigma0 must be positive".into()));
        }
        let (lo, hi) = self.force_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi && hi > 0.0) {
            return Err(Error::InvalidConfig(format!("force range [{lo}, {hi}] invalid")));
        }
        Ok(())
    }

    /// Force for a point of the search space, with the bounds applied.
    pub fn decode(&self, x: &[f64]) -> Vec2 {
        let (lo, hi) = self.force_range;
        match self.parameterization {
            Parameterization::Polar => {
                let angle = x[0].rem_euclid(1.0) * TAU;
                Vec2::from_angle(angle) * (lo + (hi - lo) * x[1].clamp(0.0, 1.0))
            }
            Parameterization::Cartesian => {
                let f = Vec2::new(hi * (2.0 * x[0] - 1.0), hi * (2.0 * x[1] - 1.0));
                let m = f.norm();
                if m == 0.0 {
                    Vec2::new(lo, 0.0)
                } else {
                    f * (m.clamp(lo, hi) / m)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Not an error: the best point so far is still returned.
    BudgetExhausted,
    /// The step size or covariance collapsed numerically.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaOutcome {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evals: usize,
    /// Best value seen after each evaluation.
    pub best_history: Vec<f64>,
    /// Every sampled point, in evaluation order.
    pub samples: Vec<Vec<f64>>,
    pub termination: Termination,
}

/// (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
/// rank-one plus rank-mu covariance updates. Candidates of one generation are
/// evaluated in parallel and reduced in sample order.
pub fn cma_es<F>(objective: F, x0: &[f64], cfg: &CmaConfig) -> Result<CmaOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let n = x0.len();
    if n == 0 || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("CMA-ES needs a finite, non-empty start point".into()));
    }
    let nf = n as f64;
    let lambda = cfg.population;
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();

    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let ds = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut r = rng(cfg.seed);
    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = cfg.sigma0;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let mut best_x = x0.to_vec();
    let mut best_value = f64::INFINITY;
    let mut best_history = Vec::with_capacity(cfg.max_evals);
    let mut samples = Vec::with_capacity(cfg.max_evals);
    let mut generation = 0usize;
    let mut termination = Termination::BudgetExhausted;

    while samples.len() + lambda <= cfg.max_evals {
        let eig = SymmetricEigen::new(c.clone());
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0 && v.is_finite())) || !(sigma > 0.0 && sigma.is_finite()) {
            termination = Termination::Degenerate;
            break;
        }
        let b = eig.eigenvectors;
        let d = eig.eigenvalues.map(f64::sqrt);
        let ys: Vec<DVector<f64>> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
                &b * z.component_mul(&d)
            })
            .collect();
        let xs: Vec<Vec<f64>> = ys.iter().map(|y| (&mean + y * sigma).as_slice().to_vec()).collect();
        let values = xs.par_iter().map(|x| objective(x)).collect::<Result<Vec<f64>>>()?;
        for (x, &v) in xs.iter().zip(&values) {
            if v < best_value {
                best_value = v;
                best_x = x.clone();
            }
            best_history.push(best_value);
        }
        samples.extend(xs);

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        let mut yw = DVector::<f64>::zeros(n);
        for (k, &i) in order.iter().take(mu).enumerate() {
            yw += &ys[i] * w[k];
        }
        mean += &yw * sigma;

        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
        ps = &ps * (1.0 - cs) + (&inv_sqrt * &yw) * (cs * (2.0 - cs) * mu_eff).sqrt();
        generation += 1;
        let ps_norm = ps.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &yw * (hs * (cc * (2.0 - cc) * mu_eff).sqrt());
        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (k, &i) in order.iter().take(mu).enumerate() {
            rank_mu += &ys[i] * ys[i].transpose() * w[k];
        }
        let delta = (1.0 - hs) * cc * (2.0 - cc);
        c = &c * (1.0 - c1 - cmu) + (&pc * pc.transpose() + &c * delta) * c1 + rank_mu * cmu;
        c = (&c + c.transpose()) * 0.5;
        sigma *= ((cs / ds) * (ps_norm / chi_n - 1.0)).exp();
    }
    Ok(CmaOutcome { best_x, best_value, evals: samples.len(), best_history, samples, termination })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub cma: CmaConfig,
    /// Imagined steps per candidate; the chosen force is executed for as long.
    pub rollout_steps: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { cma: CmaConfig::default(), rollout_steps: DEFAULT_ROLLOUT }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub force: Vec2,
    /// `None` for plans that did not imagine anything.
    pub imagined_cost: Option<f64>,
    pub executed_min_distance: f64,
    /// Against [`HIT_THRESHOLDS`].
    pub hits: [bool; 3],
    pub evals: usize,
}

fn execute(state: &WorldState, goal: &Goal, force: Vec2, steps: usize, params: &PhysicsParams) -> Result<(f64, [bool; 3])> {
    let forces = ForceMap::from([(goal.cue_id(), force)]);
    let traj = simulate(state, &forces, steps, params)?;
    let d = goal_cost(&traj, goal)?;
    Ok((d, HIT_THRESHOLDS.map(|p| d < p)))
}

/// Searches the cue force that minimises the imagined goal cost, then
/// executes it in the simulator.
pub fn plan(state: &WorldState, goal: &Goal, predictor: &dyn Predictor, cfg: &PlanConfig, params: &PhysicsParams) -> Result<PlanResult> {
    goal.validate(state)?;
    if cfg.rollout_steps == 0 {
        return Err(Error::InvalidConfig("rollout_steps must be at least 1".into()));
    }
    let cue = goal.cue_id();
    let objective = |x: &[f64]| -> Result<f64> {
        let forces = ForceMap::from([(cue, cfg.cma.decode(x))]);
        let mut p = predictor.fresh();
        let im = imagine(state, &forces, p.as_mut(), cfg.rollout_steps, params, None)?;
        goal_cost(&im, goal)
    };
    let out = cma_es(objective, &[0.5, 0.5], &cfg.cma)?;
    let force = cfg.cma.decode(&out.best_x);
    let (d, hits) = execute(state, goal, force, cfg.rollout_steps, params)?;
    Ok(PlanResult { force, imagined_cost: Some(out.best_value), executed_min_distance: d, hits, evals: out.evals })
}

/// One force from the world sampler, executed and scored.
pub fn random_plan(state: &WorldState, goal: &Goal, spec: &WorldSpec, rng: &mut Rng, steps: usize, params: &PhysicsParams) -> Result<PlanResult> {
    goal.validate(state)?;
    let force = spec.sample_force(rng);
    let (d, hits) = execute(state, goal, force, steps, params)?;
    Ok(PlanResult { force, imagined_cost: None, executed_min_distance: d, hits, evals: 0 })
}

/// Fraction of results with executed distance below each threshold.
pub fn hit_accuracy(results: &[PlanResult], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let n = results.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&p| (p, results.iter().filter(|r| r.executed_min_distance < p).count() as f64 / n))
        .collect())
}

/// A push-to-location planning problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub state: WorldState,
    pub goal: Goal,
}

/// Samples `n` worlds from `spec` (ball 0 is the cue, at rest) with a target
/// uniform over the positions the cue centre can reach, at least
/// [`MIN_TARGET_DISTANCE`] from it.
pub fn push_trials(spec: &WorldSpec, n: usize, seed: u64) -> Result<Vec<Trial>> {
    (0..n)
        .map(|index| {
            let s = child_seed(seed, DOMAIN_TRIAL, index as u64);
            let (state, _) = sample_world(spec, s)?;
            let cue = &state.balls[0];
            let mut r = rng(child_seed(s, DOMAIN_TARGET, 0));
            let (min, max) = state.table.bounding_box();
            for _ in 0..MAX_PLACEMENT_REJECTIONS {
                let p = Vec2::new(
                    rand::Rng::random_range(&mut r, min.x..=max.x),
                    rand::Rng::random_range(&mut r, min.y..=max.y),
                );
                if state.table.clearance(p) >= cue.radius && p.distance(cue.center) >= MIN_TARGET_DISTANCE {
                    let goal = Goal::PushToLocation { cue_id: cue.id, target: p };
                    return Ok(Trial { index, seed: s, state, goal });
                }
            }
            Err(Error::PlacementFailure { attempts: MAX_PLACEMENT_REJECTIONS, sequence: Some(index) })
        })
        .collect()
}

/// Who picks the force in [`run_trials`].
#[derive(Clone, Copy)]
pub enum Planner<'a> {
    Model(&'a dyn Predictor),
    Random(&'a WorldSpec),
}

pub fn run_trials(trials: &[Trial], planner: Planner, cfg: &PlanConfig, params: &PhysicsParams) -> Result<Vec<PlanResult>> {
    trials
        .par_iter()
        .map(|t| match planner {
            Planner::Model(p) => {
                let cma = CmaConfig { seed: child_seed(t.seed, DOMAIN_CMA, cfg.cma.seed), ..cfg.cma.clone() };
                plan(&t.state, &t.goal, p, &PlanConfig { cma, ..cfg.clone() }, params)
            }
            Planner::Random(spec) => {
                let mut r = rng(child_seed(t.seed, DOMAIN_RANDOM, cfg.cma.seed));
                random_plan(&t.state, &t.goal, spec, &mut r, cfg.rollout_steps, params)
            }
        })
        .collect()
}

/// One row per trial: `seed,goal,fx,fy,imagined_cost,executed_min_distance,hit@10,hit@25,hit@50`.
pub fn plan_csv(trials: &[Trial], results: &[PlanResult]) -> String {
    let mut s = String::from("seed,goal,fx,fy,imagined_cost,executed_min_distance,hit@10,hit@25,hit@50\n");
    for (t, r) in trials.iter().zip(results) {
        let cost = r.imagined_cost.map(|c| c.to_string()).unwrap_or_default();
        let _ = write!(s, "{},{},{},{},{},{}", t.seed, t.goal.label(), r.force.x, r.force.y, cost, r.executed_min_distance);
        for h in r.hits {
            let _ = write!(s, ",{}", u8::from(h));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests;
