//! Minibatches of fixed-length windows, SGD training and the ball-count curriculum.
//!
//! A window is `subseq_len` consecutive frames of one sequence. Each window
//! starts from a zeroed recurrent state; every frame in it contributes the
//! weighted horizon loss of its `h` future velocities, with targets past the
//! end of the sequence masked out.

use std::io::Write;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{horizon_weights, Gradients, Graph, Sgd, Tensor};
use crate::error::{Error, Result};
use crate::physics::{ForceMap, Trajectory};
use crate::predictors::{stack_tensor, LstmState, Model, ModelKind, StateVars};
use crate::render::{stack_indices, Image};
use crate::seed::{child_seed, rng, Rng};
use crate::worldgen::Dataset;

const DOMAIN_BATCH: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub horizon: usize,
    pub batch_sequences: usize,
    pub subseq_len: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Defaults to one pass over the dataset's frames.
    pub batches_per_epoch: Option<usize>,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub curriculum: Vec<StageSpec>,
}

/// One curriculum stage: a dataset name and the epochs spent on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub dataset: String,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            horizon: 20,
            batch_sequences: 50,
            subseq_len: 20,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 30,
            batches_per_epoch: None,
            clip_norm: Some(10.0),
            seed: 0,
            curriculum: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 || self.batch_sequences == 0 || self.subseq_len == 0 {
            return bad("horizon, batch_sequences and subseq_len must be positive");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batches_per_epoch == Some(0) {
            return bad("batches_per_epoch must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn batches_for(&self, dataset: &Dataset) -> usize {
        self.batches_per_epoch.unwrap_or_else(|| {
            let frames: usize = dataset.sequences.iter().map(|s| s.trajectory.steps()).sum();
            frames.div_ceil(self.batch_sequences * self.subseq_len).max(1)
        })
    }
}

/// A window of `len` frames of sequence `sequence`, starting at frame `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub sequence: usize,
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Targets `u_{t+1..t+h}` of ball index `ball` and their validity mask.
pub fn horizon_targets(traj: &Trajectory, ball: usize, t: usize, h: usize) -> (Tensor, Vec<f64>) {
    let last = traj.steps();
    let mut data = vec![0.0; 2 * h];
    let mut mask = vec![0.0; h];
    for k in 1..=h {
        if t + k <= last {
            let u = traj.displacement(t + k, ball);
            data[2 * (k - 1)] = u.x;
            data[2 * (k - 1) + 1] = u.y;
            mask[k - 1] = 1.0;
        }
    }
    (Tensor::new(vec![h, 2], data).expect("2h values"), mask)
}

/// Draws `batch_sequences` uniform (sequence, start) pairs with
/// `start <= steps - subseq_len`.
pub fn make_minibatch(dataset: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<Vec<Window>> {
    check_lengths(dataset, cfg)?;
    Ok((0..cfg.batch_sequences)
        .map(|_| {
            let sequence = rng.random_range(0..dataset.len());
            let steps = dataset.sequences[sequence].trajectory.steps();
            let start = rng.random_range(0..=steps - cfg.subseq_len);
            Window { sequence, start, len: cfg.subseq_len }
        })
        .collect())
}

fn check_lengths(dataset: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    for (index, s) in dataset.sequences.iter().enumerate() {
        if s.trajectory.steps() < cfg.subseq_len {
            return Err(Error::SequenceTooShort { index, frames: s.trajectory.steps(), needed: cfg.subseq_len });
        }
    }
    Ok(())
}

/// The `b`-th minibatch of every epoch. Epochs revisit the same windows, so an
/// epoch is a pass over a fixed sample of the dataset.
pub fn epoch_batch(dataset: &Dataset, cfg: &TrainConfig, b: usize) -> Result<Vec<Window>> {
    make_minibatch(dataset, cfg, &mut rng(child_seed(cfg.seed, DOMAIN_BATCH, b as u64)))
}

/// Summed loss of one window and its gradients.
pub fn window_loss(model: &Model, traj: &Trajectory, forces: &ForceMap, w: Window, h: usize) -> Result<(f64, Gradients, usize)> {
    if model.config.horizon != h {
        return Err(Error::ShapeMismatch(format!("model horizon {} vs training horizon {h}", model.config.horizon)));
    }
    let weights = horizon_weights(h);
    let n = traj.num_balls();
    let ids: Vec<usize> = traj.states[0].balls.iter().map(|b| b.id).collect();
    let streams: Vec<Vec<usize>> = match model.config.kind {
        ModelKind::Oc => (0..n).map(|b| vec![b]).collect(),
        ModelKind::Fc => {
            if n > model.config.max_balls {
                return Err(Error::TooManyBalls { count: n, max: model.config.max_balls });
            }
            vec![(0..n).collect()]
        }
    };
    let first = w.start.saturating_sub(crate::render::STACK_DEPTH - 1);
    let none = ForceMap::new();
    let mut g = Graph::new(&model.params);
    let mut losses = Vec::new();
    for balls in &streams {
        let images: Vec<Image> =
            (first..w.start + w.len).map(|t| model.render(&traj.states[t], ids[balls[0]])).collect::<Result<_>>()?;
        let stream_ids: Vec<usize> = balls.iter().map(|&b| ids[b]).collect();
        let mut state = StateVars::input(&mut g, &LstmState::zeros(model.config.hidden));
        for t in w.frames() {
            let frames: Vec<&Image> = stack_indices(t).iter().map(|&i| &images[i - first]).collect();
            let x = g.input(stack_tensor(&frames)?);
            let f = g.input(model.force_input(if t == 0 { forces } else { &none }, &stream_ids));
            let (out, next) = model.step(&mut g, x, f, state)?;
            state = next;
            let slots = model.config.slots();
            let mut target = vec![0.0; 2 * h * slots];
            let mut wk = vec![0.0; h * slots];
            for (slot, &b) in balls.iter().enumerate() {
                let (tt, mask) = horizon_targets(traj, b, t, h);
                target[2 * h * slot..2 * h * (slot + 1)].copy_from_slice(tt.data());
                for k in 0..h {
                    wk[h * slot + k] = weights[k] * mask[k];
                }
            }
            let target = Tensor::new(vec![h * slots, 2], target)?;
            losses.push(g.weighted_horizon_loss(out, &target, &wk)?);
        }
    }
    let count = losses.len() / streams.len() * n;
    let total = g.sum(&losses)?;
    let loss = g.value(total).data()[0];
    let grads = g.backward(total)?;
    Ok((loss, grads, count))
}

/// Mean per-frame loss over a batch, with gradients accumulated into the
/// model's buffers in window order.
pub fn batch_step(model: &mut Model, dataset: &Dataset, windows: &[Window], h: usize) -> Result<f64> {
    let m: &Model = model;
    let results: Vec<(f64, Gradients, usize)> = windows
        .par_iter()
        .map(|w| {
            let s = &dataset.sequences[w.sequence];
            window_loss(m, &s.trajectory, &s.forces_at_t0, *w, h)
        })
        .collect::<Result<_>>()?;
    let count: usize = results.iter().map(|r| r.2).sum();
    let scale = 1.0 / count.max(1) as f64;
    let mut loss = 0.0;
    for (l, g, _) in &results {
        loss += l;
        model.params.accumulate(g, scale);
    }
    Ok(loss * scale)
}

/// Mean loss over a batch without touching gradients.
pub fn batch_loss(model: &Model, dataset: &Dataset, windows: &[Window], h: usize) -> Result<f64> {
    let mut scratch = model.clone();
    let l = batch_step(&mut scratch, dataset, windows, h)?;
    Ok(l)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    /// `epoch,mean_loss` rows. Wall-clock times are left out so the log is
    /// reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "epoch,mean_loss")?;
        }
        for e in &self.epochs {
            writeln!(w, "{},{:.12e}", e.epoch, e.mean_loss)?;
        }
        Ok(())
    }
}

/// SGD with momentum. `on_epoch` sees each finished epoch (for logging).
pub fn train_with(
    model: &mut Model,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epochs: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    check_lengths(dataset, cfg)?;
    let batches = cfg.batches_for(dataset);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum).with_clip(cfg.clip_norm);
    let clock = Instant::now();
    let mut records = Vec::with_capacity(epochs);
    model.params.zero_grads();
    for epoch in 0..epochs {
        let mut sum = 0.0;
        for b in 0..batches {
            let windows = epoch_batch(dataset, cfg, b)?;
            let loss = batch_step(model, dataset, &windows, cfg.horizon)?;
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss });
            }
            opt.step(&mut model.params);
            sum += loss;
        }
        let mean_loss = sum / batches as f64;
        if !mean_loss.is_finite() || !model.params.ids().all(|id| model.params.value(id).all_finite()) {
            return Err(Error::DivergenceDetected { epoch, loss: mean_loss });
        }
        let rec = EpochRecord { epoch, mean_loss, wall_seconds: clock.elapsed().as_secs_f64() };
        on_epoch(&rec);
        records.push(rec);
    }
    Ok(TrainReport { epochs: records })
}

pub fn train(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, dataset, cfg, cfg.epochs, |_| {})
}

/// Result of one curriculum stage.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub model: Model,
    pub report: TrainReport,
}

/// Trains stage by stage, each stage starting from the previous stage's weights.
pub fn train_curriculum(initial: &Model, stages: &[(&Dataset, usize)], cfg: &TrainConfig) -> Result<Vec<StageResult>> {
    if stages.is_empty() {
        return Err(Error::InvalidConfig("curriculum has no stages".into()));
    }
    let mut out: Vec<StageResult> = Vec::with_capacity(stages.len());
    let mut current = initial.clone();
    for (i, (dataset, epochs)) in stages.iter().enumerate() {
        if let Some(prev) = out.last() {
            current.init_from(&prev.model)?;
        }
        let stage_cfg = TrainConfig { seed: child_seed(cfg.seed, DOMAIN_BATCH + 1, i as u64), ..cfg.clone() };
        let stage_cfg = if i == 0 { cfg.clone() } else { stage_cfg };
        let report = train_with(&mut current, dataset, &stage_cfg, *epochs, |_| {})?;
        out.push(StageResult { model: current.clone(), report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
