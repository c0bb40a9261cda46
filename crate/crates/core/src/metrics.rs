//! Angular and relative-magnitude velocity errors per horizon step, pooled
//! over frames, overall and within the near-collision window.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::physics::{CollisionEvent, ForceMap};
use crate::predictors::{Observation, Predictor};
use crate::worldgen::{Dataset, Sequence};

/// Ground-truth speeds at or below this are excluded from both metrics.
pub const EPS_V: f64 = 1e-6;
pub const NEAR_COLLISION_WINDOW: usize = 4;

/// Angle between `u` and `pred` in degrees; `None` when `|u| <= EPS_V`.
pub fn angular_error(u: Vec2, pred: Vec2) -> Option<f64> {
    if u.norm() <= EPS_V {
        return None;
    }
    if pred.norm() <= EPS_V {
        return Some(180.0);
    }
    Some(u.cross(pred).abs().atan2(u.dot(pred)).to_degrees())
}

/// `||pred| - |u|| / |u|`; `None` when `|u| <= EPS_V`.
pub fn magnitude_rel_error(u: Vec2, pred: Vec2) -> Option<f64> {
    let n = u.norm();
    if n <= EPS_V {
        return None;
    }
    Some((pred.norm() - n).abs() / n)
}

/// Frame `f` is flagged iff some event at step `s` has `|f - s| <= window`.
pub fn near_collision_mask(events: &[CollisionEvent], frames: usize, window: usize) -> Vec<bool> {
    let mut mask = vec![false; frames];
    for e in events {
        let lo = e.step.saturating_sub(window);
        let hi = (e.step + window).min(frames.saturating_sub(1));
        for m in mask.iter_mut().take(hi + 1).skip(lo) {
            *m = true;
        }
    }
    mask
}

/// Running mean of both metrics in one table cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub angular_sum: f64,
    pub magnitude_sum: f64,
    pub count: usize,
    pub excluded: usize,
}

impl Cell {
    pub fn add(&mut self, u: Vec2, pred: Vec2) {
        match (angular_error(u, pred), magnitude_rel_error(u, pred)) {
            (Some(a), Some(m)) => {
                self.angular_sum += a;
                self.magnitude_sum += m;
                self.count += 1;
            }
            _ => self.excluded += 1,
        }
    }

    pub fn merge(&mut self, other: &Cell) {
        self.angular_sum += other.angular_sum;
        self.magnitude_sum += other.magnitude_sum;
        self.count += other.count;
        self.excluded += other.excluded;
    }

    pub fn angular(&self) -> f64 {
        if self.count == 0 { f64::NAN } else { self.angular_sum / self.count as f64 }
    }

    pub fn magnitude(&self) -> f64 {
        if self.count == 0 { f64::NAN } else { self.magnitude_sum / self.count as f64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Overall,
    NearCollision,
    Far,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Overall, Stratum::NearCollision, Stratum::Far];

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Overall => "overall",
            Stratum::NearCollision => "near_collision",
            Stratum::Far => "far",
        }
    }
}

/// Errors for `k = 1..=h`, indexed `k - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub dataset: String,
    pub model: String,
    pub horizon: usize,
    pub overall: Vec<Cell>,
    pub near: Vec<Cell>,
    pub far: Vec<Cell>,
    /// Evaluated (frame, ball) pairs per stratum.
    pub frames: usize,
    pub near_frames: usize,
    pub far_frames: usize,
}

impl ErrorTable {
    fn empty(dataset: &str, model: &str, h: usize) -> Self {
        ErrorTable {
            dataset: dataset.into(),
            model: model.into(),
            horizon: h,
            overall: vec![Cell::default(); h],
            near: vec![Cell::default(); h],
            far: vec![Cell::default(); h],
            frames: 0,
            near_frames: 0,
            far_frames: 0,
        }
    }

    pub fn stratum(&self, s: Stratum) -> &[Cell] {
        match s {
            Stratum::Overall => &self.overall,
            Stratum::NearCollision => &self.near,
            Stratum::Far => &self.far,
        }
    }

    /// Cell at horizon step `k` (1-based).
    pub fn cell(&self, s: Stratum, k: usize) -> &Cell {
        &self.stratum(s)[k - 1]
    }

    fn merge(&mut self, other: &ErrorTable) {
        for (a, b) in [(&mut self.overall, &other.overall), (&mut self.near, &other.near), (&mut self.far, &other.far)] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        self.frames += other.frames;
        self.near_frames += other.near_frames;
        self.far_frames += other.far_frames;
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "dataset,model,stratum,k,angular_deg,magnitude_rel,count,excluded")?;
        }
        for s in Stratum::ALL {
            for (i, c) in self.stratum(s).iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{:.6},{:.6},{},{}",
                    self.dataset,
                    self.model,
                    s.as_str(),
                    i + 1,
                    c.angular(),
                    c.magnitude(),
                    c.count,
                    c.excluded
                )?;
            }
        }
        Ok(())
    }
}

fn evaluate_sequence(predictor: &mut dyn Predictor, seq: &Sequence, h: usize, table: &mut ErrorTable) -> Result<()> {
    let traj = &seq.trajectory;
    let steps = traj.steps();
    let mask = near_collision_mask(&traj.events, traj.num_frames(), NEAR_COLLISION_WINDOW);
    predictor.begin(&traj.states[0])?;
    let none = ForceMap::new();
    for t in 0..steps {
        let forces = if t == 0 { &seq.forces_at_t0 } else { &none };
        let preds = predictor.predict(&Observation { t, state: &traj.states[t], forces })?;
        if preds.len() != traj.num_balls() {
            return Err(Error::ShapeMismatch(format!("{} predictions for {} balls", preds.len(), traj.num_balls())));
        }
        for (b, p) in preds.iter().enumerate() {
            if p.horizon() < h {
                return Err(Error::ShapeMismatch(format!("prediction horizon {} below {h}", p.horizon())));
            }
            table.frames += 1;
            let strat = if mask[t] {
                table.near_frames += 1;
                &mut table.near
            } else {
                table.far_frames += 1;
                &mut table.far
            };
            for k in 1..=h.min(steps - t) {
                let u = traj.displacement(t + k, b);
                strat[k - 1].add(u, p.velocities[k - 1]);
                table.overall[k - 1].add(u, p.velocities[k - 1]);
            }
        }
    }
    Ok(())
}

/// Runs `predictor` over every frame of every sequence (contexts carried
/// through each sequence) and pools the errors over frames.
pub fn evaluate(predictor: &dyn Predictor, dataset: &Dataset, dataset_name: &str, h: usize) -> Result<ErrorTable> {
    if h == 0 || h > predictor.horizon() {
        return Err(Error::InvalidConfig(format!("evaluation horizon {h} vs predictor horizon {}", predictor.horizon())));
    }
    let name = predictor.name();
    let parts: Vec<ErrorTable> = dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let mut p = predictor.fresh();
            let mut t = ErrorTable::empty(dataset_name, &name, h);
            evaluate_sequence(p.as_mut(), seq, h, &mut t)?;
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut total = ErrorTable::empty(dataset_name, &name, h);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Aligned text table: rows `t+k`, columns per table and stratum as `a°/b`.
pub fn format_table(tables: &[ErrorTable], ks: &[usize]) -> String {
    let mut out = String::new();
    let mut header = format!("{:<8}", "");
    for t in tables {
        for s in [Stratum::Overall, Stratum::NearCollision] {
            header.push_str(&format!("{:>22}", format!("{} {}", t.model, if s == Stratum::Overall { "overall" } else { "near" })));
        }
    }
    let _ = writeln!(out, "{}", header.trim_end());
    for &k in ks {
        let mut row = format!("{:<8}", format!("t+{k}"));
        for t in tables {
            for s in [Stratum::Overall, Stratum::NearCollision] {
                let cell = if k <= t.horizon { format!("{:.1}°/{:.2}", t.cell(s, k).angular(), t.cell(s, k).magnitude()) } else { "-".into() };
                row.push_str(&format!("{cell:>22}"));
            }
        }
        let _ = writeln!(out, "{}", row.trim_end());
    }
    out
}
