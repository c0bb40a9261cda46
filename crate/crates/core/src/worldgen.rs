//! Seeded world sampling and dataset generation.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::physics::{self, io as blrd, Ball, ForceMap, PhysicsParams, Table, Trajectory, WorldState};
use crate::seed::{child_seed, rng, Rng};

/// Rejections allowed before ball placement gives up.
pub const MAX_PLACEMENT_REJECTIONS: usize = 10_000;

const DOMAIN_WORLD: u64 = 1;
const DOMAIN_LENGTH: u64 = 2;
const DOMAIN_SEQUENCE: u64 = 3;

/// Named non-rectangular table shapes, defined on a unit scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    Rectangle,
    RightTrapezoid,
    Hexagon,
    LShape,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::Rectangle, Template::RightTrapezoid, Template::Hexagon, Template::LShape];

    fn unit_vertices(self) -> Vec<Vec2> {
        match self {
            Template::Rectangle => vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.75), (0.0, 0.75)],
            Template::RightTrapezoid => vec![(0.0, 0.0), (1.0, 0.0), (0.6, 0.8), (0.0, 0.8)],
            Template::Hexagon => {
                let h = 3f64.sqrt() / 4.0;
                (0..6)
                    .map(|k| {
                        let a = std::f64::consts::FRAC_PI_3 * k as f64;
                        (0.5 + 0.5 * a.cos(), h + 0.5 * a.sin())
                    })
                    .collect()
            }
            Template::LShape => vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)],
        }
        .into_iter()
        .map(|(x, y)| Vec2::new(x, y))
        .collect()
    }

    pub fn table(self, scale: f64) -> Result<Table> {
        Table::new(self.unit_vertices().into_iter().map(|v| v * scale).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Geometry {
    /// Axis-aligned box whose width and height are drawn independently.
    Rectangular { length_range: (f64, f64) },
    /// One of `templates`, uniformly, scaled uniformly within `scale_range`.
    PolygonFamily { templates: Vec<Template>, scale_range: (f64, f64) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub name: String,
    pub n_balls: usize,
    pub geometry: Geometry,
    /// Newtons.
    pub force_mag_range: (f64, f64),
    /// Steps per sequence, inclusive.
    pub seq_len_range: (usize, usize),
    pub ball_radius: f64,
    pub glimpse_size: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            name: "train".into(),
            n_balls: 1,
            geometry: Geometry::Rectangular { length_range: (300.0, 550.0) },
            force_mag_range: (30_000.0, 80_000.0),
            seq_len_range: (20, 200),
            ball_radius: physics::DEFAULT_RADIUS,
            glimpse_size: 64.0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] must be positive and non-empty")));
    }
    Ok(())
}

impl WorldSpec {
    pub fn with_balls(mut self, n: usize) -> Self {
        self.n_balls = n;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_balls == 0 {
            return Err(Error::InvalidConfig("n_balls must be at least 1".into()));
        }
        if !(self.ball_radius > 0.0 && self.glimpse_size > 0.0) {
            return Err(Error::InvalidConfig("ball radius and glimpse size must be positive".into()));
        }
        check_range("force magnitude", self.force_mag_range)?;
        let (lo, hi) = self.seq_len_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("sequence length range [{lo}, {hi}] invalid")));
        }
        match &self.geometry {
            Geometry::Rectangular { length_range } => check_range("wall length", *length_range)?,
            Geometry::PolygonFamily { templates, scale_range } => {
                check_range("template scale", *scale_range)?;
                if templates.is_empty() {
                    return Err(Error::InvalidConfig("polygon family needs at least one template".into()));
                }
            }
        }
        Ok(())
    }

    fn sample_table(&self, rng: &mut Rng) -> Result<Table> {
        match &self.geometry {
            Geometry::Rectangular { length_range: (lo, hi) } => {
                let w = rng.random_range(*lo..=*hi);
                let h = rng.random_range(*lo..=*hi);
                Table::rectangle(w, h)
            }
            Geometry::PolygonFamily { templates, scale_range: (lo, hi) } => {
                let t = templates[rng.random_range(0..templates.len())];
                t.table(rng.random_range(*lo..=*hi))
            }
        }
    }

    /// Uniform direction, uniform magnitude within the force range.
    pub fn sample_force(&self, rng: &mut Rng) -> Vec2 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (lo, hi) = self.force_mag_range;
        Vec2::from_angle(angle) * rng.random_range(lo..=hi)
    }
}

/// Places `spec.n_balls` non-overlapping balls uniformly on a sampled table and
/// draws one first-frame force per ball.
pub fn sample_world(spec: &WorldSpec, seed: u64) -> Result<(WorldState, ForceMap)> {
    spec.validate()?;
    let mut rng = rng(child_seed(seed, DOMAIN_WORLD, 0));
    let table = spec.sample_table(&mut rng)?;
    let (min, max) = table.bounding_box();
    let r = spec.ball_radius;
    let mut balls: Vec<Ball> = Vec::with_capacity(spec.n_balls);
    let mut rejections = 0;
    while balls.len() < spec.n_balls {
        let c = Vec2::new(rng.random_range(min.x..=max.x), rng.random_range(min.y..=max.y));
        let fits = table.clearance(c) >= r && balls.iter().all(|b| b.center.distance(c) >= b.radius + r);
        if fits {
            balls.push(Ball::new(balls.len(), c, Vec2::ZERO).with_radius(r));
        } else {
            rejections += 1;
            if rejections >= MAX_PLACEMENT_REJECTIONS {
                return Err(Error::PlacementFailure { attempts: rejections, sequence: None });
            }
        }
    }
    let forces = balls.iter().map(|b| (b.id, spec.sample_force(&mut rng))).collect();
    Ok((WorldState::new(table, balls), forces))
}

/// One generated training or evaluation sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub trajectory: Trajectory,
    pub forces_at_t0: ForceMap,
    pub spec_used: WorldSpec,
    pub seed: u64,
}

impl Sequence {
    pub fn table(&self) -> &Table {
        &self.trajectory.states[0].table
    }

    /// World state before the first-frame forces were applied.
    pub fn initial_state(&self, params: &PhysicsParams) -> WorldState {
        let mut s = self.trajectory.states[0].clone();
        for (&id, &f) in &self.forces_at_t0 {
            if let Some(b) = s.balls.iter_mut().find(|b| b.id == id) {
                b.velocity -= f * params.impulse_scale;
            }
        }
        s
    }
}

/// Samples a world, a length and simulates it.
pub fn sample_sequence(spec: &WorldSpec, seed: u64, params: &PhysicsParams) -> Result<Sequence> {
    let (state, forces) = sample_world(spec, seed)?;
    let mut len_rng = rng(child_seed(seed, DOMAIN_LENGTH, 0));
    let steps = len_rng.random_range(spec.seq_len_range.0..=spec.seq_len_range.1);
    let trajectory = physics::simulate(&state, &forces, steps, params)?;
    Ok(Sequence { trajectory, forces_at_t0: forces, spec_used: spec.clone(), seed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub steps: usize,
    pub events: usize,
    pub file: String,
    pub table: Table,
    pub forces: ForceMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub n_sequences: usize,
    pub total_frames: usize,
    pub total_events: usize,
    pub spec: WorldSpec,
    pub physics: PhysicsParams,
    pub sequences: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    pub manifest: Manifest,
}

pub fn sequence_file_name(index: usize) -> String {
    format!("seq_{index:06}.blrd")
}

/// Generates `n_sequences` sequences; sequence `i` uses a seed split from
/// `seed` by its index, so generation order does not matter.
pub fn generate_dataset(spec: &WorldSpec, n_sequences: usize, seed: u64, params: &PhysicsParams) -> Result<Dataset> {
    if n_sequences == 0 {
        return Err(Error::InvalidConfig("a dataset needs at least one sequence".into()));
    }
    spec.validate()?;
    params.validate()?;
    let sequences = (0..n_sequences)
        .into_par_iter()
        .map(|i| {
            sample_sequence(spec, child_seed(seed, DOMAIN_SEQUENCE, i as u64), params).map_err(|e| match e {
                Error::PlacementFailure { attempts, .. } => Error::PlacementFailure { attempts, sequence: Some(i) },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = build_manifest(spec, seed, params, &sequences);
    Ok(Dataset { sequences, manifest })
}

fn build_manifest(spec: &WorldSpec, seed: u64, params: &PhysicsParams, sequences: &[Sequence]) -> Manifest {
    let entries: Vec<ManifestEntry> = sequences
        .iter()
        .enumerate()
        .map(|(index, s)| ManifestEntry {
            index,
            seed: s.seed,
            steps: s.trajectory.steps(),
            events: s.trajectory.events.len(),
            file: sequence_file_name(index),
            table: s.table().clone(),
            forces: s.forces_at_t0.clone(),
        })
        .collect();
    Manifest {
        format: "BLRD1".into(),
        seed,
        n_sequences: sequences.len(),
        total_frames: sequences.iter().map(|s| s.trajectory.num_frames()).sum(),
        total_events: entries.iter().map(|e| e.events).sum(),
        spec: spec.clone(),
        physics: *params,
        sequences: entries,
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.manifest)?)
    }

    /// Writes `manifest.json` and one `BLRD1` file per sequence into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (entry, seq) in self.manifest.sequences.iter().zip(&self.sequences) {
            let f = BufWriter::new(fs::File::create(dir.join(&entry.file))?);
            blrd::write_trajectory(f, &seq.trajectory)?;
        }
        fs::write(dir.join("manifest.json"), self.manifest_json()? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let mut sequences = Vec::with_capacity(manifest.sequences.len());
        for entry in &manifest.sequences {
            let f = BufReader::new(fs::File::open(dir.join(&entry.file))?);
            let trajectory = blrd::read_trajectory(f, &entry.table)?;
            if trajectory.steps() != entry.steps {
                return Err(Error::Format(format!("{} length disagrees with manifest", entry.file)));
            }
            sequences.push(Sequence {
                trajectory,
                forces_at_t0: entry.forces.clone(),
                spec_used: manifest.spec.clone(),
                seed: entry.seed,
            });
        }
        if sequences.len() != manifest.n_sequences {
            return Err(Error::Format("manifest count disagrees with entries".into()));
        }
        Ok(Dataset { sequences, manifest })
    }
}

/// Named evaluation distributions: the training distribution, large walls,
/// more balls and non-rectangular tables.
pub fn test_spec_variants() -> Vec<WorldSpec> {
    let train = WorldSpec::default();
    let mut out = vec![train.clone()];
    out.push(WorldSpec { geometry: Geometry::Rectangular { length_range: (800.0, 1200.0) }, ..train.clone() }.named("large-walls"));
    for n in [2, 3, 4, 6] {
        out.push(train.clone().with_balls(n).named(format!("{n}-ball")));
    }
    out.push(
        WorldSpec {
            geometry: Geometry::PolygonFamily { templates: Template::ALL.to_vec(), scale_range: (350.0, 550.0) },
            ..train
        }
        .named("polygon"),
    );
    out
}

/// Looks up a variant from [`test_spec_variants`] by name.
pub fn spec_variant(name: &str) -> Result<WorldSpec> {
    test_spec_variants()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown dataset variant `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_ball_train_world_respects_ranges() {
        let spec = WorldSpec::default();
        for seed in 0..50 {
            let (w, forces) = sample_world(&spec, seed).unwrap();
            assert_eq!(w.balls.len(), 1);
            let (min, max) = w.table.bounding_box();
            for len in [max.x - min.x, max.y - min.y] {
                assert!((300.0..=550.0).contains(&len), "{len}");
            }
            let f = forces[&0].norm();
            assert!((30_000.0 - 1e-6..=80_000.0 + 1e-6).contains(&f));
            w.validate().unwrap();
        }
    }

    #[test]
    fn crowded_box_fails_placement() {
        let spec = WorldSpec { geometry: Geometry::Rectangular { length_range: (120.0, 120.0) }, ..Default::default() }
            .with_balls(6);
        assert!(matches!(sample_world(&spec, 3), Err(Error::PlacementFailure { .. })));
    }

    #[test]
    fn same_seed_same_world() {
        let spec = WorldSpec::default().with_balls(3);
        assert_eq!(sample_world(&spec, 11).unwrap(), sample_world(&spec, 11).unwrap());
        assert_ne!(sample_world(&spec, 11).unwrap(), sample_world(&spec, 12).unwrap());
    }

    #[test]
    fn dataset_lengths_in_range_and_zero_rejected() {
        let p = PhysicsParams::default();
        let d = generate_dataset(&WorldSpec::default(), 10, 7, &p).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.manifest.n_sequences, 10);
        for s in &d.sequences {
            assert!((20..=200).contains(&s.trajectory.steps()));
        }
        assert_eq!(d.manifest.total_frames, d.sequences.iter().map(|s| s.trajectory.num_frames()).sum::<usize>());
        assert!(generate_dataset(&WorldSpec::default(), 0, 7, &p).is_err());
    }

    #[test]
    fn variants_cover_large_walls_and_ball_counts() {
        let vs = test_spec_variants();
        assert!(vs.iter().any(|s| s.geometry == Geometry::Rectangular { length_range: (800.0, 1200.0) }));
        for n in [3, 4, 6] {
            assert!(vs.iter().any(|s| s.n_balls == n));
        }
        assert!(vs.iter().any(|s| matches!(s.geometry, Geometry::PolygonFamily { .. })));
        for s in &vs {
            s.validate().unwrap();
        }
        assert!(spec_variant("large-walls").is_ok());
        assert!(spec_variant("nope").is_err());
    }

    #[test]
    fn polygon_templates_are_valid_and_placeable() {
        for t in Template::ALL {
            let table = t.table(350.0).unwrap();
            assert!(table.area() > 0.0);
        }
        let spec = spec_variant("polygon").unwrap().with_balls(2);
        for seed in 0..20 {
            let (w, _) = sample_world(&spec, seed).unwrap();
            w.validate().unwrap();
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = WorldSpec { force_mag_range: (80_000.0, 30_000.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = WorldSpec { seq_len_range: (0, 10), ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(WorldSpec::default().with_balls(0).validate().is_err());
    }
}
