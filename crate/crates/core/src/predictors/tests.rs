use super::*;
use crate::autodiff::gradcheck::gradient_check;
use crate::autodiff::{horizon_weights, Tensor};
use crate::physics::{Ball, Table};
use crate::seed::rng;
use crate::worldgen::{sample_sequence, WorldSpec};
use rand::Rng as _;

fn free_world(v: Vec2) -> WorldState {
    let table = Table::rectangle(2000.0, 2000.0).unwrap();
    WorldState::new(table, vec![Ball::new(0, Vec2::new(1000.0, 1000.0), v)])
}

fn small_config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        horizon: 2,
        resolution: 8,
        glimpse_size: 120.0,
        max_balls: 2,
        conv_channels: vec![3, 4],
        kernel: 3,
        stride: 2,
        encoder: 6,
        hidden: 3,
        force_scale: FORCE_SCALE,
    }
}

#[test]
fn cv_examples() {
    assert_eq!(cv_predict(Vec2::new(5.0, -2.0), 3).velocities, vec![Vec2::new(5.0, -2.0); 3]);
    assert_eq!(cv_predict(Vec2::ZERO, 2).velocities, vec![Vec2::ZERO; 2]);
}

#[test]
fn cv_is_exact_on_free_flight() {
    let params = PhysicsParams::default();
    let s = free_world(Vec2::new(3.0, -7.5));
    let traj = simulate(&s, &ForceMap::new(), 40, &params).unwrap();
    assert!(traj.events.is_empty());
    let mut cv = ConstantVelocity::default();
    cv.begin(&traj.states[0]).unwrap();
    let none = ForceMap::new();
    for t in 0..=20 {
        let p = cv.predict(&Observation { t, state: &traj.states[t], forces: &none }).unwrap();
        for k in 1..=20 {
            assert_eq!(p[0].velocities[k - 1], traj.displacement(t + k, 0));
        }
    }
}

#[test]
fn oracle_free_flight() {
    let p = oracle_predict(&free_world(Vec2::new(10.0, 0.0)), 0, 5, &PhysicsParams::default()).unwrap();
    assert_eq!(p.velocities, vec![Vec2::new(10.0, 0.0); 5]);
}

#[test]
fn oracle_matches_ground_truth() {
    let params = PhysicsParams::default();
    let seq = sample_sequence(&WorldSpec::default().with_balls(3), 17, &params).unwrap();
    let traj = &seq.trajectory;
    let mut oracle = Oracle::new(10, params);
    oracle.begin(&traj.states[0]).unwrap();
    let none = ForceMap::new();
    for t in 0..traj.num_frames() - 10 {
        let forces = if t == 0 { &seq.forces_at_t0 } else { &none };
        let preds = oracle.predict(&Observation { t, state: &traj.states[t], forces }).unwrap();
        for (b, p) in preds.iter().enumerate() {
            for k in 1..=10 {
                assert_eq!(p.velocities[k - 1], traj.displacement(t + k, b));
            }
            let direct = oracle_predict(&traj.states[t], b, 10, &params).unwrap();
            assert_eq!(&direct, p);
        }
    }
}

#[test]
fn oracle_rejects_skipped_frames() {
    let s = free_world(Vec2::new(1.0, 0.0));
    let mut oracle = Oracle::new(3, PhysicsParams::default());
    oracle.begin(&s).unwrap();
    let mut later = s.clone();
    later.t = 4;
    assert!(oracle.predict(&Observation { t: 4, state: &later, forces: &ForceMap::new() }).is_err());
}

#[test]
fn fresh_model_outputs_decoder_bias_on_zero_input() {
    let model = Model::new(ModelConfig::oc(), 5).unwrap();
    let r = model.config.resolution;
    let mut g = Graph::new(&model.params);
    let x = g.input(Tensor::zeros(&[4, r, r]));
    let f = g.input(Tensor::zeros(&[2]));
    let s = StateVars::input(&mut g, &LstmState::zeros(model.config.hidden));
    let (out, _) = model.step(&mut g, x, f, s).unwrap();
    assert_eq!(g.value(out).len(), 40);
    assert!(g.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn forget_bias_initialised_to_one() {
    let model = Model::new(ModelConfig::oc(), 5).unwrap();
    let b = model.params.value(model.params.require("lstm1.b").unwrap());
    let h = model.config.hidden;
    assert!(b.data()[..h].iter().all(|&v| v == 0.0));
    assert!(b.data()[h..2 * h].iter().all(|&v| v == 1.0));
}

#[test]
fn desk_trunk_reduces_to_one_pixel() {
    let cfg = ModelConfig::oc();
    assert_eq!(cfg.conv_sides().unwrap(), vec![15, 7, 3, 1]);
    assert_eq!(cfg.conv_features().unwrap(), 16);
    assert!(ModelConfig { resolution: 8, ..ModelConfig::oc() }.validate().is_err());
}

fn run_sequence(pred: &mut dyn Predictor, traj: &crate::physics::Trajectory, forces: &ForceMap, frames: usize) -> Vec<Vec<Prediction>> {
    pred.begin(&traj.states[0]).unwrap();
    let none = ForceMap::new();
    (0..frames)
        .map(|t| {
            let f = if t == 0 { forces } else { &none };
            pred.predict(&Observation { t, state: &traj.states[t], forces: f }).unwrap()
        })
        .collect()
}

#[test]
fn oc_is_deterministic_and_translation_invariant() {
    let params = PhysicsParams::default();
    let seq = sample_sequence(&WorldSpec::default().with_balls(2), 3, &params).unwrap();
    let cfg = ModelConfig { glimpse_size: 200.0, resolution: 16, conv_channels: vec![4, 4], ..ModelConfig::oc() };
    let model = Arc::new(Model::new(cfg, 9).unwrap());
    let mut a = NetPredictor::new(Arc::clone(&model));
    let pa = run_sequence(&mut a, &seq.trajectory, &seq.forces_at_t0, 8);
    let pb = run_sequence(a.fresh().as_mut(), &seq.trajectory, &seq.forces_at_t0, 8);
    assert_eq!(pa, pb);

    let shifted = crate::physics::Trajectory {
        states: seq.trajectory.states.iter().map(|s| s.translated(Vec2::new(500.0, 300.0))).collect(),
        events: seq.trajectory.events.clone(),
    };
    let pc = run_sequence(&mut a, &shifted, &seq.forces_at_t0, 8);
    assert_eq!(pa, pc);
    assert!(pa.iter().flatten().all(|p| p.horizon() == 20 && p.velocities.iter().all(|v| v.is_finite())));
}

#[test]
fn carried_context_matches_single_graph() {
    let params = PhysicsParams::default();
    let seq = sample_sequence(&WorldSpec::default(), 4, &params).unwrap();
    let traj = &seq.trajectory;
    let model = Arc::new(Model::new(small_config(ModelKind::Oc), 1).unwrap());
    let mut p = NetPredictor::new(Arc::clone(&model));
    let stepwise = run_sequence(&mut p, traj, &seq.forces_at_t0, 6);

    let mut g = Graph::new(&model.params);
    let mut state = StateVars::input(&mut g, &LstmState::zeros(model.config.hidden));
    let imgs: Vec<Image> = (0..6).map(|t| model.render(&traj.states[t], 0).unwrap()).collect();
    for t in 0..6 {
        let idx = crate::render::stack_indices(t);
        let frames: Vec<&Image> = idx.iter().map(|&i| &imgs[i]).collect();
        let x = g.input(stack_tensor(&frames).unwrap());
        let forces = if t == 0 { seq.forces_at_t0.clone() } else { ForceMap::new() };
        let f = g.input(model.force_input(&forces, &[0]));
        let (out, next) = model.step(&mut g, x, f, state).unwrap();
        state = next;
        assert_eq!(Prediction::from_flat(g.value(out).data()), stepwise[t][0]);
    }
}

#[test]
fn fc_slots_and_limits() {
    let params = PhysicsParams::default();
    let model = Arc::new(Model::new(small_config(ModelKind::Fc), 2).unwrap());
    let mut p = NetPredictor::new(Arc::clone(&model));
    let seq = sample_sequence(&WorldSpec::default().with_balls(2), 8, &params).unwrap();
    let out = run_sequence(&mut p, &seq.trajectory, &seq.forces_at_t0, 3);
    assert!(out.iter().all(|f| f.len() == 2 && f.iter().all(|q| q.horizon() == 2)));
    assert_eq!(out, run_sequence(&mut p, &seq.trajectory, &seq.forces_at_t0, 3));

    let three = sample_sequence(&WorldSpec::default().with_balls(3), 8, &params).unwrap();
    assert!(matches!(p.begin(&three.trajectory.states[0]), Err(Error::TooManyBalls { count: 3, max: 2 })));

    let mut g = Graph::new(&model.params);
    let x = g.input(Tensor::zeros(&[4, 8, 8]));
    let f = g.input(Tensor::zeros(&[4]));
    let s = StateVars::input(&mut g, &LstmState::zeros(3));
    let (y, _) = model.step(&mut g, x, f, s).unwrap();
    assert_eq!(g.value(y).data(), &[0.0; 8]);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let params = PhysicsParams::default();
    let seq = sample_sequence(&WorldSpec::default(), 6, &params).unwrap();
    let model = Model::new(small_config(ModelKind::Oc), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.blnn");
    model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded, model);
    let mut a = NetPredictor::new(Arc::new(model));
    let mut b = NetPredictor::new(Arc::new(loaded));
    assert_eq!(
        run_sequence(&mut a, &seq.trajectory, &seq.forces_at_t0, 4),
        run_sequence(&mut b, &seq.trajectory, &seq.forces_at_t0, 4)
    );
    let other = Model::new(small_config(ModelKind::Fc), 3).unwrap();
    let mut m = Model::new(small_config(ModelKind::Oc), 4).unwrap();
    assert!(m.init_from(&other).is_err());
}

#[test]
fn full_network_gradient_check() {
    let mut r = rng(77);
    for trial in 0..3 {
        let mut model = Model::new(small_config(ModelKind::Oc), 100 + trial).unwrap();
        // biases start at exactly zero, which would put ReLUs of dead features on their kink
        for id in model.params.ids().collect::<Vec<_>>() {
            if model.params.name(id).ends_with(".b") {
                for v in model.params.value_mut(id).data_mut() {
                    *v += r.random_range(-0.1..0.1);
                }
            }
        }
        let steps = 3;
        let images: Vec<Tensor> = (0..steps)
            .map(|_| Tensor::new(vec![4, 8, 8], (0..256).map(|_| r.random_range(0.0..1.0)).collect()).unwrap())
            .collect();
        let targets: Vec<Tensor> =
            (0..steps).map(|_| Tensor::new(vec![2, 2], (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()).collect();
        let force = Tensor::vector(vec![0.4, -0.3]);
        let w = horizon_weights(2);
        let rep = gradient_check(&model.params, &[], 1e-4, |g, _| {
            let mut s = StateVars::input(g, &LstmState::zeros(3));
            let mut losses = Vec::new();
            for t in 0..steps {
                let x = g.input(images[t].clone());
                let f = g.input(if t == 0 { force.clone() } else { Tensor::zeros(&[2]) });
                let (out, next) = model.step(g, x, f, s)?;
                s = next;
                losses.push(g.weighted_horizon_loss(out, &targets[t], &w)?);
            }
            g.sum(&losses)
        })
        .unwrap();
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }
}

