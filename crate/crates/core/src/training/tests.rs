use super::*;
use crate::physics::PhysicsParams;
use crate::predictors::ModelConfig;
use crate::worldgen::{generate_dataset, WorldSpec};

fn tiny_model(kind: ModelKind, seed: u64) -> Model {
    let cfg = ModelConfig {
        kind,
        horizon: 3,
        resolution: 8,
        glimpse_size: 160.0,
        max_balls: 2,
        conv_channels: vec![3, 4],
        kernel: 3,
        stride: 2,
        encoder: 6,
        hidden: 4,
        force_scale: crate::predictors::FORCE_SCALE,
    };
    Model::new(cfg, seed).unwrap()
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig { horizon: 3, batch_sequences: 4, subseq_len: 5, lr: 1e-3, batches_per_epoch: Some(2), epochs: 3, ..TrainConfig::default() }
}

fn tiny_data(balls: usize, seed: u64) -> Dataset {
    let spec = WorldSpec { seq_len_range: (10, 30), ..WorldSpec::default().with_balls(balls) };
    generate_dataset(&spec, 6, seed, &PhysicsParams::default()).unwrap()
}

#[test]
fn minibatches_are_seeded_and_in_range() {
    let ds = tiny_data(1, 1);
    let cfg = TrainConfig { batch_sequences: 50, subseq_len: 10, ..TrainConfig::default() };
    let a = make_minibatch(&ds, &cfg, &mut rng(3)).unwrap();
    assert_eq!(a, make_minibatch(&ds, &cfg, &mut rng(3)).unwrap());
    assert_ne!(a, make_minibatch(&ds, &cfg, &mut rng(4)).unwrap());
    assert_eq!(a.len(), 50);
    for w in &a {
        assert!(w.start + w.len <= ds.sequences[w.sequence].trajectory.steps());
    }
    let long = TrainConfig { subseq_len: 31, ..cfg };
    assert!(matches!(make_minibatch(&ds, &long, &mut rng(3)), Err(Error::SequenceTooShort { .. })));
}

#[test]
fn targets_are_simulator_displacements_with_end_mask() {
    let ds = tiny_data(2, 2);
    let traj = &ds.sequences[0].trajectory;
    let last = traj.steps();
    let (t, m) = horizon_targets(traj, 1, 2, 4);
    for k in 1..=4 {
        let u = traj.displacement(2 + k, 1);
        assert_eq!(&t.data()[2 * (k - 1)..2 * k], &[u.x, u.y]);
    }
    assert_eq!(m, vec![1.0; 4]);
    let (t, m) = horizon_targets(traj, 0, last - 2, 4);
    assert_eq!(m, vec![1.0, 1.0, 0.0, 0.0]);
    assert_eq!(&t.data()[4..], &[0.0; 4]);
}

#[test]
fn final_window_loss_is_finite() {
    let ds = tiny_data(1, 3);
    let model = tiny_model(ModelKind::Oc, 1);
    let traj = &ds.sequences[0].trajectory;
    let w = Window { sequence: 0, start: traj.steps() - 5, len: 5 };
    let (loss, grads, count) = window_loss(&model, traj, &ds.sequences[0].forces_at_t0, w, 3).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(count, 5);
    assert!(model.params.ids().all(|id| grads.param(id).is_some_and(|g| g.all_finite())));
    assert!(window_loss(&model, traj, &ds.sequences[0].forces_at_t0, w, 4).is_err());
}

#[test]
fn training_is_reproducible() {
    let ds = tiny_data(1, 4);
    let cfg = tiny_cfg();
    let mut a = tiny_model(ModelKind::Oc, 2);
    let mut b = a.clone();
    let ra = train(&mut a, &ds, &cfg).unwrap();
    let rb = train(&mut b, &ds, &cfg).unwrap();
    assert_eq!(ra.curve(), rb.curve());
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
}

#[test]
fn zero_learning_rate_keeps_the_curve_flat() {
    let ds = tiny_data(1, 5);
    let cfg = TrainConfig { lr: 0.0, epochs: 4, ..tiny_cfg() };
    let mut m = tiny_model(ModelKind::Oc, 3);
    let before = m.clone();
    let curve = train(&mut m, &ds, &cfg).unwrap().curve();
    assert!(curve.windows(2).all(|w| w[0] == w[1]), "{curve:?}");
    assert_eq!(m.params, before.params);
}

#[test]
fn one_step_changes_every_parameter() {
    let ds = tiny_data(1, 6);
    let cfg = TrainConfig { batches_per_epoch: Some(1), epochs: 1, ..tiny_cfg() };
    let mut m = tiny_model(ModelKind::Oc, 4);
    let before = m.clone();
    train(&mut m, &ds, &cfg).unwrap();
    for id in m.params.ids() {
        assert_ne!(m.params.value(id), before.params.value(id), "{} unchanged", m.params.name(id));
    }
}

#[test]
fn frame_centric_trains_on_two_balls() {
    let ds = tiny_data(2, 7);
    let mut m = tiny_model(ModelKind::Fc, 5);
    let rep = train(&mut m, &ds, &tiny_cfg()).unwrap();
    assert!(rep.curve().iter().all(|l| l.is_finite()));
    let three = tiny_data(3, 8);
    assert!(matches!(train(&mut m, &three, &tiny_cfg()), Err(Error::TooManyBalls { count: 3, max: 2 })));
}

#[test]
fn divergence_is_reported() {
    let ds = tiny_data(1, 9);
    let cfg = TrainConfig { lr: 1e300, momentum: 0.0, clip_norm: None, epochs: 6, ..tiny_cfg() };
    let mut m = tiny_model(ModelKind::Oc, 6);
    assert!(matches!(train(&mut m, &ds, &cfg), Err(Error::DivergenceDetected { .. })));
}

#[test]
fn single_stage_curriculum_is_plain_training() {
    let ds = tiny_data(1, 10);
    let cfg = tiny_cfg();
    let init = tiny_model(ModelKind::Oc, 7);
    let stages = train_curriculum(&init, &[(&ds, 2)], &cfg).unwrap();
    let mut plain = init.clone();
    let rep = train_with(&mut plain, &ds, &cfg, 2, |_| {}).unwrap();
    assert_eq!(stages.len(), 1);
    assert_eq!(stages[0].model, plain);
    assert_eq!(stages[0].report.curve(), rep.curve());
    assert!(train_curriculum(&init, &[], &cfg).is_err());
}

#[test]
fn curriculum_rejects_architecture_changes() {
    let prev = tiny_model(ModelKind::Oc, 8);
    let mut other = tiny_model(ModelKind::Fc, 8);
    assert!(matches!(other.init_from(&prev), Err(Error::ShapeMismatch(_))));
}

#[test]
fn train_report_csv() {
    let rep = TrainReport { epochs: vec![EpochRecord { epoch: 0, mean_loss: 2.5, wall_seconds: 1.25 }] };
    let mut out = Vec::new();
    rep.write_csv(&mut out, true).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "epoch,mean_loss\n0,2.500000000000e0\n");
}
