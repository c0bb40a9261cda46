use cueplan::physics::{apply_force, resolve_ball_ball, resolve_ball_wall, simulate, step, toi_circle_circle};
use cueplan::worldgen::{sample_world, spec_variant, WorldSpec};
use cueplan::{Ball, PhysicsParams, Vec2};
use proptest::prelude::*;

fn spec(i: usize) -> WorldSpec {
    spec_variant(["train", "2-ball", "3-ball", "4-ball", "6-ball", "polygon", "large-walls"][i]).unwrap()
}

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elastic_worlds_keep_energy_and_stay_valid(variant in 0usize..7, seed in any::<u64>()) {
        let p = PhysicsParams::default();
        let (state, forces) = sample_world(&spec(variant), seed).unwrap();
        let traj = simulate(&state, &forces, 120, &p).unwrap();
        let e0 = traj.states[0].kinetic_energy();
        for s in &traj.states {
            prop_assert!((s.kinetic_energy() - e0).abs() <= 1e-9 * e0);
            prop_assert!(s.validate_with(1e-6).is_ok());
            prop_assert_eq!(s.table.vertices(), state.table.vertices());
        }
        for (t, s) in traj.states.iter().enumerate().skip(1) {
            for (b, ball) in s.balls.iter().enumerate() {
                let bound = (2.0 * e0 / ball.mass).sqrt() + 1e-9;
                prop_assert!(ball.velocity.norm() <= bound);
                prop_assert!(traj.displacement(t, b).norm() <= bound);
            }
        }
    }

    #[test]
    fn stepping_is_bit_reproducible(variant in 0usize..7, seed in any::<u64>()) {
        let p = PhysicsParams::default();
        let (state, forces) = sample_world(&spec(variant), seed).unwrap();
        prop_assert_eq!(simulate(&state, &forces, 60, &p).unwrap(), simulate(&state, &forces, 60, &p).unwrap());
    }

    #[test]
    fn damping_only_loses_energy(seed in any::<u64>(), damping in 0.001f64..0.2) {
        let p = PhysicsParams { damping, ..PhysicsParams::default() };
        let (state, forces) = sample_world(&spec(3), seed).unwrap();
        let traj = simulate(&state, &forces, 60, &p).unwrap();
        for w in traj.states.windows(2) {
            prop_assert!(w[1].kinetic_energy() <= w[0].kinetic_energy() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ball_ball_resolution_conserves_momentum_and_energy(
        angle in 0.0f64..std::f64::consts::TAU,
        r1 in 10.0f64..40.0,
        r2 in 10.0f64..40.0,
        v1 in vec2(10.0),
        v2 in vec2(10.0),
    ) {
        let n = Vec2::new(angle.cos(), angle.sin());
        let a = Ball::new(0, Vec2::new(300.0, 300.0), v1).with_radius(r1);
        let b = Ball::new(1, a.center + n * (r1 + r2), v2).with_radius(r2);
        prop_assume!((v1 - v2).dot(n) > 1e-6);
        let (a2, b2) = resolve_ball_ball(&a, &b, 1.0).unwrap();
        let p0 = a.velocity * a.mass + b.velocity * b.mass;
        let p1 = a2.velocity * a2.mass + b2.velocity * b2.mass;
        let scale = (a.velocity * a.mass).norm() + (b.velocity * b.mass).norm();
        prop_assert!((p1 - p0).norm() <= 1e-12 * scale);
        let e0 = a.kinetic_energy() + b.kinetic_energy();
        prop_assert!((a2.kinetic_energy() + b2.kinetic_energy() - e0).abs() <= 1e-12 * e0);
        let t = Vec2::new(-n.y, n.x);
        prop_assert!((a2.velocity.dot(t) - v1.dot(t)).abs() < 1e-12);
        prop_assert!((a2.velocity - b2.velocity).dot(n) <= 1e-12);
    }

    #[test]
    fn wall_resolution_is_specular(angle in 0.0f64..std::f64::consts::TAU, v in vec2(10.0), e in 0.0f64..=1.0) {
        let n = Vec2::new(angle.cos(), angle.sin());
        let ball = Ball::new(0, Vec2::ZERO, v);
        match resolve_ball_wall(&ball, n, e) {
            Ok(out) => {
                prop_assert!(v.dot(n) < 0.0);
                prop_assert!((out.velocity.dot(n) + e * v.dot(n)).abs() < 1e-12);
                let t = Vec2::new(-n.y, n.x);
                prop_assert!((out.velocity.dot(t) - v.dot(t)).abs() < 1e-12);
            }
            Err(_) => prop_assert!(v.dot(n) >= 0.0),
        }
    }

    #[test]
    fn toi_is_the_first_touch(c in vec2(200.0), v1 in vec2(10.0), v2 in vec2(10.0)) {
        let a = Ball::new(0, Vec2::ZERO, v1);
        let b = Ball::new(1, c, v2);
        prop_assume!(c.norm() > 50.0 + 1e-6);
        let at = |t: f64| (a.center + v1 * t).distance(b.center + v2 * t);
        match toi_circle_circle(&a, &b, 1.0) {
            Some(tau) => {
                prop_assert!((0.0..1.0).contains(&tau));
                prop_assert!((at(tau) - 50.0).abs() < 1e-9);
                for i in 0..20 {
                    prop_assert!(at(tau * i as f64 / 20.0) >= 50.0 - 1e-9);
                }
            }
            None => {
                for i in 0..=20 {
                    prop_assert!(at(i as f64 / 20.0) >= 50.0 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn forces_add_scaled_velocity(v in vec2(5.0), f in vec2(40_000.0)) {
        let p = PhysicsParams::default();
        let (state, _) = sample_world(&spec(0), 1).unwrap();
        let mut state = state;
        state.balls[0].velocity = v;
        let out = apply_force(&state, 0, f, &p).unwrap();
        prop_assert!((out.balls[0].velocity - (v + f * p.impulse_scale)).norm() < 1e-12);
        let (next, _) = step(&out, &p).unwrap();
        prop_assert_eq!(next.t, out.t + 1);
    }
}
