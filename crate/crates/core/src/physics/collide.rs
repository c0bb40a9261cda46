//! Exact time-of-impact queries and impulse resolution for discs.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

use super::world::{Ball, PENETRATION_EPS};

/// Distance tolerance for the contact precondition of the resolvers.
pub const CONTACT_TOL: f64 = 1e-6;

/// Earliest `tau` in `[0, dt)` at which two moving points separated by
/// `rel_pos` (with relative velocity `rel_vel`) reach distance `reach` while
/// closing.
fn toi_point_reach(rel_pos: Vec2, rel_vel: Vec2, reach: f64, dt: f64) -> Option<f64> {
    let a = rel_vel.norm_sq();
    let half_b = rel_pos.dot(rel_vel);
    if a == 0.0 || half_b >= 0.0 {
        return None;
    }
    let c = rel_pos.norm_sq() - reach * reach;
    if c <= 0.0 {
        // Touching (or inside the penetration tolerance) and closing.
        return Some(0.0);
    }
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    // Stable smaller root of a t^2 + 2 half_b t + c.
    let q = -half_b + disc.sqrt();
    let tau = c / q;
    (tau < dt).then_some(tau)
}

/// Time of impact between two discs within `[0, dt)`.
pub fn toi_circle_circle(b1: &Ball, b2: &Ball, dt: f64) -> Option<f64> {
    toi_point_reach(b1.center - b2.center, b1.velocity - b2.velocity, b1.radius + b2.radius, dt)
}

/// A wall contact found by [`segment_contact`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallContact {
    pub toi: f64,
    /// Unit normal at the contact, pointing from the wall towards the ball.
    pub normal: Vec2,
    /// True when the contact is with an endpoint rather than the face.
    pub at_endpoint: bool,
}

/// Time of impact of a disc against the face of a segment whose inward
/// normal is `normal` (the side the ball lives on).
pub fn face_contact(ball: &Ball, a: Vec2, b: Vec2, normal: Vec2, dt: f64) -> Option<WallContact> {
    let vn = ball.velocity.dot(normal);
    if vn >= 0.0 {
        return None;
    }
    let gap = (ball.center - a).dot(normal) - ball.radius;
    if gap < -ball.radius {
        // Center behind the wall line: not a face contact.
        return None;
    }
    let tau = if gap <= 0.0 { 0.0 } else { gap / -vn };
    if tau >= dt {
        return None;
    }
    let contact = ball.center + ball.velocity * tau - normal * ball.radius;
    let along = b - a;
    let s = (contact - a).dot(along) / along.norm_sq();
    (0.0..=1.0).contains(&s).then_some(WallContact { toi: tau, normal, at_endpoint: false })
}

/// Time of impact of a disc against a fixed point (a polygon corner).
pub fn corner_contact(ball: &Ball, corner: Vec2, dt: f64) -> Option<WallContact> {
    let tau = toi_point_reach(ball.center - corner, ball.velocity, ball.radius, dt)?;
    let normal = (ball.center + ball.velocity * tau - corner).normalized()?;
    Some(WallContact { toi: tau, normal, at_endpoint: true })
}

/// Earliest contact of a disc with a segment, face or endpoints.
pub fn segment_contact(ball: &Ball, edge: (Vec2, Vec2), dt: f64) -> Option<WallContact> {
    let (a, b) = edge;
    let dir = (b - a).normalized()?;
    let mut normal = dir.perp();
    if (ball.center - a).dot(normal) < 0.0 {
        normal = -normal;
    }
    [face_contact(ball, a, b, normal, dt), corner_contact(ball, a, dt), corner_contact(ball, b, dt)]
        .into_iter()
        .flatten()
        .min_by(|x, y| x.toi.total_cmp(&y.toi))
}

/// Time of impact of a disc with a wall segment within `[0, dt)`.
pub fn toi_circle_segment(ball: &Ball, edge: (Vec2, Vec2), dt: f64) -> Option<f64> {
    segment_contact(ball, edge, dt).map(|c| c.toi)
}

/// Elastic (restitution-scaled) impulse exchange along the line of centers.
pub fn resolve_ball_ball(b1: &Ball, b2: &Ball, restitution: f64) -> Result<(Ball, Ball)> {
    let delta = b2.center - b1.center;
    let dist = delta.norm();
    let reach = b1.radius + b2.radius;
    if (dist - reach).abs() > CONTACT_TOL.max(PENETRATION_EPS) {
        return Err(Error::NotInContact(format!(
            "balls {} and {} are {dist} apart, contact at {reach}",
            b1.id, b2.id
        )));
    }
    let n = delta / dist;
    let closing = (b1.velocity - b2.velocity).dot(n);
    if closing <= 0.0 {
        return Err(Error::NotInContact(format!("balls {} and {} are separating", b1.id, b2.id)));
    }
    let impulse = (1.0 + restitution) * closing / (1.0 / b1.mass + 1.0 / b2.mass);
    let mut out1 = b1.clone();
    let mut out2 = b2.clone();
    out1.velocity = b1.velocity - n * (impulse / b1.mass);
    out2.velocity = b2.velocity + n * (impulse / b2.mass);
    Ok((out1, out2))
}

/// Reflects the normal velocity component off a wall with unit normal
/// `edge_normal` (pointing towards the ball).
pub fn resolve_ball_wall(ball: &Ball, edge_normal: Vec2, restitution: f64) -> Result<Ball> {
    let vn = ball.velocity.dot(edge_normal);
    if vn >= 0.0 {
        return Err(Error::NotInContact(format!("ball {} is not approaching the wall", ball.id)));
    }
    let mut out = ball.clone();
    out.velocity = ball.velocity - edge_normal * ((1.0 + restitution) * vn);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(c: (f64, f64), v: (f64, f64)) -> Ball {
        Ball::new(0, Vec2::new(c.0, c.1), Vec2::new(v.0, v.1))
    }

    #[test]
    fn head_on_discs_meet_halfway_through_the_step() {
        let a = ball((0.0, 0.0), (10.0, 0.0));
        let b = ball((60.0, 0.0), (-10.0, 0.0));
        assert_eq!(toi_circle_circle(&a, &b, 1.0), Some(0.5));
    }

    #[test]
    fn separating_discs_never_collide() {
        let a = ball((0.0, 0.0), (-10.0, 0.0));
        let b = ball((60.0, 0.0), (10.0, 0.0));
        assert_eq!(toi_circle_circle(&a, &b, 1.0), None);
    }

    #[test]
    fn distant_discs_do_not_collide_this_step() {
        let a = ball((0.0, 0.0), (10.0, 0.0));
        let b = ball((200.0, 0.0), (-10.0, 0.0));
        assert_eq!(toi_circle_circle(&a, &b, 1.0), None);
    }

    #[test]
    fn face_hit_after_five_pixels() {
        let b = ball((0.0, 30.0), (0.0, -10.0));
        let edge = (Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0));
        assert_eq!(toi_circle_segment(&b, edge, 1.0), Some(0.5));
    }

    #[test]
    fn parallel_motion_never_hits_face() {
        let b = ball((0.0, 30.0), (10.0, 0.0));
        let edge = (Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0));
        assert_eq!(toi_circle_segment(&b, edge, 1.0), None);
    }

    #[test]
    fn corner_contact_is_smallest_root_against_endpoint() {
        let b = ball((30.0, 30.0), (-10.0, -10.0));
        let edge = (Vec2::new(-100.0, 0.0), Vec2::new(0.0, 0.0));
        let tau = toi_circle_segment(&b, edge, 2.0).unwrap();
        // |(30 - 10 t) * sqrt(2)| = 25
        let expected = (30.0 - 25.0 / 2f64.sqrt()) / 10.0;
        assert!((tau - expected).abs() < 1e-12, "{tau} vs {expected}");
        let c = segment_contact(&b, edge, 2.0).unwrap();
        assert!(c.at_endpoint);
        let diag = Vec2::new(1.0, 1.0) / 2f64.sqrt();
        assert!((c.normal - diag).norm() < 1e-12);
        // Within one step the corner is still out of reach.
        assert_eq!(toi_circle_segment(&b, edge, 1.0), None);
    }

    #[test]
    fn equal_mass_head_on_swaps_velocities() {
        let a = ball((0.0, 0.0), (10.0, 0.0));
        let mut b = ball((50.0, 0.0), (-10.0, 0.0));
        b.id = 1;
        let (a2, b2) = resolve_ball_ball(&a, &b, 1.0).unwrap();
        assert_eq!(a2.velocity, Vec2::new(-10.0, 0.0));
        assert_eq!(b2.velocity, Vec2::new(10.0, 0.0));
    }

    #[test]
    fn newtons_cradle_transfers_all_motion() {
        let a = ball((0.0, 0.0), (10.0, 0.0));
        let b = ball((50.0, 0.0), (0.0, 0.0));
        let (a2, b2) = resolve_ball_ball(&a, &b, 1.0).unwrap();
        assert_eq!(a2.velocity, Vec2::new(0.0, 0.0));
        assert_eq!(b2.velocity, Vec2::new(10.0, 0.0));
    }

    #[test]
    fn glancing_contact_barely_changes_velocity() {
        let a = ball((0.0, 0.0), (1e-9, 10.0));
        let b = ball((50.0, 0.0), (0.0, 10.0));
        let (a2, b2) = resolve_ball_ball(&a, &b, 1.0).unwrap();
        assert!((a2.velocity - a.velocity).norm() < 1e-8);
        assert!((b2.velocity - b.velocity).norm() < 1e-8);
        let tangent_only = ball((0.0, 0.0), (0.0, 10.0));
        assert!(resolve_ball_ball(&tangent_only, &b, 1.0).is_err());
    }

    #[test]
    fn non_touching_balls_rejected() {
        let a = ball((0.0, 0.0), (10.0, 0.0));
        let b = ball((80.0, 0.0), (-10.0, 0.0));
        assert!(matches!(resolve_ball_ball(&a, &b, 1.0), Err(Error::NotInContact(_))));
    }

    #[test]
    fn wall_reflection_and_restitution() {
        let n = Vec2::new(0.0, 1.0);
        let r = resolve_ball_wall(&ball((0.0, 25.0), (3.0, -4.0)), n, 1.0).unwrap();
        assert_eq!(r.velocity, Vec2::new(3.0, 4.0));
        let r = resolve_ball_wall(&ball((0.0, 25.0), (0.0, -10.0)), n, 0.5).unwrap();
        assert_eq!(r.velocity, Vec2::new(0.0, 5.0));
        assert!(resolve_ball_wall(&ball((0.0, 25.0), (5.0, 0.0)), n, 1.0).is_err());
    }
}
