//! Static view of the world used by the surrogate: environment blocks plus
//! every block already placed, all treated as fixed.

use crate::geometry::{penetration, Posed, Rect, Rot, Shape, Vec2};
use crate::kinematics::{Owner, Surface};
use crate::level::{Level, Placement, OVERLAP_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBody {
    pub owner: Owner,
    pub posed: Posed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bodies: Vec<SceneBody>,
    pub bounds: Rect,
    pub ball_radius: f64,
}

impl Scene {
    /// Environment plus the blocks of `placed` (unknown ids are skipped).
    pub fn new(level: &Level, placed: &Placement) -> Scene {
        let mut bodies: Vec<SceneBody> = level
            .env
            .iter()
            .enumerate()
            .map(|(q, e)| SceneBody { owner: Owner::Env(q), posed: e.posed() })
            .collect();
        for e in &placed.entries {
            if let Some(t) = level.template(e.id) {
                bodies.push(SceneBody { owner: Owner::Block(e.id), posed: t.posed(e.pos, e.angle) });
            }
        }
        Scene { bodies, bounds: level.bounds, ball_radius: level.ball_radius }
    }

    pub fn with(&self, extra: impl IntoIterator<Item = SceneBody>) -> Scene {
        let mut s = self.clone();
        s.bodies.extend(extra);
        s
    }

    pub fn ball(&self, pos: Vec2) -> Posed {
        Posed::new(Shape::Circle { radius: self.ball_radius }, pos, 0.0)
    }

    /// `p` overlaps some body by more than the touching tolerance.
    pub fn overlaps(&self, p: &Posed) -> bool {
        self.bodies.iter().any(|b| penetration(p, &b.posed) > OVERLAP_TOL)
    }

    /// Lower `shape` at fixed `x` and `angle` from `y_top` until it rests on
    /// something. `None` when it starts in overlap or falls out of the world.
    pub fn drop_shape(&self, shape: Shape, x: f64, y_top: f64, angle: f64) -> Option<Posed> {
        const STEP: f64 = 2.0;
        let at = |y: f64| Posed::new(shape, Vec2::new(x, y), angle);
        let start = at(y_top);
        if self.overlaps(&start) || !self.bounds.contains_rect(&start.aabb()) {
            return None;
        }
        let mut free = y_top;
        let hit = loop {
            let y = free + STEP;
            let p = at(y);
            if p.aabb().max.y > self.bounds.max.y {
                return None;
            }
            if self.overlaps(&p) {
                break y;
            }
            free = y;
        };
        let (mut lo, mut hi) = (free, hit);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.overlaps(&at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(at(lo))
    }
}

/// The feature of `body` nearest to the ball centre `c`: a face segment, a
/// corner (zero-radius circle) or the disc itself, with the unit normal
/// pointing toward the ball.
pub fn contact_feature(body: &SceneBody, c: Vec2) -> (Surface, Vec2, bool) {
    let owner = body.owner;
    let p = &body.posed;
    match p.shape {
        Shape::Circle { radius } => {
            let surf = Surface::Circle { center: p.pos, radius, owner };
            (surf, surf.normal_at(c), true)
        }
        Shape::Box { half } => {
            let rot = Rot::new(p.angle);
            let local = rot.apply_t(c - p.pos);
            let out_x = local.x.abs() > half.x;
            let out_y = local.y.abs() > half.y;
            if out_x && out_y {
                let q = p.pos + rot.apply(Vec2::new(half.x.copysign(local.x), half.y.copysign(local.y)));
                let surf = Surface::Circle { center: q, radius: 0.0, owner };
                return (surf, surf.normal_at(c), true);
            }
            let use_x = if out_x || out_y {
                out_x
            } else {
                half.x - local.x.abs() < half.y - local.y.abs()
            };
            let v = p.vertices().expect("boxes have vertices");
            // faces in winding order: top, right, bottom, left (local frame)
            let face = match (use_x, local.x >= 0.0, local.y >= 0.0) {
                (true, true, _) => 1,
                (true, false, _) => 3,
                (false, _, false) => 0,
                (false, _, true) => 2,
            };
            let surf = Surface::Segment { a: v[face], b: v[(face + 1) % 4], owner };
            (surf, surf.normal_at(c), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        Scene {
            bodies: vec![SceneBody {
                owner: Owner::Env(0),
                posed: Posed::new(Shape::Box { half: Vec2::new(200.0, 10.0) }, Vec2::new(200.0, 290.0), 0.0),
            }],
            bounds: Rect::new(Vec2::ZERO, Vec2::new(400.0, 300.0)),
            ball_radius: 15.0,
        }
    }

    #[test]
    fn dropped_plank_rests_on_floor() {
        let s = scene();
        let p = s.drop_shape(Shape::Box { half: Vec2::new(50.0, 10.0) }, 200.0, 20.0, 0.0).unwrap();
        assert!((p.pos.y - 270.0).abs() < 1e-6);
        assert!(penetration(&p, &s.bodies[0].posed) <= OVERLAP_TOL);
    }

    #[test]
    fn features_of_a_box() {
        let s = scene();
        let (surf, n, corner) = contact_feature(&s.bodies[0], Vec2::new(100.0, 265.0));
        assert!(!corner);
        assert_eq!(n, Vec2::new(0.0, -1.0));
        assert!(surf.is_segment());
        let (_, n, corner) = contact_feature(&s.bodies[0], Vec2::new(410.0, 270.0));
        assert!(corner);
        assert!((n - Vec2::new(1.0, -1.0).normalized()).length() < 1e-12);
        let (_, n, _) = contact_feature(&s.bodies[0], Vec2::new(405.0, 290.0));
        assert_eq!(n, Vec2::new(1.0, 0.0));
    }
}
