//! Narrow-phase contact generation between boxes and circles.
//!
//! Box-box uses the reference-face clipping scheme from Box2D-lite. Normals
//! always point from the first body to the second.

use crate::geometry::{Posed, Rot, Shape, Vec2};

/// Contacts are generated while bodies are this close (px).
pub const CONTACT_SKIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldPoint {
    pub point: Vec2,
    /// Unit normal from the first body toward the second.
    pub normal: Vec2,
    /// Overlap depth; slightly negative values mean "just touching".
    pub penetration: f64,
    /// The point lies on a corner or a curved feature rather than a flat face.
    pub corner: bool,
}

pub fn collide(a: &Posed, b: &Posed) -> Vec<ManifoldPoint> {
    match (a.shape, b.shape) {
        (Shape::Circle { radius: ra }, Shape::Circle { radius: rb }) => {
            circle_circle(a.pos, ra, b.pos, rb).into_iter().collect()
        }
        (Shape::Box { half }, Shape::Circle { radius }) => {
            box_circle(a.pos, a.angle, half, b.pos, radius).into_iter().collect()
        }
        (Shape::Circle { radius }, Shape::Box { half }) => box_circle(b.pos, b.angle, half, a.pos, radius)
            .map(|m| ManifoldPoint {
                normal: -m.normal,
                point: m.point - m.normal * m.penetration.max(0.0),
                ..m
            })
            .into_iter()
            .collect(),
        (Shape::Box { half: ha }, Shape::Box { half: hb }) => box_box(a.pos, a.angle, ha, b.pos, b.angle, hb),
    }
}

fn circle_circle(pa: Vec2, ra: f64, pb: Vec2, rb: f64) -> Option<ManifoldPoint> {
    let d = pb - pa;
    let dist = d.length();
    let pen = ra + rb - dist;
    if pen < -CONTACT_SKIN {
        return None;
    }
    let normal = if dist > 0.0 { d / dist } else { Vec2::new(0.0, -1.0) };
    Some(ManifoldPoint {
        point: pa + normal * ra,
        normal,
        penetration: pen,
        corner: true,
    })
}

/// Box `a` against circle `b`; the contact point lies on the box surface.
fn box_circle(pa: Vec2, angle: f64, half: Vec2, center: Vec2, radius: f64) -> Option<ManifoldPoint> {
    let rot = Rot::new(angle);
    let local = rot.apply_t(center - pa);
    let inside = local.x.abs() <= half.x && local.y.abs() <= half.y;
    if inside {
        let dx = half.x - local.x.abs();
        let dy = half.y - local.y.abs();
        let (q, n) = if dx < dy {
            (
                Vec2::new(half.x.copysign(local.x), local.y),
                Vec2::new(1f64.copysign(local.x), 0.0),
            )
        } else {
            (
                Vec2::new(local.x, half.y.copysign(local.y)),
                Vec2::new(0.0, 1f64.copysign(local.y)),
            )
        };
        return Some(ManifoldPoint {
            point: pa + rot.apply(q),
            normal: rot.apply(n),
            penetration: radius + dx.min(dy),
            corner: false,
        });
    }
    let q = Vec2::new(local.x.clamp(-half.x, half.x), local.y.clamp(-half.y, half.y));
    let diff = local - q;
    let dist = diff.length();
    let pen = radius - dist;
    if pen < -CONTACT_SKIN {
        return None;
    }
    let corner = local.x.abs() > half.x && local.y.abs() > half.y;
    Some(ManifoldPoint {
        point: pa + rot.apply(q),
        normal: rot.apply(diff / dist),
        penetration: pen,
        corner,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    FaceAX,
    FaceAY,
    FaceBX,
    FaceBY,
}

fn incident_edge(h: Vec2, pos: Vec2, rot: Rot, normal: Vec2) -> [Vec2; 2] {
    // normal of the reference face expressed in the incident box frame
    let n = -rot.apply_t(normal);
    let na = n.abs();
    let c = if na.x > na.y {
        if n.x > 0.0 {
            [Vec2::new(h.x, -h.y), Vec2::new(h.x, h.y)]
        } else {
            [Vec2::new(-h.x, h.y), Vec2::new(-h.x, -h.y)]
        }
    } else if n.y > 0.0 {
        [Vec2::new(h.x, h.y), Vec2::new(-h.x, h.y)]
    } else {
        [Vec2::new(-h.x, -h.y), Vec2::new(h.x, -h.y)]
    };
    c.map(|v| pos + rot.apply(v))
}

fn clip_segment(v: [Vec2; 2], normal: Vec2, offset: f64) -> Option<[Vec2; 2]> {
    let d0 = normal.dot(v[0]) - offset;
    let d1 = normal.dot(v[1]) - offset;
    let mut out = Vec::with_capacity(2);
    if d0 <= 0.0 {
        out.push(v[0]);
    }
    if d1 <= 0.0 {
        out.push(v[1]);
    }
    if d0 * d1 < 0.0 {
        let t = d0 / (d0 - d1);
        out.push(v[0] + (v[1] - v[0]) * t);
    }
    if out.len() < 2 {
        None
    } else {
        Some([out[0], out[1]])
    }
}

fn box_box(pa: Vec2, aa: f64, ha: Vec2, pb: Vec2, ab: f64, hb: Vec2) -> Vec<ManifoldPoint> {
    let ra = Rot::new(aa);
    let rb = Rot::new(ab);
    let dp = pb - pa;
    let da = ra.apply_t(dp);
    let db = rb.apply_t(dp);

    // C = RaT * Rb
    let c11 = ra.col1().dot(rb.col1());
    let c12 = ra.col1().dot(rb.col2());
    let c21 = ra.col2().dot(rb.col1());
    let c22 = ra.col2().dot(rb.col2());
    let (a11, a12, a21, a22) = (c11.abs(), c12.abs(), c21.abs(), c22.abs());

    let face_a = Vec2::new(
        da.x.abs() - ha.x - (a11 * hb.x + a12 * hb.y),
        da.y.abs() - ha.y - (a21 * hb.x + a22 * hb.y),
    );
    if face_a.x > CONTACT_SKIN || face_a.y > CONTACT_SKIN {
        return Vec::new();
    }
    let face_b = Vec2::new(
        db.x.abs() - (a11 * ha.x + a21 * ha.y) - hb.x,
        db.y.abs() - (a12 * ha.x + a22 * ha.y) - hb.y,
    );
    if face_b.x > CONTACT_SKIN || face_b.y > CONTACT_SKIN {
        return Vec::new();
    }

    const REL_TOL: f64 = 0.95;
    const ABS_TOL: f64 = 0.01;
    let sgn = |v: f64| if v > 0.0 { 1.0 } else { -1.0 };

    let mut axis = Axis::FaceAX;
    let mut separation = face_a.x;
    let mut normal = ra.col1() * sgn(da.x);
    if face_a.y > REL_TOL * separation + ABS_TOL * ha.y {
        axis = Axis::FaceAY;
        separation = face_a.y;
        normal = ra.col2() * sgn(da.y);
    }
    if face_b.x > REL_TOL * separation + ABS_TOL * hb.x {
        axis = Axis::FaceBX;
        separation = face_b.x;
        normal = rb.col1() * sgn(db.x);
    }
    if face_b.y > REL_TOL * separation + ABS_TOL * hb.y {
        axis = Axis::FaceBY;
        normal = rb.col2() * sgn(db.y);
    }

    let (front_normal, front, side_normal, neg_side, pos_side, incident) = match axis {
        Axis::FaceAX => {
            let fnorm = normal;
            let side_n = ra.col2();
            let side = pa.dot(side_n);
            (fnorm, pa.dot(fnorm) + ha.x, side_n, -side + ha.y, side + ha.y, incident_edge(hb, pb, rb, fnorm))
        }
        Axis::FaceAY => {
            let fnorm = normal;
            let side_n = ra.col1();
            let side = pa.dot(side_n);
            (fnorm, pa.dot(fnorm) + ha.y, side_n, -side + ha.x, side + ha.x, incident_edge(hb, pb, rb, fnorm))
        }
        Axis::FaceBX => {
            let fnorm = -normal;
            let side_n = rb.col2();
            let side = pb.dot(side_n);
            (fnorm, pb.dot(fnorm) + hb.x, side_n, -side + hb.y, side + hb.y, incident_edge(ha, pa, ra, fnorm))
        }
        Axis::FaceBY => {
            let fnorm = -normal;
            let side_n = rb.col1();
            let side = pb.dot(side_n);
            (fnorm, pb.dot(fnorm) + hb.y, side_n, -side + hb.x, side + hb.x, incident_edge(ha, pa, ra, fnorm))
        }
    };

    let Some(clip1) = clip_segment(incident, -side_normal, neg_side) else {
        return Vec::new();
    };
    let Some(clip2) = clip_segment(clip1, side_normal, pos_side) else {
        return Vec::new();
    };

    clip2
        .iter()
        .filter_map(|&v| {
            let sep = front_normal.dot(v) - front;
            (sep <= CONTACT_SKIN).then(|| ManifoldPoint {
                point: v - front_normal * sep,
                normal,
                penetration: -sep,
                corner: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn bx(x: f64, y: f64, w: f64, h: f64, a: f64) -> Posed {
        Posed::new(Shape::Box { half: Vec2::new(w / 2.0, h / 2.0) }, Vec2::new(x, y), a)
    }

    fn ball(x: f64, y: f64, r: f64) -> Posed {
        Posed::new(Shape::Circle { radius: r }, Vec2::new(x, y), 0.0)
    }

    #[test]
    fn ball_on_floor() {
        let floor = bx(0.0, 10.0, 200.0, 20.0, 0.0);
        let m = collide(&floor, &ball(0.0, -14.0, 15.0));
        assert_eq!(m.len(), 1);
        assert!((m[0].normal - Vec2::new(0.0, -1.0)).length() < 1e-12);
        assert!((m[0].penetration - 1.0).abs() < 1e-12);
        assert!(collide(&floor, &ball(0.0, -16.0, 15.0)).is_empty());
        // reversed order flips the normal
        let m = collide(&ball(0.0, -14.0, 15.0), &floor);
        assert!((m[0].normal - Vec2::new(0.0, 1.0)).length() < 1e-12);
    }

    #[test]
    fn ball_on_corner_is_flagged() {
        let floor = bx(0.0, 10.0, 200.0, 20.0, 0.0);
        let m = collide(&floor, &ball(110.0, -10.0, 15.0));
        assert_eq!(m.len(), 1);
        assert!(m[0].corner);
    }

    #[test]
    fn box_resting_on_floor_gives_two_points() {
        let floor = bx(0.0, 10.0, 400.0, 20.0, 0.0);
        let plank = bx(0.0, -9.5, 100.0, 20.0, 0.0);
        let m = collide(&floor, &plank);
        assert_eq!(m.len(), 2);
        for p in &m {
            assert!((p.normal - Vec2::new(0.0, -1.0)).length() < 1e-9);
            assert!((p.penetration - 0.5).abs() < 1e-9);
        }
        let mut xs: Vec<f64> = m.iter().map(|p| p.point.x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 50.0).abs() < 1e-9 && (xs[1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn diamond_corner_on_floor() {
        let floor = bx(0.0, 10.0, 400.0, 20.0, 0.0);
        let s = 10.0 / 2f64.sqrt();
        let d = bx(0.0, -s + 1.0, 10.0, 10.0, FRAC_PI_4);
        let m = collide(&floor, &d);
        assert_eq!(m.len(), 1, "{m:?}");
        assert!((m[0].penetration - 1.0).abs() < 1e-9);
        assert!(m[0].point.x.abs() < 1e-9);
    }

    #[test]
    fn separated_boxes() {
        assert!(collide(&bx(0.0, 0.0, 10.0, 10.0, 0.0), &bx(11.5, 0.0, 10.0, 10.0, 0.3)).is_empty());
    }
}
