//! Planar geometry: vectors, oriented boxes, circles and overlap queries.
//!
//! World frame is screen-like: x grows rightward, y grows downward, so
//! gravity points along +y. Rotations use the standard matrix
//! `[c -s; s c]`, i.e. a positive angle turns +x toward +y.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// `w × self` for a scalar angular rate `w`.
    pub fn cross_scalar(w: f64, r: Vec2) -> Vec2 {
        Vec2::new(-w * r.y, w * r.x)
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).length()
    }

    pub fn normalized(self) -> Vec2 {
        let l = self.length();
        if l > 0.0 {
            self / l
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-rotated perpendicular `(y, -x)`; the outward normal of an
    /// edge direction on a positively wound polygon.
    pub fn right_perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn abs(self) -> Vec2 {
        Vec2::new(self.x.abs(), self.y.abs())
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// 2x2 rotation, stored as its two columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot {
    pub c: f64,
    pub s: f64,
}

impl Rot {
    pub fn new(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot { c, s }
    }

    pub fn col1(self) -> Vec2 {
        Vec2::new(self.c, self.s)
    }

    pub fn col2(self) -> Vec2 {
        Vec2::new(-self.s, self.c)
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.x - self.s * v.y, self.s * v.x + self.c * v.y)
    }

    pub fn apply_t(self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.x + self.s * v.y, -self.s * v.x + self.c * v.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    /// Smallest rectangle containing every point; `None` for an empty set.
    pub fn bounding<I: IntoIterator<Item = Vec2>>(points: I) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first, first);
        for p in it {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn expanded(&self, margin: f64) -> Rect {
        Rect::new(
            self.min - Vec2::new(margin, margin),
            self.max + Vec2::new(margin, margin),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.max.x > self.min.x && self.max.y > self.min.y
    }
}

/// Collision shape in body-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { half: Vec2 },
    Circle { radius: f64 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Box { half } => 4.0 * half.x * half.y,
            Shape::Circle { radius } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Moment of inertia about the centroid for unit density.
    pub fn unit_inertia(&self) -> f64 {
        match *self {
            Shape::Box { half } => {
                let (w, h) = (2.0 * half.x, 2.0 * half.y);
                self.area() * (w * w + h * h) / 12.0
            }
            Shape::Circle { radius } => 0.5 * self.area() * radius * radius,
        }
    }

    pub fn min_feature(&self) -> f64 {
        match *self {
            Shape::Box { half } => 2.0 * half.x.min(half.y),
            Shape::Circle { radius } => 2.0 * radius,
        }
    }
}

/// Shape placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posed {
    pub shape: Shape,
    pub pos: Vec2,
    pub angle: f64,
}

impl Posed {
    pub fn new(shape: Shape, pos: Vec2, angle: f64) -> Self {
        Posed { shape, pos, angle }
    }

    /// Corners of a box, positively wound, starting at local (-hx, -hy).
    /// Circles yield `None`.
    pub fn vertices(&self) -> Option<[Vec2; 4]> {
        match self.shape {
            Shape::Box { half } => {
                let r = Rot::new(self.angle);
                let local = [
                    Vec2::new(-half.x, -half.y),
                    Vec2::new(half.x, -half.y),
                    Vec2::new(half.x, half.y),
                    Vec2::new(-half.x, half.y),
                ];
                Some(local.map(|v| self.pos + r.apply(v)))
            }
            Shape::Circle { .. } => None,
        }
    }

    pub fn aabb(&self) -> Rect {
        match self.shape {
            Shape::Box { .. } => Rect::bounding(self.vertices().unwrap()).unwrap(),
            Shape::Circle { radius } => Rect::new(
                self.pos - Vec2::new(radius, radius),
                self.pos + Vec2::new(radius, radius),
            ),
        }
    }

    /// Closest point on the shape boundary to `p` and the signed distance
    /// (negative when `p` is inside).
    pub fn closest_point(&self, p: Vec2) -> (Vec2, f64) {
        match self.shape {
            Shape::Circle { radius } => {
                let d = p - self.pos;
                let len = d.length();
                let dir = if len > 0.0 { d / len } else { Vec2::new(0.0, -1.0) };
                (self.pos + dir * radius, len - radius)
            }
            Shape::Box { half } => {
                let rot = Rot::new(self.angle);
                let local = rot.apply_t(p - self.pos);
                let inside = local.x.abs() <= half.x && local.y.abs() <= half.y;
                if inside {
                    let dx = half.x - local.x.abs();
                    let dy = half.y - local.y.abs();
                    let q = if dx < dy {
                        Vec2::new(half.x.copysign(local.x), local.y)
                    } else {
                        Vec2::new(local.x, half.y.copysign(local.y))
                    };
                    (self.pos + rot.apply(q), -dx.min(dy))
                } else {
                    let q = Vec2::new(
                        local.x.clamp(-half.x, half.x),
                        local.y.clamp(-half.y, half.y),
                    );
                    (self.pos + rot.apply(q), (local - q).length())
                }
            }
        }
    }

    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.closest_point(p).1
    }

    pub fn area(&self) -> f64 {
        self.shape.area()
    }
}

fn project(vertices: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vertices {
        let d = v.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Penetration depth between two placed shapes. Positive means the
/// interiors overlap by that much; zero or negative means touching or apart.
pub fn penetration(a: &Posed, b: &Posed) -> f64 {
    match (a.shape, b.shape) {
        (Shape::Circle { radius: ra }, Shape::Circle { radius: rb }) => {
            ra + rb - a.pos.distance(b.pos)
        }
        (Shape::Box { .. }, Shape::Circle { radius }) => radius - a.signed_distance(b.pos),
        (Shape::Circle { radius }, Shape::Box { .. }) => radius - b.signed_distance(a.pos),
        (Shape::Box { .. }, Shape::Box { .. }) => {
            let va = a.vertices().unwrap();
            let vb = b.vertices().unwrap();
            let mut depth = f64::INFINITY;
            for poly in [&va, &vb] {
                for i in 0..2 {
                    let axis = (poly[i + 1] - poly[i]).normalized();
                    let (a0, a1) = project(&va, axis);
                    let (b0, b1) = project(&vb, axis);
                    let overlap = a1.min(b1) - a0.max(b0);
                    depth = depth.min(overlap);
                }
            }
            depth
        }
    }
}

/// Distance from `p` to the segment `a`-`b` and the closest point on it.
pub fn point_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.length_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a + ab * t;
    (q, p.distance(q))
}

/// Nearest point on a polyline to `p`: (point, distance, segment index).
pub fn nearest_on_polyline(p: Vec2, poly: &[Vec2]) -> (Vec2, f64, usize) {
    match poly.len() {
        0 => (p, f64::INFINITY, 0),
        1 => (poly[0], p.distance(poly[0]), 0),
        _ => {
            let mut best = (poly[0], f64::INFINITY, 0);
            for (i, w) in poly.windows(2).enumerate() {
                let (q, d) = point_segment(p, w[0], w[1]);
                if d < best.1 {
                    best = (q, d, i);
                }
            }
            best
        }
    }
}

/// Resample a polyline at (at most) `spacing` arc-length intervals. Every
/// original vertex is kept.
pub fn resample_polyline(poly: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    if let Some(&first) = poly.first() {
        out.push(first);
    }
    for w in poly.windows(2) {
        let len = w[0].distance(w[1]);
        let n = (len / spacing).ceil().max(1.0) as usize;
        for i in 1..=n {
            out.push(w[0].lerp(w[1], i as f64 / n as f64));
        }
    }
    out
}

/// Signed area of a simple polygon (positive for the crate's winding).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        a += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * a
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(x: f64, y: f64, w: f64, h: f64, a: f64) -> Posed {
        Posed::new(Shape::Box { half: Vec2::new(w / 2.0, h / 2.0) }, Vec2::new(x, y), a)
    }

    #[test]
    fn vertices_are_positively_wound() {
        let b = boxed(0.0, 0.0, 4.0, 2.0, 0.3);
        let v = b.vertices().unwrap();
        assert!((polygon_area(&v) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn box_box_touching_has_zero_depth() {
        let a = boxed(0.0, 0.0, 10.0, 10.0, 0.0);
        let b = boxed(10.0, 0.0, 10.0, 10.0, 0.0);
        assert!(penetration(&a, &b).abs() < 1e-12);
        let c = boxed(9.0, 3.0, 10.0, 10.0, 0.0);
        assert!((penetration(&a, &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_box_penetration() {
        let floor = boxed(0.0, 10.0, 100.0, 20.0, 0.0);
        // diamond with its lower corner 1 px into the floor top (y = 0)
        let s = 10.0 / 2f64.sqrt();
        let d = boxed(0.0, -s + 1.0, 10.0, 10.0, std::f64::consts::FRAC_PI_4);
        assert!((penetration(&floor, &d) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circle_box_signed_distance() {
        let b = boxed(0.0, 0.0, 20.0, 20.0, 0.0);
        assert!((b.signed_distance(Vec2::new(0.0, -25.0)) - 15.0).abs() < 1e-12);
        assert!((b.signed_distance(Vec2::new(0.0, -8.0)) + 2.0).abs() < 1e-12);
        let c = Posed::new(Shape::Circle { radius: 15.0 }, Vec2::new(0.0, -25.0), 0.0);
        assert!(penetration(&b, &c).abs() < 1e-12);
    }

    #[test]
    fn polyline_resample_keeps_vertices() {
        let p = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 5.0)];
        let r = resample_polyline(&p, 2.0);
        assert_eq!(r.first(), Some(&p[0]));
        assert!(r.contains(&p[1]));
        assert_eq!(r.last(), Some(&p[2]));
        assert!(r.windows(2).all(|w| w[0].distance(w[1]) <= 2.0 + 1e-12));
    }
}
