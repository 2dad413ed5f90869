//! Level description, the JSON level/placement file formats, and the
//! static feasibility tests (target membership, placement overlap).

use crate::geometry::{penetration, Posed, Rect, Shape, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Default radius of the target disc around the flag.
pub const DEFAULT_TARGET_EPS: f64 = 15.0;
/// Default ball radius.
pub const DEFAULT_BALL_RADIUS: f64 = 15.0;
/// Overlap depth below which two shapes count as touching, not overlapping.
pub const OVERLAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Rectangle,
    Square,
    /// A disc; `w` is its diameter.
    #[serde(alias = "circle-segment")]
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    #[default]
    Wood,
    Metal,
}

impl Material {
    /// Ball restitution against this material.
    pub fn restitution(self) -> f64 {
        match self {
            Material::Wood => 0.4,
            Material::Metal => 0.6,
        }
    }
}

fn shape_of(kind: ShapeKind, width: f64, height: f64) -> Shape {
    match kind {
        ShapeKind::Circle => Shape::Circle { radius: width / 2.0 },
        ShapeKind::Rectangle | ShapeKind::Square => Shape::Box {
            half: Vec2::new(width / 2.0, height / 2.0),
        },
    }
}

/// Ball position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BallState {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl BallState {
    pub fn new(pos: Vec2, vel: Vec2) -> Self {
        BallState { pos, vel }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite()
    }
}

/// Pose, twist and extent of a movable block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockState {
    pub pos: Vec2,
    pub angle: f64,
    pub vel: Vec2,
    pub angvel: f64,
    pub width: f64,
    pub height: f64,
}

/// A fixed piece of the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvBlock {
    pub shape: ShapeKind,
    pub pos: Vec2,
    pub angle: f64,
    pub width: f64,
    pub height: f64,
    pub material: Material,
}

impl EnvBlock {
    pub fn posed(&self) -> Posed {
        Posed::new(shape_of(self.shape, self.width, self.height), self.pos, self.angle)
    }
}

/// One entry of the movable-block inventory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTemplate {
    pub id: u32,
    pub shape: ShapeKind,
    pub width: f64,
    pub height: f64,
    pub material: Material,
}

impl BlockTemplate {
    pub fn shape(&self) -> Shape {
        shape_of(self.shape, self.width, self.height)
    }

    pub fn posed(&self, pos: Vec2, angle: f64) -> Posed {
        Posed::new(self.shape(), pos, angle)
    }

    pub fn area(&self) -> f64 {
        self.shape().area()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub name: String,
    pub bounds: Rect,
    pub env: Vec<EnvBlock>,
    pub inventory: Vec<BlockTemplate>,
    pub ball_start: BallState,
    pub ball_radius: f64,
    pub target: Vec2,
    pub target_eps: f64,
    pub horizon: usize,
}

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("level parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid level: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown block template id {0}")]
    UnknownTemplate(u32),
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: Vec2,
    max: Vec2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallFile {
    start: [f64; 4],
    #[serde(default = "default_radius")]
    radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    pos: Vec2,
    #[serde(default = "default_eps")]
    eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    shape: ShapeKind,
    pos: Vec2,
    #[serde(default)]
    angle: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    material: Material,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InventoryFile {
    id: u32,
    shape: ShapeKind,
    w: f64,
    h: f64,
    #[serde(default)]
    material: Material,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    #[serde(default)]
    name: String,
    bounds: BoundsFile,
    ball: BallFile,
    target: TargetFile,
    horizon: usize,
    env: Vec<EnvFile>,
    inventory: Vec<InventoryFile>,
}

fn default_radius() -> f64 {
    DEFAULT_BALL_RADIUS
}

fn default_eps() -> f64 {
    DEFAULT_TARGET_EPS
}

fn parse_error(e: serde_json::Error) -> LevelError {
    LevelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parse and validate a level file.
pub fn load_level(text: &str) -> Result<Level, LevelError> {
    let file: LevelFile = serde_json::from_str(text).map_err(parse_error)?;
    let level = Level {
        name: file.name,
        bounds: Rect::new(file.bounds.min, file.bounds.max),
        env: file
            .env
            .iter()
            .map(|e| EnvBlock {
                shape: e.shape,
                pos: e.pos,
                angle: e.angle,
                width: e.w,
                height: e.h,
                material: e.material,
            })
            .collect(),
        inventory: file
            .inventory
            .iter()
            .map(|b| BlockTemplate {
                id: b.id,
                shape: b.shape,
                width: b.w,
                height: b.h,
                material: b.material,
            })
            .collect(),
        ball_start: BallState::new(
            Vec2::new(file.ball.start[0], file.ball.start[1]),
            Vec2::new(file.ball.start[2], file.ball.start[3]),
        ),
        ball_radius: file.ball.radius,
        target: file.target.pos,
        target_eps: file.target.eps,
        horizon: file.horizon,
    };
    level.validate()?;
    Ok(level)
}

/// Serialize a level to its JSON file form.
pub fn save_level(level: &Level) -> String {
    let file = LevelFile {
        name: level.name.clone(),
        bounds: BoundsFile {
            min: level.bounds.min,
            max: level.bounds.max,
        },
        ball: BallFile {
            start: [
                level.ball_start.pos.x,
                level.ball_start.pos.y,
                level.ball_start.vel.x,
                level.ball_start.vel.y,
            ],
            radius: level.ball_radius,
        },
        target: TargetFile {
            pos: level.target,
            eps: level.target_eps,
        },
        horizon: level.horizon,
        env: level
            .env
            .iter()
            .map(|e| EnvFile {
                shape: e.shape,
                pos: e.pos,
                angle: e.angle,
                w: e.width,
                h: e.height,
                material: e.material,
            })
            .collect(),
        inventory: level
            .inventory
            .iter()
            .map(|b| InventoryFile {
                id: b.id,
                shape: b.shape,
                w: b.width,
                h: b.height,
                material: b.material,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("level serializes")
}

fn check_dims(label: &str, kind: ShapeKind, w: f64, h: f64, errs: &mut Vec<String>) {
    if !(w.is_finite() && w > 0.0) {
        errs.push(format!("{label}: width must be positive, got {w}"));
    }
    if !(h.is_finite() && h > 0.0) {
        errs.push(format!("{label}: height must be positive, got {h}"));
    }
    if kind == ShapeKind::Square && w != h {
        errs.push(format!("{label}: square with width {w} != height {h}"));
    }
}

impl Level {
    /// Collect every invariant violation; `Ok` when there are none.
    pub fn validate(&self) -> Result<(), LevelError> {
        let mut errs = Vec::new();
        if !self.bounds.is_valid() {
            errs.push("bounds: max must exceed min".to_string());
        }
        if !(self.ball_radius.is_finite() && self.ball_radius > 0.0) {
            errs.push(format!("ball radius must be positive, got {}", self.ball_radius));
        }
        if !(self.target_eps.is_finite() && self.target_eps > 0.0) {
            errs.push(format!("target eps must be positive, got {}", self.target_eps));
        }
        if self.horizon == 0 {
            errs.push("horizon must be positive".to_string());
        }
        if !self.ball_start.is_finite() {
            errs.push("ball start must be finite".to_string());
        } else if !self.bounds.contains(self.ball_start.pos) {
            errs.push("ball start lies outside bounds".to_string());
        }
        if !self.target.is_finite() || !self.bounds.contains(self.target) {
            errs.push("target lies outside bounds".to_string());
        }
        for (q, e) in self.env.iter().enumerate() {
            let label = format!("env block {q}");
            check_dims(&label, e.shape, e.width, e.height, &mut errs);
            if !(e.pos.is_finite() && e.angle.is_finite()) {
                errs.push(format!("{label}: non-finite pose"));
            }
        }
        let mut ids = BTreeSet::new();
        for b in &self.inventory {
            let label = format!("inventory block {}", b.id);
            check_dims(&label, b.shape, b.width, b.height, &mut errs);
            if !ids.insert(b.id) {
                errs.push(format!("{label}: duplicate id"));
            }
        }
        if errs.is_empty() {
            let ball = self.ball_posed(self.ball_start.pos);
            for (q, e) in self.env.iter().enumerate() {
                if penetration(&e.posed(), &ball) > 1e-6 {
                    errs.push(format!("ball start penetrates env block {q}"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LevelError::Invalid(errs))
        }
    }

    pub fn template(&self, id: u32) -> Option<&BlockTemplate> {
        self.inventory.iter().find(|t| t.id == id)
    }

    pub fn ball_posed(&self, pos: Vec2) -> Posed {
        Posed::new(Shape::Circle { radius: self.ball_radius }, pos, 0.0)
    }

    /// Smallest feature of any body; bounds the per-step travel distance.
    pub fn min_feature(&self) -> f64 {
        let mut m = 2.0 * self.ball_radius;
        for e in &self.env {
            m = m.min(e.posed().shape.min_feature());
        }
        for b in &self.inventory {
            m = m.min(b.shape().min_feature());
        }
        m
    }

    pub fn in_target_set(&self, s: &BallState) -> bool {
        in_target_set(s, self)
    }
}

/// Membership in the goal disc around the flag; velocity plays no part.
pub fn in_target_set(s: &BallState, level: &Level) -> bool {
    s.pos.distance(level.target) <= level.target_eps
}

// ---------------------------------------------------------------------------
// Placements

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub id: u32,
    pub pos: Vec2,
    #[serde(default)]
    pub angle: f64,
}

/// Initial poses for the subset of inventory blocks that are put into the
/// world; everything else stays in the tray.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Placement {
    #[serde(rename = "placements")]
    pub entries: Vec<PlacementEntry>,
}

impl Placement {
    pub fn empty() -> Self {
        Placement::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn push(&mut self, id: u32, pos: Vec2, angle: f64) {
        self.entries.push(PlacementEntry { id, pos, angle });
    }

    pub fn union(&self, other: &Placement) -> Placement {
        let mut out = self.clone();
        out.entries.extend(other.entries.iter().copied());
        out
    }

    pub fn from_json(text: &str) -> Result<Placement, LevelError> {
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("placement serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyName {
    Env(usize),
    Block(u32),
    BallStart,
}

impl fmt::Display for BodyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyName::Env(q) => write!(f, "env block {q}"),
            BodyName::Block(id) => write!(f, "block {id}"),
            BodyName::BallStart => write!(f, "ball start"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    Overlap(BodyName, BodyName),
    OutOfBounds(u32),
    DuplicateId(u32),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap(a, b) => write!(f, "{a} overlaps {b}"),
            Violation::OutOfBounds(id) => write!(f, "block {id} leaves the world bounds"),
            Violation::DuplicateId(id) => write!(f, "block {id} placed more than once"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn within_bounds(p: &Posed, bounds: &Rect) -> bool {
    bounds.contains_rect(&p.aabb())
}

/// Check a placement against the environment, itself, the ball start and
/// the world bounds. Touching is allowed; only interior overlap counts.
/// Violations are reported in a canonical order, so the result does not
/// depend on the order of the entries.
pub fn placement_feasible(p: &Placement, level: &Level) -> Result<Feasibility, LevelError> {
    let mut posed = Vec::with_capacity(p.entries.len());
    for e in &p.entries {
        let t = level.template(e.id).ok_or(LevelError::UnknownTemplate(e.id))?;
        posed.push((e.id, t.posed(e.pos, e.angle)));
    }
    posed.sort_by_key(|(id, _)| *id);
    let mut violations = Vec::new();
    let ball = level.ball_posed(level.ball_start.pos);
    for (i, (id, body)) in posed.iter().enumerate() {
        if i > 0 && posed[i - 1].0 == *id {
            violations.push(Violation::DuplicateId(*id));
        }
        if !within_bounds(body, &level.bounds) {
            violations.push(Violation::OutOfBounds(*id));
        }
        for (q, env) in level.env.iter().enumerate() {
            if penetration(body, &env.posed()) > OVERLAP_TOL {
                violations.push(Violation::Overlap(BodyName::Block(*id), BodyName::Env(q)));
            }
        }
        if penetration(body, &ball) > OVERLAP_TOL {
            violations.push(Violation::Overlap(BodyName::Block(*id), BodyName::BallStart));
        }
        for (jd, other) in posed.iter().skip(i + 1) {
            if jd != id && penetration(body, other) > OVERLAP_TOL {
                violations.push(Violation::Overlap(BodyName::Block(*id), BodyName::Block(*jd)));
            }
        }
    }
    violations.sort();
    violations.dedup();
    Ok(Feasibility { violations })
}
