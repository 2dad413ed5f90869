//! Fixed-step rigid-body simulator used as the ground truth for every trial.
//!
//! One step is: gravity into velocities, sequential impulses over the
//! contacts found at the start-of-step poses, then positions, then a single
//! Baumgarte pass against re-detected contacts. The ball never spins; it
//! loses speed to a constant rolling resistance instead.

pub mod collide;
pub mod events;

use crate::geometry::{Posed, Shape, Vec2};
use crate::kinematics::BOUNCE_THRESHOLD;
use crate::level::{placement_feasible, BallState, BlockState, Level, LevelError, Placement, Violation};
use collide::{collide, ManifoldPoint, CONTACT_SKIN};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use events::{detect_events, Event};

pub const DT: f64 = 1.0 / 60.0;
pub const GRAVITY: f64 = 980.0;
/// Mass per unit area for every body, ball included.
pub const DENSITY: f64 = 1.0;
pub const FRICTION: f64 = 0.3;
/// Deceleration of a ball rolling on a surface (px/s^2).
pub const ROLL_DECEL: f64 = 20.0;
pub const SOLVER_ITERATIONS: usize = 4;
pub const BAUMGARTE: f64 = 0.2;
pub const SLOP: f64 = 0.5;
/// Fraction of the smallest feature a body may travel in one step.
pub const SPEED_CAP_FACTOR: f64 = 0.9;

/// Warm-start impulses are reused when a contact point moves less than this.
const WARM_MATCH_DIST: f64 = 2.0;
/// Share of its tangential speed a ball can lose to friction in one impact.
/// The ball carries no spin, so this stands in for the 2/7 a solid sphere
/// gives up when it goes from sliding to rolling.
pub const IMPACT_TANGENT_LOSS: f64 = 2.0 / 7.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: f64,
    pub friction: f64,
    pub roll_decel: f64,
    pub iterations: usize,
    pub baumgarte: f64,
    pub slop: f64,
    /// Replaces the per-material ball restitution when set.
    pub restitution: Option<f64>,
    /// When false the ball is frozen and ignored; only blocks move.
    pub ball: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: DT,
            gravity: GRAVITY,
            friction: FRICTION,
            roll_decel: ROLL_DECEL,
            iterations: SOLVER_ITERATIONS,
            baumgarte: BAUMGARTE,
            slop: SLOP,
            restitution: None,
            ball: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyRef {
    Ball,
    Block(u32),
    Env(usize),
}

impl fmt::Display for BodyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyRef::Ball => write!(f, "ball"),
            BodyRef::Block(id) => write!(f, "block:{id}"),
            BodyRef::Env(q) => write!(f, "env:{q}"),
        }
    }
}

/// A contact resolved during one step. The normal points from `a` to `b`;
/// for ball contacts `b` is always the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub a: BodyRef,
    pub b: BodyRef,
    pub point: Vec2,
    pub normal: Vec2,
    pub penetration: f64,
    /// Corner of a box or a curved surface rather than a flat face.
    pub corner: bool,
}

impl Contact {
    pub fn involves_ball(&self) -> bool {
        self.b == BodyRef::Ball
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct WarmImpulse {
    a: BodyRef,
    b: BodyRef,
    point: Vec2,
    pn: f64,
    pt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ball: BallState,
    /// Ids of the placed blocks, ascending; parallel to `blocks`.
    pub block_ids: Vec<u32>,
    pub blocks: Vec<BlockState>,
    pub step: usize,
    warm: Vec<WarmImpulse>,
}

impl WorldState {
    /// World at k = 0. Blocks start at rest in the placed poses.
    pub fn initial(level: &Level, p: &Placement) -> Result<WorldState, LevelError> {
        let mut entries = p.entries.clone();
        entries.sort_by_key(|e| e.id);
        let mut block_ids = Vec::with_capacity(entries.len());
        let mut blocks = Vec::with_capacity(entries.len());
        for e in &entries {
            let t = level.template(e.id).ok_or(LevelError::UnknownTemplate(e.id))?;
            block_ids.push(e.id);
            blocks.push(BlockState {
                pos: e.pos,
                angle: e.angle,
                vel: Vec2::ZERO,
                angvel: 0.0,
                width: t.width,
                height: t.height,
            });
        }
        Ok(WorldState {
            ball: level.ball_start,
            block_ids,
            blocks,
            step: 0,
            warm: Vec::new(),
        })
    }

    pub fn block(&self, id: u32) -> Option<&BlockState> {
        self.block_ids.iter().position(|&b| b == id).map(|i| &self.blocks[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    ReachedTarget { step: usize },
    Timeout,
    /// The ball dropped below the world and cannot come back.
    Lost { step: usize },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::ReachedTarget { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Ball state at every step, index = k.
    pub trajectory: Vec<BallState>,
    pub block_ids: Vec<u32>,
    /// Block states at every step, parallel to `block_ids`.
    pub block_history: Vec<Vec<BlockState>>,
    /// `contacts[k]` holds the contacts resolved while stepping from k-1 to
    /// k; `contacts[0]` is empty.
    pub contacts: Vec<Vec<Contact>>,
    pub outcome: Outcome,
}

impl TrialRecord {
    pub fn last_step(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.trajectory.iter().map(|s| s.pos).collect()
    }

    /// Ball contacts of step k.
    pub fn ball_contacts(&self, k: usize) -> impl Iterator<Item = &Contact> {
        self.contacts[k].iter().filter(|c| c.involves_ball())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("placement is infeasible: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<Violation>),
    #[error(transparent)]
    Level(#[from] LevelError),
}

/// Specific mechanical energy of the ball with y measured downward.
pub fn ball_energy(s: &BallState, gravity: f64) -> f64 {
    0.5 * s.vel.length_squared() - gravity * s.pos.y
}

pub fn speed_cap(level: &Level, dt: f64) -> f64 {
    SPEED_CAP_FACTOR * level.min_feature() / dt
}

// ---------------------------------------------------------------------------
// Stepping

#[derive(Debug, Clone, Copy)]
struct Body {
    id: BodyRef,
    shape: Shape,
    pos: Vec2,
    angle: f64,
    vel: Vec2,
    angvel: f64,
    inv_mass: f64,
    inv_inertia: f64,
    restitution: f64,
}

impl Body {
    fn posed(&self) -> Posed {
        Posed::new(self.shape, self.pos, self.angle)
    }

    fn point_vel(&self, r: Vec2) -> Vec2 {
        self.vel + Vec2::cross_scalar(self.angvel, r)
    }

    fn apply(&mut self, impulse: Vec2, r: Vec2) {
        self.vel += impulse * self.inv_mass;
        self.angvel += self.inv_inertia * r.cross(impulse);
    }
}

fn build_bodies(w: &WorldState, level: &Level) -> Vec<Body> {
    let mut bodies = Vec::with_capacity(1 + w.blocks.len() + level.env.len());
    let ball_shape = Shape::Circle { radius: level.ball_radius };
    bodies.push(Body {
        id: BodyRef::Ball,
        shape: ball_shape,
        pos: w.ball.pos,
        angle: 0.0,
        vel: w.ball.vel,
        angvel: 0.0,
        inv_mass: 1.0 / (ball_shape.area() * DENSITY),
        inv_inertia: 0.0,
        restitution: 0.0,
    });
    for (id, b) in w.block_ids.iter().zip(&w.blocks) {
        let t = level.template(*id).expect("world blocks come from the inventory");
        let shape = t.shape();
        bodies.push(Body {
            id: BodyRef::Block(*id),
            shape,
            pos: b.pos,
            angle: b.angle,
            vel: b.vel,
            angvel: b.angvel,
            inv_mass: 1.0 / (shape.area() * DENSITY),
            inv_inertia: 1.0 / (shape.unit_inertia() * DENSITY),
            restitution: t.material.restitution(),
        });
    }
    for (q, e) in level.env.iter().enumerate() {
        let p = e.posed();
        bodies.push(Body {
            id: BodyRef::Env(q),
            shape: p.shape,
            pos: p.pos,
            angle: p.angle,
            vel: Vec2::ZERO,
            angvel: 0.0,
            inv_mass: 0.0,
            inv_inertia: 0.0,
            restitution: e.material.restitution(),
        });
    }
    bodies
}

/// Candidate pairs (a, b) in a fixed order. Ball pairs put the ball second.
fn pairs(n_blocks: usize, n_env: usize) -> Vec<(usize, usize)> {
    let env0 = 1 + n_blocks;
    let mut out = Vec::new();
    for q in 0..n_env {
        out.push((env0 + q, 0));
    }
    for i in 1..=n_blocks {
        out.push((i, 0));
    }
    for i in 1..=n_blocks {
        for q in 0..n_env {
            out.push((env0 + q, i));
        }
        for j in (i + 1)..=n_blocks {
            out.push((i, j));
        }
    }
    out
}

fn find_contacts(bodies: &[Body], pairs: &[(usize, usize)]) -> Vec<(usize, usize, ManifoldPoint)> {
    let mut out = Vec::new();
    for &(ia, ib) in pairs {
        let (pa, pb) = (bodies[ia].posed(), bodies[ib].posed());
        let (ra, rb) = (pa.aabb().expanded(CONTACT_SKIN), pb.aabb());
        if ra.max.x < rb.min.x || rb.max.x < ra.min.x || ra.max.y < rb.min.y || rb.max.y < ra.min.y {
            continue;
        }
        for m in collide(&pa, &pb) {
            out.push((ia, ib, m));
        }
    }
    out
}

struct SolverContact {
    ia: usize,
    ib: usize,
    m: ManifoldPoint,
    ra: Vec2,
    rb: Vec2,
    tangent: Vec2,
    mass_n: f64,
    mass_t: f64,
    target_vn: f64,
    mu: f64,
    /// Cap on the accumulated friction impulse, on top of the Coulomb one.
    max_pt: f64,
    pn: f64,
    pt: f64,
}

fn eff_mass(a: &Body, b: &Body, ra: Vec2, rb: Vec2, dir: Vec2) -> f64 {
    let rna = ra.cross(dir);
    let rnb = rb.cross(dir);
    let k = a.inv_mass + b.inv_mass + a.inv_inertia * rna * rna + b.inv_inertia * rnb * rnb;
    if k > 0.0 {
        1.0 / k
    } else {
        0.0
    }
}

fn rel_vel(bodies: &[Body], c: &SolverContact) -> Vec2 {
    bodies[c.ib].point_vel(c.rb) - bodies[c.ia].point_vel(c.ra)
}

fn apply_impulse(bodies: &mut [Body], c: &SolverContact, p: Vec2) {
    bodies[c.ia].apply(-p, c.ra);
    bodies[c.ib].apply(p, c.rb);
}

/// Advance one step with the default constants.
pub fn step(w: &WorldState, level: &Level) -> WorldState {
    step_with(w, level, &SimConfig::default()).0
}

/// Advance one step; also returns the contacts that were resolved.
pub fn step_with(w: &WorldState, level: &Level, cfg: &SimConfig) -> (WorldState, Vec<Contact>) {
    let mut bodies = build_bodies(w, level);
    let mut pairs = pairs(w.blocks.len(), level.env.len());
    if !cfg.ball {
        bodies[0].inv_mass = 0.0;
        pairs.retain(|&(_, b)| b != 0);
    }
    let pre: Vec<(Vec2, f64)> = bodies.iter().map(|b| (b.vel, b.angvel)).collect();

    for b in bodies.iter_mut().filter(|b| b.inv_mass > 0.0) {
        b.vel.y += cfg.gravity * cfg.dt;
    }

    let found = find_contacts(&bodies, &pairs);
    let mut contacts: Vec<SolverContact> = found
        .into_iter()
        .map(|(ia, ib, m)| {
            let (a, b) = (&bodies[ia], &bodies[ib]);
            let ra = m.point - a.pos;
            let rb = m.point - b.pos;
            let tangent = m.normal.right_perp();
            let ball = b.id == BodyRef::Ball;
            let mut target_vn = 0.0;
            let mut mu = cfg.friction;
            let mut max_pt = f64::INFINITY;
            if ball {
                let (va0, wa0) = pre[ia];
                let (vb0, _) = pre[ib];
                let vn0 = (vb0 - (va0 + Vec2::cross_scalar(wa0, ra))).dot(m.normal);
                let e = cfg.restitution.unwrap_or(a.restitution);
                if -vn0 >= BOUNCE_THRESHOLD {
                    target_vn = -e * vn0;
                    let vt0 = (vb0 - (va0 + Vec2::cross_scalar(wa0, ra))).dot(tangent);
                    max_pt = IMPACT_TANGENT_LOSS * vt0.abs() * eff_mass(a, b, ra, rb, tangent);
                } else {
                    // resting or rolling: rolling resistance replaces friction
                    mu = 0.0;
                }
            }
            let (mut pn, mut pt) = (0.0, 0.0);
            if !ball {
                if let Some(h) = w.warm.iter().find(|h| {
                    h.a == a.id && h.b == b.id && h.point.distance(m.point) < WARM_MATCH_DIST
                }) {
                    pn = h.pn;
                    pt = h.pt;
                }
            }
            SolverContact {
                ia,
                ib,
                m,
                ra,
                rb,
                tangent,
                mass_n: eff_mass(a, b, ra, rb, m.normal),
                mass_t: eff_mass(a, b, ra, rb, tangent),
                target_vn,
                mu,
                max_pt,
                pn,
                pt,
            }
        })
        .collect();

    for c in &contacts {
        let p = c.m.normal * c.pn + c.tangent * c.pt;
        apply_impulse(&mut bodies, c, p);
    }

    for _ in 0..cfg.iterations {
        for c in contacts.iter_mut() {
            let vn = rel_vel(&bodies, c).dot(c.m.normal);
            let d = c.mass_n * (c.target_vn - vn);
            let pn = (c.pn + d).max(0.0);
            let d = pn - c.pn;
            c.pn = pn;
            apply_impulse(&mut bodies, c, c.m.normal * d);

            let vt = rel_vel(&bodies, c).dot(c.tangent);
            let max_pt = (c.mu * c.pn).min(c.max_pt);
            let pt = (c.pt - c.mass_t * vt).clamp(-max_pt, max_pt);
            let d = pt - c.pt;
            c.pt = pt;
            apply_impulse(&mut bodies, c, c.tangent * d);
        }
    }

    // rolling resistance on the strongest resting ball contact
    if let Some(c) = contacts
        .iter()
        .filter(|c| c.ib == 0 && c.target_vn == 0.0 && c.pn > 0.0)
        .max_by(|x, y| x.pn.total_cmp(&y.pn))
    {
        let vt = rel_vel(&bodies, c).dot(c.tangent);
        let dv = vt.abs().min(cfg.roll_decel * cfg.dt);
        bodies[0].vel -= c.tangent * dv.copysign(vt);
    }

    let cap = speed_cap(level, cfg.dt);
    for b in bodies.iter_mut().filter(|b| b.inv_mass > 0.0) {
        let s = b.vel.length();
        if s > cap {
            b.vel = b.vel * (cap / s);
        }
        b.pos += b.vel * cfg.dt;
        b.angle += b.angvel * cfg.dt;
    }

    for (ia, ib, m) in find_contacts(&bodies, &pairs) {
        let excess = m.penetration - cfg.slop;
        let inv = bodies[ia].inv_mass + bodies[ib].inv_mass;
        if excess <= 0.0 || inv == 0.0 {
            continue;
        }
        let corr = cfg.baumgarte * excess / inv;
        let (ma, mb) = (bodies[ia].inv_mass, bodies[ib].inv_mass);
        bodies[ia].pos -= m.normal * (corr * ma);
        bodies[ib].pos += m.normal * (corr * mb);
    }

    let mut next = WorldState {
        ball: BallState::new(bodies[0].pos, bodies[0].vel),
        block_ids: w.block_ids.clone(),
        blocks: w.blocks.clone(),
        step: w.step + 1,
        warm: Vec::new(),
    };
    for (i, st) in next.blocks.iter_mut().enumerate() {
        let b = &bodies[i + 1];
        st.pos = b.pos;
        st.angle = b.angle;
        st.vel = b.vel;
        st.angvel = b.angvel;
    }
    let mut record = Vec::with_capacity(contacts.len());
    for c in &contacts {
        let (a, b) = (bodies[c.ia].id, bodies[c.ib].id);
        if b != BodyRef::Ball {
            next.warm.push(WarmImpulse { a, b, point: c.m.point, pn: c.pn, pt: c.pt });
        }
        record.push(Contact {
            a,
            b,
            point: c.m.point,
            normal: c.m.normal,
            penetration: c.m.penetration.max(0.0),
            corner: c.m.corner,
        });
    }
    (next, record)
}

/// Let the placed blocks settle without the ball for `steps` steps and
/// report the largest pose change of any block as (px, degrees).
pub fn block_drift(level: &Level, p: &Placement, steps: usize) -> Result<(f64, f64), LevelError> {
    let cfg = SimConfig { ball: false, ..SimConfig::default() };
    let start = WorldState::initial(level, p)?;
    let mut w = start.clone();
    for _ in 0..steps {
        w = step_with(&w, level, &cfg).0;
    }
    Ok(pose_drift(&start.blocks, &w.blocks))
}

/// Largest position and angle change between two parallel block lists.
pub fn pose_drift(before: &[BlockState], after: &[BlockState]) -> (f64, f64) {
    before.iter().zip(after).fold((0.0, 0.0), |(dp, da), (a, b)| {
        (
            f64::max(dp, a.pos.distance(b.pos)),
            f64::max(da, (a.angle - b.angle).abs().to_degrees()),
        )
    })
}

// ---------------------------------------------------------------------------
// Whole trials

pub fn simulate(level: &Level, p: &Placement) -> Result<TrialRecord, SimError> {
    simulate_with(level, p, &SimConfig::default())
}

pub fn simulate_with(level: &Level, p: &Placement, cfg: &SimConfig) -> Result<TrialRecord, SimError> {
    let feas = placement_feasible(p, level)?;
    if !feas.is_feasible() {
        return Err(SimError::Infeasible(feas.violations));
    }
    let mut w = WorldState::initial(level, p)?;
    let mut rec = TrialRecord {
        trajectory: vec![w.ball],
        block_ids: w.block_ids.clone(),
        block_history: vec![w.blocks.clone()],
        contacts: vec![Vec::new()],
        outcome: Outcome::Timeout,
    };
    if level.in_target_set(&w.ball) {
        rec.outcome = Outcome::ReachedTarget { step: 0 };
        return Ok(rec);
    }
    let floor = level.bounds.max.y + 2.0 * level.ball_radius;
    while w.step < level.horizon {
        let (next, contacts) = step_with(&w, level, cfg);
        w = next;
        rec.trajectory.push(w.ball);
        rec.block_history.push(w.blocks.clone());
        rec.contacts.push(contacts);
        if level.in_target_set(&w.ball) {
            rec.outcome = Outcome::ReachedTarget { step: w.step };
            break;
        }
        if w.ball.pos.y > floor {
            rec.outcome = Outcome::Lost { step: w.step };
            break;
        }
    }
    Ok(rec)
}
