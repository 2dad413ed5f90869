//! Rollout of the surrogate event chain: contact with the main block
//! (possibly several bounces on it), free flight, one interaction with
//! whatever is hit next.

use super::scene::{contact_feature, Scene, SceneBody};
use crate::geometry::{penetration, point_segment, Vec2};
use crate::guide::LocalTargetSet;
use crate::kinematics::{
    bounce_with_normal, classify_contact, predict_freefall_time, predict_roll, ContactType, KinParams, Owner, RollEnd,
};
use crate::level::BallState;
use crate::physics::DT;
use serde::Serialize;
use thiserror::Error;

/// Longest free-flight hop of the ray march (px).
pub const MARCH_STEP: f64 = 5.0;
/// Free flights are abandoned after this long (s).
pub const MAX_FLIGHT: f64 = 4.0;
const MAX_MAIN_CONTACTS: usize = 8;
/// Overlap that counts as a hit during the march (px).
const HIT_DEPTH: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainEvent {
    pub kind: ContactType,
    pub owner: Option<Owner>,
    pub state: BallState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub events: Vec<ChainEvent>,
    /// Polyline through every predicted position, for plotting.
    pub path: Vec<Vec2>,
    /// Closest approach to the local target centre (px).
    pub closest: f64,
    /// The chain entered the local target set.
    pub reached: bool,
    pub end: BallState,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("the ball never touches the main block")]
    NoContact,
    #[error("the ball meets {0:?} before the main block")]
    Blocked(Owner),
}

struct Tracker<'a> {
    target: &'a LocalTargetSet,
    closest: f64,
    reached: bool,
    path: Vec<Vec2>,
}

impl Tracker<'_> {
    fn visit(&mut self, to: Vec2) {
        let from = *self.path.last().unwrap_or(&to);
        let (_, d) = point_segment(self.target.center, from, to);
        self.closest = self.closest.min(d);
        if self.target.contains(from) || d < self.target.radius {
            self.reached = true;
        }
        self.path.push(to);
    }
}

enum Flight {
    Hit { state: BallState, body: usize },
    Gone(BallState),
}

fn approaching(body: &SceneBody, s: &BallState) -> bool {
    let (_, n, _) = contact_feature(body, s.pos);
    s.vel.dot(n) < 0.0
}

fn fly(s: &BallState, scene: &Scene, tr: &mut Tracker) -> Flight {
    let r = scene.ball_radius;
    let b = scene.bounds;
    let mut t = 0.0;
    while t < MAX_FLIGHT {
        if tr.reached {
            return Flight::Gone(predict_freefall_time(s, t));
        }
        let speed = predict_freefall_time(s, t).vel.length().max(1.0);
        let t1 = t + (MARCH_STEP / speed).min(DT);
        let st = predict_freefall_time(s, t1);
        tr.visit(st.pos);
        let ball = scene.ball(st.pos);
        let mut best: Option<(f64, usize)> = None;
        for (i, body) in scene.bodies.iter().enumerate() {
            if penetration(&ball, &body.posed) <= HIT_DEPTH || !approaching(body, &st) {
                continue;
            }
            let touch = |tt: f64| penetration(&scene.ball(predict_freefall_time(s, tt).pos), &body.posed) > 0.0;
            let (mut lo, mut hi) = (t, t1);
            if touch(lo) {
                hi = lo;
            } else {
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if touch(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            if best.is_none_or(|(bt, _)| hi < bt) {
                best = Some((hi, i));
            }
        }
        if let Some((th, i)) = best {
            let state = predict_freefall_time(s, th);
            if let Some(last) = tr.path.last_mut() {
                *last = state.pos;
            }
            return Flight::Hit { state, body: i };
        }
        if st.pos.y - r > b.max.y || st.pos.x + r < b.min.x || st.pos.x - r > b.max.x {
            return Flight::Gone(st);
        }
        t = t1;
    }
    Flight::Gone(predict_freefall_time(s, t))
}

/// Where the ball first touches `main` between two recorded samples.
pub fn first_touch(s0: &BallState, s1: &BallState, main: &SceneBody, scene: &Scene) -> Result<BallState, ChainError> {
    let at = |t: f64| BallState::new(s0.pos.lerp(s1.pos, t), s0.vel.lerp(s1.vel, t));
    let pen = |t: f64, body: &SceneBody| penetration(&scene.ball(at(t).pos), &body.posed);
    if pen(1.0, main) <= 0.0 {
        return Err(ChainError::NoContact);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    if pen(0.0, main) > 0.0 {
        hi = 0.0;
    } else {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if pen(mid, main) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let s = at(hi);
    for body in &scene.bodies {
        if body.owner != main.owner && pen(hi, body) > HIT_DEPTH && approaching(body, &s) {
            return Err(ChainError::Blocked(body.owner));
        }
    }
    Ok(s)
}

/// One contact on `body`: bounce, or roll to the end of the face. Returns
/// the state the ball leaves with and whether motion stopped.
fn interact(s: &BallState, body: &SceneBody, beta: &KinParams, tr: &mut Tracker, events: &mut Vec<ChainEvent>) -> (BallState, bool) {
    let (surf, n, corner) = contact_feature(body, s.pos);
    let kind = classify_contact(s.vel, n, corner);
    events.push(ChainEvent { kind, owner: Some(body.owner), state: *s });
    let p = beta.get(kind);
    if kind.is_bounce() {
        return (bounce_with_normal(s, n, &p), false);
    }
    let roll = predict_roll(s, &surf, &p);
    tr.visit(roll.state.pos);
    (roll.state, roll.end == RollEnd::Rest)
}

/// Roll the chain out from the ball state `s` already touching `main`.
/// `main` must be part of `scene`.
pub fn rollout(s: &BallState, main_idx: usize, scene: &Scene, beta: &KinParams, target: &LocalTargetSet) -> Chain {
    let mut tr = Tracker { target, closest: f64::INFINITY, reached: false, path: vec![] };
    tr.visit(s.pos);
    let mut events = Vec::new();
    let mut state = *s;
    let finish = |tr: Tracker, events: Vec<ChainEvent>, end: BallState| Chain {
        events,
        path: tr.path,
        closest: tr.closest,
        reached: tr.reached,
        end,
    };

    let main = &scene.bodies[main_idx];
    let mut contacts = 0;
    let env_hit = loop {
        let (next, stopped) = interact(&state, main, beta, &mut tr, &mut events);
        contacts += 1;
        if stopped || tr.reached || contacts >= MAX_MAIN_CONTACTS {
            return finish(tr, events, next);
        }
        events.push(ChainEvent { kind: ContactType::FreeFall, owner: None, state: next });
        match fly(&next, scene, &mut tr) {
            Flight::Hit { state: hit, body } if body == main_idx => state = hit,
            Flight::Hit { state: hit, body } => break (hit, body),
            Flight::Gone(end) => return finish(tr, events, end),
        }
    };
    if tr.reached {
        return finish(tr, events, env_hit.0);
    }
    let (hit, body) = env_hit;
    let (end, _) = interact(&hit, &scene.bodies[body], beta, &mut tr, &mut events);
    finish(tr, events, end)
}
