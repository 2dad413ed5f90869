//! Refitting the surrogate parameters from what the simulator actually did.
//!
//! Every contact event of a trial becomes one sample (state entering the
//! event, observed state leaving it). Bounce parameters are linear in the
//! model and come out in closed form; the rolling deceleration enters
//! piecewise and is found by golden-section search.

use crate::geometry::Vec2;
use crate::kinematics::{bounce_with_normal, predict_roll_for, ContactType, KinParams, Owner, Surface, TypeParams};
use crate::level::{BallState, Level};
use crate::optimizer::scene::{contact_feature, SceneBody};
use crate::physics::events::detect_events;
use crate::physics::{BodyRef, TrialRecord, DT};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const A_ROLL_MAX: f64 = 200.0;
const GOLDEN_ITERATIONS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSample {
    pub s_in: BallState,
    pub surface: Surface,
    /// Contact normal (surface toward ball) at the start of the event.
    pub normal: Vec2,
    pub j: ContactType,
    pub y: BallState,
    /// Time from `s_in` to `y` (s).
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta_new: KinParams,
    pub residual_before: f64,
    pub residual_after: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("no samples of type {0:?}")]
    NoSamples(ContactType),
    #[error("samples of type {0:?} carry no information beyond the prior")]
    Degenerate(ContactType),
}

fn surface_of(level: &Level, tr: &TrialRecord, k: usize, body: BodyRef, ball: Vec2) -> Option<(Surface, Vec2)> {
    let (owner, posed) = match body {
        BodyRef::Env(q) => (Owner::Env(q), level.env.get(q)?.posed()),
        BodyRef::Block(id) => {
            let i = tr.block_ids.iter().position(|&b| b == id)?;
            let st = tr.block_history.get(k)?.get(i)?;
            (Owner::Block(id), level.template(id)?.posed(st.pos, st.angle))
        }
        BodyRef::Ball => return None,
    };
    let (surf, n, _) = contact_feature(&SceneBody { owner, posed }, ball);
    Some((surf, n))
}

/// One sample per contact event. The entering state is the step before the
/// event starts; bounces are observed right after the impact step, rolls at
/// the last step of the run.
pub fn extract_samples(level: &Level, tr: &TrialRecord) -> Vec<EventSample> {
    let mut out = Vec::new();
    for e in detect_events(tr) {
        let Some(body) = e.object else { continue };
        if e.kind == ContactType::FreeFall || e.start == 0 {
            continue;
        }
        let s_in = tr.trajectory[e.start - 1];
        let last = if e.kind.is_bounce() { e.start } else { e.end };
        let Some((surface, normal)) = surface_of(level, tr, e.start - 1, body, tr.trajectory[e.start].pos) else {
            continue;
        };
        out.push(EventSample {
            s_in,
            surface,
            normal,
            j: e.kind,
            y: tr.trajectory[last],
            duration: (last - (e.start - 1)) as f64 * DT,
        });
    }
    out
}

/// Bounces act on the approach velocity, and the ball then travels with
/// the new velocity for the rest of the impact step.
pub fn predict(s: &EventSample, p: &TypeParams) -> BallState {
    if s.j.is_bounce() {
        let out = bounce_with_normal(&s.s_in, s.normal, p);
        BallState::new(s.s_in.pos + out.vel * s.duration, out.vel)
    } else {
        predict_roll_for(&s.s_in, &s.surface, p, s.duration).state
    }
}

/// Squared error in px², velocity scaled by the step length.
pub fn residual(s: &EventSample, p: &TypeParams) -> f64 {
    let y = predict(s, p);
    (y.pos - s.y.pos).length_squared() + DT * DT * (y.vel - s.y.vel).length_squared()
}

fn total(samples: &[&EventSample], p: &TypeParams) -> f64 {
    samples.iter().map(|s| residual(s, p)).sum()
}

fn fit_bounce(samples: &[&EventSample], prior: TypeParams) -> TypeParams {
    let (mut nn, mut ny, mut tt, mut ty) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        // both residual terms pull the outgoing velocity toward their own
        // target; the weighted mean of the two is what the fit sees
        let d2 = s.duration * s.duration;
        let from_pos = (s.y.pos - s.s_in.pos) * (1.0 / s.duration);
        let target = (from_pos * d2 + s.y.vel * (DT * DT)) * (1.0 / (d2 + DT * DT));
        let n = s.normal;
        let v = s.s_in.vel;
        let vn = v.dot(n);
        let vt = v - n * vn;
        let yn = target.dot(n);
        let yt = target - n * yn;
        nn += vn * vn;
        ny += -vn * yn;
        tt += vt.length_squared();
        ty += vt.dot(yt);
    }
    TypeParams {
        e_n: if nn > 0.0 { ny / nn } else { prior.e_n },
        e_t: if tt > 0.0 { ty / tt } else { prior.e_t },
        a_roll: prior.a_roll,
    }
    .clamped()
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn fit_roll(samples: &[&EventSample], prior: TypeParams) -> TypeParams {
    let with = |a: f64| TypeParams { a_roll: a, ..prior };
    let a = golden(|a| total(samples, &with(a)), 0.0, A_ROLL_MAX);
    // the objective is only piecewise smooth; never do worse than the ends
    [a, 0.0, A_ROLL_MAX]
        .into_iter()
        .map(with)
        .min_by(|x, y| total(samples, x).total_cmp(&total(samples, y)))
        .expect("three candidates")
}

/// Least-squares refit of type `j` from the samples of that type in
/// `samples`; other types keep their prior values.
pub fn fit(samples: &[EventSample], j: ContactType, prior: &KinParams) -> Result<FitReport, FitError> {
    let of_j: Vec<&EventSample> = samples.iter().filter(|s| s.j == j).collect();
    if of_j.is_empty() || j == ContactType::FreeFall {
        return Err(FitError::NoSamples(j));
    }
    let p0 = prior.get(j);
    let before = total(&of_j, &p0);
    let same_input = of_j.iter().all(|s| s.s_in == of_j[0].s_in);
    if same_input && before <= f64::EPSILON * f64::EPSILON {
        return Err(FitError::Degenerate(j));
    }
    let p1 = if j.is_bounce() { fit_bounce(&of_j, p0) } else { fit_roll(&of_j, p0) };
    let after = total(&of_j, &p1);
    let mut beta_new = *prior;
    let residual_after = if after <= before {
        beta_new.set(j, p1);
        after
    } else {
        before
    };
    Ok(FitReport { beta_new, residual_before: before, residual_after, n_samples: of_j.len() })
}

/// Refit every contact type that has samples, in catalog order.
pub fn fit_all(samples: &[EventSample], prior: &KinParams) -> (KinParams, Vec<(ContactType, FitReport)>) {
    let mut beta = *prior;
    let mut reports = Vec::new();
    for j in ContactType::ALL {
        if let Ok(r) = fit(samples, j, &beta) {
            beta = r.beta_new;
            reports.push((j, r));
        }
    }
    (beta, reports)
}

/// One line of the per-session fit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLogEntry {
    pub trial: usize,
    pub kind: ContactType,
    pub before: TypeParams,
    pub after: TypeParams,
    pub residual_before: f64,
    pub residual_after: f64,
    pub n_samples: usize,
}

impl FitLogEntry {
    pub fn new(trial: usize, kind: ContactType, prior: &KinParams, r: &FitReport) -> Self {
        FitLogEntry {
            trial,
            kind,
            before: prior.get(kind),
            after: r.beta_new.get(kind),
            residual_before: r.residual_before,
            residual_after: r.residual_after,
            n_samples: r.n_samples,
        }
    }
}

pub fn write_log_line(w: &mut impl Write, entry: &FitLogEntry) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, entry)?;
    writeln!(w)
}
