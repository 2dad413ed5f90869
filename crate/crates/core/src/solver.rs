//! The outer loop: run a trial, find where the ball leaves the guide path,
//! optimize a block there, learn from the outcome, repeat.

use crate::geometry::{Rect, Vec2};
use crate::guide::{compute_local_region, local_target, plan_guide_path, GuidePath, LocalRegion, DEFAULT_EPS1, DEFAULT_EPS2};
use crate::kinematics::KinParams;
use crate::learner::{extract_samples, fit_all, FitLogEntry};
use crate::level::{BallState, Level, Placement};
use crate::optimizer::{back_map, solve_local, Candidate, OptOptions, Problem, SearchMode};
use crate::physics::{pose_drift, simulate, BodyRef, Outcome, SimError, TrialRecord};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const DEFAULT_BUDGET: usize = 10;
/// Blocks may not move more than this before the ball first touches one.
pub const DRIFT_PX: f64 = 2.0;
pub const DRIFT_DEG: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub budget: usize,
    pub seed: u64,
    pub random_samples: Option<usize>,
    pub dump_dir: Option<PathBuf>,
    /// Keep wall-clock times in the report (makes it non-reproducible).
    pub timings: bool,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            budget: DEFAULT_BUDGET,
            seed: 0,
            random_samples: None,
            dump_dir: None,
            timings: false,
            eps1: DEFAULT_EPS1,
            eps2: DEFAULT_EPS2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    NoGuidePath,
    NoRegion,
    UnsolvableRegion,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum Status {
    Running,
    Solved,
    Failed(FailReason),
}

/// One pass of the local optimizer and the trial that tested it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAttempt {
    pub trial: usize,
    pub region: usize,
    pub rect: Rect,
    pub k_loc: usize,
    pub fallback: bool,
    pub candidate: Candidate,
    pub supports: usize,
    pub cg_cost: f64,
    pub fg_cost: f64,
    pub cg_candidates: usize,
    pub fg_candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cg_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fg_seconds: Option<f64>,
    pub outcome: Outcome,
    /// Pre-contact drift of the placed blocks (px, degrees).
    pub drift: (f64, f64),
    /// The trial became the new reference trajectory.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub level: String,
    #[serde(flatten)]
    pub status: Status,
    pub trials: usize,
    pub regions: usize,
    pub attempts: Vec<RegionAttempt>,
    pub placement: Placement,
    pub beta: KinParams,
    pub fits: Vec<FitLogEntry>,
    pub guide: Option<GuidePath>,
}

impl SolveReport {
    pub fn solved(&self) -> bool {
        self.status == Status::Solved
    }
}

/// Loop state between trials.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub guide: GuidePath,
    /// Reference trajectory.
    pub gamma_in: Vec<BallState>,
    /// Placement behind the reference trajectory.
    pub placements: Placement,
    pub beta: KinParams,
    pub trial_count: usize,
    pub region_history: Vec<LocalRegion>,
    pub status: Status,
    /// Steps before this one belong to regions already dealt with.
    pub first_step: usize,
    /// Closest approach of the reference trajectory to the guide path end.
    pub terminal_deviation: f64,
}

/// Largest pose change of any placed block before the ball first touches
/// one of them (the whole run if it never does).
pub fn precontact_drift(tr: &TrialRecord, placement: &Placement) -> (f64, f64) {
    if placement.entries.is_empty() || tr.block_history.is_empty() {
        return (0.0, 0.0);
    }
    let placed = |b: BodyRef| matches!(b, BodyRef::Block(id) if placement.contains(id));
    let first = (1..tr.contacts.len())
        .find(|&k| tr.ball_contacts(k).any(|c| placed(c.a)))
        .unwrap_or(tr.block_history.len());
    let start = &tr.block_history[0];
    let mut worst = (0.0f64, 0.0f64);
    for states in &tr.block_history[..first] {
        let (dp, da) = pose_drift(start, states);
        worst = (worst.0.max(dp), worst.1.max(da));
    }
    worst
}

fn terminal_deviation(traj: &[BallState], end: Vec2) -> f64 {
    traj.iter().map(|s| s.pos.distance(end)).fold(f64::INFINITY, f64::min)
}

/// Last step at which the ball touches a block of `placed`; later regions
/// are searched only past it.
fn progress_step(tr: &TrialRecord, placed: &Placement, fallback: usize) -> usize {
    (1..tr.contacts.len())
        .rev()
        .find(|&k| tr.ball_contacts(k).any(|c| matches!(c.a, BodyRef::Block(id) if placed.contains(id))))
        .unwrap_or(fallback)
}

fn positions(traj: &[BallState]) -> Vec<Vec2> {
    traj.iter().map(|s| s.pos).collect()
}

fn report(level: &Level, st: &SessionState, status: Status, attempts: Vec<RegionAttempt>, fits: Vec<FitLogEntry>, regions: usize, guide: Option<GuidePath>) -> SolveReport {
    SolveReport {
        level: level.name.clone(),
        status,
        trials: st.trial_count,
        regions,
        attempts,
        placement: st.placements.clone(),
        beta: st.beta,
        fits,
        guide,
    }
}

pub fn solve(level: &Level, opts: &SolveOptions) -> Result<SolveReport, SimError> {
    let trial0 = simulate(level, &Placement::empty())?;
    let mut st = SessionState {
        guide: GuidePath { waypoints: vec![] },
        gamma_in: trial0.trajectory.clone(),
        placements: Placement::empty(),
        beta: KinParams::prior(),
        trial_count: 0,
        region_history: vec![],
        status: Status::Running,
        first_step: 1,
        terminal_deviation: terminal_deviation(&trial0.trajectory, level.target),
    };
    // the empty run only counts when it already solves the level
    if trial0.outcome.is_success() {
        st.trial_count = 1;
        return Ok(report(level, &st, Status::Solved, vec![], vec![], 0, None));
    }
    let Ok(guide) = plan_guide_path(level) else {
        return Ok(report(level, &st, Status::Failed(FailReason::NoGuidePath), vec![], vec![], 0, None));
    };
    st.guide = guide.clone();
    let guide_pts = guide.waypoints.clone();
    let end = *guide_pts.last().expect("guide has a start and an end");
    st.terminal_deviation = terminal_deviation(&st.gamma_in, end);

    let mut attempts = Vec::new();
    let mut fits = Vec::new();
    let mut tried: Vec<Candidate> = Vec::new();
    let mut regions = 0;
    let mut new_region = true;
    let mode = opts.random_samples.map(|samples| SearchMode::Random { seed: opts.seed, samples });

    while st.trial_count < opts.budget {
        let tail = positions(&st.gamma_in[st.first_step.min(st.gamma_in.len())..]);
        let Some(mut region) = compute_local_region(&tail, &guide_pts, opts.eps1, opts.eps2) else {
            st.status = Status::Failed(FailReason::NoRegion);
            break;
        };
        region.k_loc += st.first_step;
        for (k, _) in region.gamma_in_loc.iter_mut() {
            *k += st.first_step;
        }
        if new_region {
            regions += 1;
            new_region = false;
        }
        st.region_history.push(region.clone());

        let remaining: Vec<u32> = level.inventory.iter().map(|t| t.id).filter(|&id| !st.placements.contains(id)).collect();
        let problem = Problem {
            level,
            region: &region,
            target: local_target(&region, level.target_eps),
            trajectory: &st.gamma_in,
            first_step: st.first_step,
            frozen: &st.placements,
            remaining: &remaining,
            beta: &st.beta,
        };
        let oo = OptOptions { mode, dump_dir: opts.dump_dir.clone(), exclude: tried.clone() };
        let sol = match solve_local(&problem, &oo) {
            Ok(s) => s,
            Err(e) => {
                log::info!("region at step {} {:?} has no usable candidate: {e}", region.k_loc, region.rect);
                st.status = Status::Failed(FailReason::UnsolvableRegion);
                break;
            }
        };
        let best = sol.best.clone();
        tried.push(best.candidate);
        let placement = match back_map(&best.candidate, &best.supports, &st.placements, level) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let tr = simulate(level, &placement)?;
        st.trial_count += 1;

        let samples = extract_samples(level, &tr);
        let prior = st.beta;
        let (beta, reports) = fit_all(&samples, &prior);
        let mut before = prior;
        for (j, r) in &reports {
            fits.push(FitLogEntry::new(st.trial_count, *j, &before, r));
            before = r.beta_new;
        }
        st.beta = beta;

        let drift = precontact_drift(&tr, &placement);
        let steady = drift.0 < DRIFT_PX && drift.1 < DRIFT_DEG;
        let solved = tr.outcome.is_success() && steady;
        let dev = terminal_deviation(&tr.trajectory, end);
        let accepted = solved || (steady && dev < st.terminal_deviation);
        log::info!(
            "trial {} block {} at ({:.1}, {:.1}, {:.1} deg): {:?}, deviation {:.1}{}",
            st.trial_count,
            best.candidate.main_block,
            best.candidate.pos.x,
            best.candidate.pos.y,
            best.candidate.angle.to_degrees(),
            tr.outcome,
            dev,
            if accepted { ", accepted" } else { "" }
        );
        attempts.push(RegionAttempt {
            trial: st.trial_count,
            region: regions,
            rect: region.rect,
            k_loc: region.k_loc,
            fallback: region.fallback,
            candidate: best.candidate,
            supports: best.supports.len(),
            cg_cost: sol.cg_cost,
            fg_cost: sol.cost(),
            cg_candidates: sol.cg_candidates,
            fg_candidates: sol.fg_candidates,
            cg_seconds: opts.timings.then_some(sol.cg_seconds),
            fg_seconds: opts.timings.then_some(sol.fg_seconds),
            outcome: tr.outcome,
            drift,
            accepted,
        });
        if accepted {
            let mut placed_now = placement.clone();
            placed_now.entries.retain(|e| !st.placements.contains(e.id));
            st.first_step = progress_step(&tr, &placed_now, best.candidate.e1).max(st.first_step);
            st.gamma_in = tr.trajectory;
            st.placements = placement;
            st.terminal_deviation = dev;
            tried.clear();
            new_region = true;
        }
        if solved {
            st.status = Status::Solved;
            break;
        }
    }
    if st.status == Status::Running {
        st.status = Status::Failed(FailReason::Budget);
    }
    let status = st.status;
    Ok(report(level, &st, status, attempts, fits, regions, Some(guide)))
}
