//! Local optimization inside one region: choose a main block and its pose
//! so the surrogate event chain carries the ball to the local target.
//!
//! Poses come from dropping a block straight down at grid positions, so
//! every candidate rests on something; the contact step e1 then follows
//! from where the recorded trajectory first meets the block.

pub mod chain;
pub mod scene;
pub mod support;

use crate::geometry::{penetration, Vec2};
use crate::guide::{LocalRegion, LocalTargetSet};
use crate::kinematics::{KinParams, Owner};
use crate::level::{placement_feasible, BallState, Level, LevelError, Placement, PlacementEntry};
use chain::{first_touch, rollout, Chain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use scene::{Scene, SceneBody};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;
use support::place_supports;
use thiserror::Error;

pub const COARSE_STEP: f64 = 20.0;
pub const COARSE_ANGLE_DEG: f64 = 15.0;
pub const FINE_STEP: f64 = 5.0;
pub const FINE_ANGLE_DEG: f64 = 5.0;
/// Fine grid half-widths around the coarse anchor.
pub const FINE_SPAN: f64 = 15.0;
pub const FINE_ANGLE_SPAN_DEG: f64 = 10.0;
/// Steepest tilt tried for a main block; beyond it no two-point support
/// holds under the simulator's friction.
pub const MAX_SUPPORTED_TILT_DEG: f64 = 25.0;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("no feasible candidate in the region")]
    EmptyGrid,
    #[error("every candidate in the region is infeasible")]
    Unsolvable,
    #[error("no supporting blocks can hold the main block")]
    Unsupportable,
    #[error(transparent)]
    Level(#[from] LevelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// First trajectory step at which the ball touches the main block.
    pub e1: usize,
    pub main_block: u32,
    pub pos: Vec2,
    pub angle: f64,
}

impl Candidate {
    pub fn entry(&self) -> PlacementEntry {
        PlacementEntry { id: self.main_block, pos: self.pos, angle: self.angle }
    }

    /// Tie-break order after cost: block id, then (e1, x, y, angle).
    pub fn order(&self, o: &Candidate) -> Ordering {
        self.main_block
            .cmp(&o.main_block)
            .then(self.e1.cmp(&o.e1))
            .then(self.pos.x.total_cmp(&o.pos.x))
            .then(self.pos.y.total_cmp(&o.pos.y))
            .then(self.angle.total_cmp(&o.angle))
    }

    pub fn same_pose(&self, o: &Candidate) -> bool {
        self.main_block == o.main_block && self.pos == o.pos && self.angle == o.angle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SearchMode {
    Grid,
    /// Uniform random shooting with the given number of coarse samples.
    Random { seed: u64, samples: usize },
}

#[derive(Debug, Clone, Default)]
pub struct OptOptions {
    pub mode: Option<SearchMode>,
    /// When set, each pass writes a per-candidate CSV here.
    pub dump_dir: Option<PathBuf>,
    /// Poses that must not be proposed again.
    pub exclude: Vec<Candidate>,
}

/// Everything the local search needs to know about one region.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub level: &'a Level,
    pub region: &'a LocalRegion,
    pub target: LocalTargetSet,
    /// The reference trajectory, indexed by step.
    pub trajectory: &'a [BallState],
    /// Trajectory steps before this one are not available for contact.
    pub first_step: usize,
    /// Blocks placed for earlier regions; treated as fixed.
    pub frozen: &'a Placement,
    /// Template ids still in the tray.
    pub remaining: &'a [u32],
    pub beta: &'a KinParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub candidate: Candidate,
    pub cost: f64,
    pub supports: Vec<PlacementEntry>,
    pub chain: Chain,
}

fn rank(a: &Evaluated, b: &Evaluated) -> Ordering {
    a.cost.total_cmp(&b.cost).then(a.candidate.order(&b.candidate))
}

/// Index of the best evaluation under the total tie-break order.
pub fn argmin(items: &[Evaluated]) -> Option<usize> {
    (0..items.len()).min_by(|&i, &j| rank(&items[i], &items[j]))
}

fn angles_coarse(level: &Level, main: u32, remaining: &[u32]) -> Vec<f64> {
    let mut out: Vec<f64> = (-5..=6).map(|i| (i as f64 * COARSE_ANGLE_DEG).to_radians()).collect();
    // tilts whose raised end sits exactly on another block of the tray
    let w = level.template(main).map_or(0.0, |t| t.width);
    for &id in remaining {
        if id == main {
            continue;
        }
        let Some(t) = level.template(id) else { continue };
        for s in [t.width, t.height] {
            if s < w {
                let a = (s / w).asin();
                if a.to_degrees() <= MAX_SUPPORTED_TILT_DEG {
                    out.push(a);
                    out.push(-a);
                }
            }
        }
    }
    out.retain(|a| a.to_degrees().abs() <= 90.0 + 1e-9);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// Drop block `id` at `x` with `angle` and derive its contact step.
fn materialize(p: &Problem, base: &Scene, id: u32, x: f64, angle: f64) -> Option<Candidate> {
    let t = p.level.template(id)?;
    let rect = p.region.rect;
    let shape = t.shape();
    let half_h = t.posed(Vec2::ZERO, angle).aabb().height() / 2.0;
    // find the first free height below the region top, then let it fall
    let mut y = rect.min.y.max(p.level.bounds.min.y) + half_h;
    let posed = loop {
        if y > rect.max.y {
            return None;
        }
        if let Some(found) = base.drop_shape(shape, x, y, angle) {
            break found;
        }
        y += 2.0;
    };
    if !rect.contains(posed.pos) {
        return None;
    }
    let ball_hits = |k: usize| penetration(&base.ball(p.trajectory[k].pos), &posed) > 0.0;
    let e1 = (p.first_step.max(1)..p.trajectory.len()).find(|&k| ball_hits(k))?;
    let c = Candidate { e1, main_block: id, pos: posed.pos, angle };
    let mut all = p.frozen.clone();
    all.entries.push(c.entry());
    placement_feasible(&all, p.level).ok()?.is_feasible().then_some(c)
}

fn dedup(mut v: Vec<Candidate>, exclude: &[Candidate]) -> Vec<Candidate> {
    v.sort_by(|a, b| a.order(b));
    v.dedup_by(|a, b| a.same_pose(b));
    v.retain(|c| !exclude.iter().any(|e| e.same_pose(c)));
    v
}

fn x_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as i64;
    (0..=n.max(0)).map(|i| lo + step / 2.0 + i as f64 * step).filter(|x| *x <= hi).collect()
}

/// Candidate poses for one resolution pass. The fine pass needs the coarse
/// winner as `anchor` and always contains it.
pub fn candidate_grid(
    p: &Problem,
    resolution: Resolution,
    anchor: Option<&Candidate>,
    opts: &OptOptions,
) -> Result<Vec<Candidate>, OptError> {
    let base = Scene::new(p.level, p.frozen);
    let rect = p.region.rect;
    let (lo, hi) = (rect.min.x.max(p.level.bounds.min.x), rect.max.x.min(p.level.bounds.max.x));
    let mode = opts.mode.unwrap_or(SearchMode::Grid);
    let mut out = Vec::new();
    match (resolution, anchor) {
        (Resolution::Coarse, _) => match mode {
            SearchMode::Grid => {
                for &id in p.remaining {
                    for a in angles_coarse(p.level, id, p.remaining) {
                        for x in x_grid(lo, hi, COARSE_STEP) {
                            out.extend(materialize(p, &base, id, x, a));
                        }
                    }
                }
            }
            SearchMode::Random { seed, samples } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..samples {
                    if p.remaining.is_empty() || hi <= lo {
                        break;
                    }
                    let id = p.remaining[rng.gen_range(0..p.remaining.len())];
                    let x = rng.gen_range(lo..hi);
                    let a = rng.gen_range(-75f64..=90.0).to_radians();
                    out.extend(materialize(p, &base, id, x, a));
                }
            }
        },
        (Resolution::Fine, Some(a)) => {
            out.push(*a);
            let xs: Vec<f64> = match mode {
                SearchMode::Grid => {
                    let n = (FINE_SPAN / FINE_STEP) as i64;
                    (-n..=n).map(|i| a.pos.x + i as f64 * FINE_STEP).collect()
                }
                SearchMode::Random { seed, samples } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
                    (0..samples / 4).map(|_| a.pos.x + rng.gen_range(-FINE_SPAN..=FINE_SPAN)).collect()
                }
            };
            let n = (FINE_ANGLE_SPAN_DEG / FINE_ANGLE_DEG) as i64;
            for x in xs {
                for i in -n..=n {
                    let ang = a.angle + (i as f64 * FINE_ANGLE_DEG).to_radians();
                    out.extend(materialize(p, &base, a.main_block, x, ang));
                }
            }
        }
        (Resolution::Fine, None) => return Err(OptError::EmptyGrid),
    }
    let out = dedup(out, &opts.exclude);
    if out.is_empty() {
        Err(OptError::EmptyGrid)
    } else {
        Ok(out)
    }
}

/// Surrogate cost of one candidate: closest approach of the predicted
/// chain to the local target centre. `Err` carries the reason it is
/// infeasible.
pub fn evaluate(c: &Candidate, p: &Problem) -> Result<Evaluated, String> {
    if c.e1 == 0 || c.e1 >= p.trajectory.len() {
        return Err("contact step outside the trajectory".into());
    }
    let supports = place_supports(p.level, p.frozen, &c.entry(), p.remaining).map_err(|e| e.to_string())?;
    let t = p.level.template(c.main_block).ok_or("unknown block")?;
    let base = Scene::new(p.level, p.frozen);
    let support_bodies: Vec<SceneBody> = supports
        .iter()
        .map(|e| SceneBody { owner: Owner::Block(e.id), posed: p.level.template(e.id).unwrap().posed(e.pos, e.angle) })
        .collect();
    // a support in the ball's way before the main block spoils the chain
    for k in p.first_step.max(1)..c.e1 {
        let ball = base.ball(p.trajectory[k].pos);
        if support_bodies.iter().any(|b| penetration(&ball, &b.posed) > 0.0) {
            return Err("a support blocks the incoming path".into());
        }
    }
    let main = SceneBody { owner: Owner::Block(c.main_block), posed: t.posed(c.pos, c.angle) };
    let scene = base.with(support_bodies).with([main]);
    let main_idx = scene.bodies.len() - 1;
    let touch = first_touch(&p.trajectory[c.e1 - 1], &p.trajectory[c.e1], &main, &scene).map_err(|e| e.to_string())?;
    let chain = rollout(&touch, main_idx, &scene, p.beta, &p.target);
    Ok(Evaluated { candidate: *c, cost: chain.closest, supports, chain })
}

fn evaluate_all(cands: &[Candidate], p: &Problem) -> Vec<Result<Evaluated, String>> {
    cands.par_iter().map(|c| evaluate(c, p)).collect()
}

fn dump(path: &PathBuf, cands: &[Candidate], results: &[Result<Evaluated, String>]) -> std::io::Result<()> {
    let mut s = String::from("e1,l,x,y,angle,cost\n");
    for (c, r) in cands.iter().zip(results) {
        let cost = match r {
            Ok(e) => format!("{}", e.cost),
            Err(_) => "infeasible".to_string(),
        };
        let _ = writeln!(s, "{},{},{},{},{},{}", c.e1, c.main_block, c.pos.x, c.pos.y, c.angle, cost);
    }
    std::fs::write(path, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub best: Evaluated,
    pub cg_cost: f64,
    pub cg_seconds: f64,
    pub fg_seconds: f64,
    pub cg_candidates: usize,
    pub fg_candidates: usize,
    /// Every feasible fine-pass result, best first.
    pub ranked: Vec<Evaluated>,
}

impl LocalSolution {
    pub fn cost(&self) -> f64 {
        self.best.cost
    }
}

fn feasible_sorted(results: Vec<Result<Evaluated, String>>) -> Vec<Evaluated> {
    let mut v: Vec<Evaluated> = results.into_iter().filter_map(Result::ok).collect();
    v.sort_by(rank);
    v
}

/// Coarse pass over every block in the tray, then a fine pass around the
/// coarse winner with its block fixed.
pub fn solve_local(p: &Problem, opts: &OptOptions) -> Result<LocalSolution, OptError> {
    let t0 = Instant::now();
    let cg = candidate_grid(p, Resolution::Coarse, None, opts)?;
    let cg_res = evaluate_all(&cg, p);
    if let Some(dir) = &opts.dump_dir {
        let _ = dump(&dir.join(format!("cg_k{}.csv", p.region.k_loc)), &cg, &cg_res);
    }
    let cg_ranked = feasible_sorted(cg_res);
    let anchor = cg_ranked.first().ok_or(OptError::Unsolvable)?.clone();
    let cg_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let fg = candidate_grid(p, Resolution::Fine, Some(&anchor.candidate), opts)?;
    let fg_res = evaluate_all(&fg, p);
    if let Some(dir) = &opts.dump_dir {
        let _ = dump(&dir.join(format!("fg_k{}.csv", p.region.k_loc)), &fg, &fg_res);
    }
    let ranked = feasible_sorted(fg_res);
    let best = ranked.first().cloned().unwrap_or_else(|| anchor.clone());
    let fg_seconds = t1.elapsed().as_secs_f64();
    log::debug!(
        "region k_loc={} cg {} cands best {:.2} | fg {} cands best {:.2}",
        p.region.k_loc,
        cg.len(),
        anchor.cost,
        fg.len(),
        best.cost
    );
    Ok(LocalSolution {
        best,
        cg_cost: anchor.cost,
        cg_seconds,
        fg_seconds,
        cg_candidates: cg.len(),
        fg_candidates: fg.len(),
        ranked,
    })
}

/// Initial placement for a static assembly: the poses themselves, added to
/// the blocks already placed.
pub fn back_map(main: &Candidate, supports: &[PlacementEntry], frozen: &Placement, level: &Level) -> Result<Placement, OptError> {
    let mut p = frozen.clone();
    p.entries.push(main.entry());
    p.entries.extend(supports.iter().copied());
    if placement_feasible(&p, level)?.is_feasible() {
        Ok(p)
    } else {
        Err(OptError::Unsupportable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn ev(l: u32, x: f64, cost: f64) -> Evaluated {
        Evaluated {
            candidate: Candidate { e1: 3, main_block: l, pos: Vec2::new(x, 0.0), angle: 0.0 },
            cost,
            supports: vec![],
            chain: Chain { events: vec![], path: vec![], closest: cost, reached: false, end: BallState::default() },
        }
    }

    #[test]
    fn ties_go_to_the_smaller_block() {
        let v = vec![ev(2, 0.0, 1.0), ev(1, 5.0, 1.0), ev(3, 0.0, 2.0)];
        assert_eq!(argmin(&v), Some(1));
        assert_eq!(argmin(&v[..1]), Some(0));
    }

    #[test]
    fn x_grid_covers_a_100px_region_with_5_columns() {
        let xs = x_grid(0.0, 100.0, COARSE_STEP);
        assert_eq!(xs, vec![10.0, 30.0, 50.0, 70.0, 90.0]);
        let _ = Rect::new(Vec2::ZERO, Vec2::ZERO);
    }
}
