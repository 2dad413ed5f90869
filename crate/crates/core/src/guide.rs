//! Geometry-only guide path, the local region where a recorded trajectory
//! departs from it, and the local target set inside that region.

use crate::geometry::{nearest_on_polyline, resample_polyline, Rect, Vec2};
use crate::level::Level;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

pub const GRID_CELL: f64 = 10.0;
pub const DEFAULT_EPS1: f64 = 10.0;
pub const DEFAULT_EPS2: f64 = 60.0;
pub const REGION_MARGIN: f64 = 40.0;
/// Half-width (in samples) of the window used when no pair falls in the band.
pub const FALLBACK_WINDOW: usize = 10;
/// Spacing used when clipping the guide path to a region.
const CLIP_SPACING: f64 = 2.0;
/// Spacing used when checking straight shortcuts for clearance.
const CHECK_SPACING: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidePath {
    pub waypoints: Vec<Vec2>,
}

impl GuidePath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GuideError {
    #[error("no collision-free path from the ball start to the target")]
    NoPath,
}

/// Occupancy grid over the level bounds, obstacles inflated by the ball radius.
struct Grid<'a> {
    level: &'a Level,
    nx: usize,
    ny: usize,
    free: Vec<bool>,
}

impl<'a> Grid<'a> {
    fn new(level: &'a Level) -> Self {
        let b = level.bounds;
        let nx = (b.width() / GRID_CELL).ceil().max(1.0) as usize;
        let ny = (b.height() / GRID_CELL).ceil().max(1.0) as usize;
        let mut g = Grid { level, nx, ny, free: vec![false; nx * ny] };
        for j in 0..ny {
            for i in 0..nx {
                let c = g.center(i, j);
                g.free[j * nx + i] = b.contains(c) && clear(level, c);
            }
        }
        g
    }

    fn center(&self, i: usize, j: usize) -> Vec2 {
        let b = self.level.bounds;
        Vec2::new(b.min.x + (i as f64 + 0.5) * GRID_CELL, b.min.y + (j as f64 + 0.5) * GRID_CELL)
    }

    fn cell_of(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Free cell nearest to `p` (ties by index) satisfying `ok`.
    fn nearest_free(&self, p: Vec2, ok: impl Fn(Vec2) -> bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for idx in 0..self.free.len() {
            if !self.free[idx] {
                continue;
            }
            let (i, j) = self.cell_of(idx);
            let c = self.center(i, j);
            let d = c.distance(p);
            if best.is_none_or(|(bd, _)| d < bd) && ok(c) {
                best = Some((d, idx));
            }
        }
        best.map(|(_, idx)| idx)
    }

    fn astar(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        #[derive(PartialEq)]
        struct Node(f64, usize);
        impl Eq for Node {}
        impl PartialOrd for Node {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Node {
            // min-heap on f, then on index
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }

        let (gx, gy) = self.cell_of(goal);
        let goal_c = self.center(gx, gy);
        let h = |idx: usize| {
            let (i, j) = self.cell_of(idx);
            self.center(i, j).distance(goal_c)
        };
        let n = self.free.len();
        let mut g = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        g[start] = 0.0;
        open.push(Node(h(start), start));
        while let Some(Node(_, cur)) = open.pop() {
            if closed[cur] {
                continue;
            }
            if cur == goal {
                let mut path = vec![cur];
                let mut c = cur;
                while parent[c] != usize::MAX {
                    c = parent[c];
                    path.push(c);
                }
                path.reverse();
                return Some(path);
            }
            closed[cur] = true;
            let (ci, cj) = self.cell_of(cur);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (ci as i64 + di, cj as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
                        continue;
                    }
                    let at = |i: i64, j: i64| self.free[j as usize * self.nx + i as usize];
                    if !at(ni, nj) {
                        continue;
                    }
                    // no squeezing diagonally past a blocked corner
                    if di != 0 && dj != 0 && (!at(ci as i64 + di, cj as i64) || !at(ci as i64, cj as i64 + dj)) {
                        continue;
                    }
                    let nb = nj as usize * self.nx + ni as usize;
                    let step = if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 } * GRID_CELL;
                    let cand = g[cur] + step;
                    if cand < g[nb] {
                        g[nb] = cand;
                        parent[nb] = cur;
                        open.push(Node(cand + h(nb), nb));
                    }
                }
            }
        }
        None
    }
}

/// The ball centred at `c` does not penetrate any environment block.
fn clear(level: &Level, c: Vec2) -> bool {
    level
        .env
        .iter()
        .all(|e| e.posed().signed_distance(c) >= level.ball_radius - 1e-9)
}

fn segment_clear(level: &Level, a: Vec2, b: Vec2) -> bool {
    let n = (a.distance(b) / CHECK_SPACING).ceil().max(1.0) as usize;
    (0..=n).all(|i| clear(level, a.lerp(b, i as f64 / n as f64)))
}

/// Greedy shortcutting: from each kept point jump to the farthest point
/// still reachable in a straight, collision-free line.
fn shortcut(level: &Level, pts: &[Vec2]) -> Vec<Vec2> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !segment_clear(level, pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

pub fn plan_guide_path(level: &Level) -> Result<GuidePath, GuideError> {
    let grid = Grid::new(level);
    let start = level.ball_start.pos;
    let s = grid
        .nearest_free(start, |c| segment_clear(level, start, c))
        .ok_or(GuideError::NoPath)?;
    let (goal_pt, goal) = if clear(level, level.target) {
        let g = grid
            .nearest_free(level.target, |c| segment_clear(level, c, level.target))
            .ok_or(GuideError::NoPath)?;
        (level.target, g)
    } else {
        let g = grid
            .nearest_free(level.target, |c| c.distance(level.target) <= level.target_eps)
            .ok_or(GuideError::NoPath)?;
        let (i, j) = grid.cell_of(g);
        (grid.center(i, j), g)
    };
    let cells = grid.astar(s, goal).ok_or(GuideError::NoPath)?;
    let mut pts = vec![start];
    for idx in cells {
        let (i, j) = grid.cell_of(idx);
        pts.push(grid.center(i, j));
    }
    if pts.last() != Some(&goal_pt) {
        pts.push(goal_pt);
    }
    Ok(GuidePath { waypoints: shortcut(level, &pts) })
}

// ---------------------------------------------------------------------------
// Local region

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRegion {
    pub rect: Rect,
    /// Bounding box of the qualifying pairs before the margin is added.
    pub pre_margin: Rect,
    pub k_loc: usize,
    /// Trajectory samples inside `rect`, as (step, position).
    pub gamma_in_loc: Vec<(usize, Vec2)>,
    /// Guide path clipped to `rect`, densely resampled.
    pub gamma_g_loc: Vec<Vec2>,
    /// Built from the fallback window rather than the deviation band.
    pub fallback: bool,
}

/// Deviation of every trajectory sample from the guide polyline, with the
/// nearest guide point.
pub fn deviations(gamma_in: &[Vec2], gamma_g: &[Vec2]) -> Vec<(f64, Vec2)> {
    gamma_in
        .iter()
        .map(|&v| {
            let (u, d, _) = nearest_on_polyline(v, gamma_g);
            (d, u)
        })
        .collect()
}

pub fn compute_local_region(gamma_in: &[Vec2], gamma_g: &[Vec2], eps1: f64, eps2: f64) -> Option<LocalRegion> {
    compute_local_region_with_margin(gamma_in, gamma_g, eps1, eps2, REGION_MARGIN)
}

pub fn compute_local_region_with_margin(
    gamma_in: &[Vec2],
    gamma_g: &[Vec2],
    eps1: f64,
    eps2: f64,
    margin: f64,
) -> Option<LocalRegion> {
    if gamma_in.is_empty() || gamma_g.is_empty() {
        return None;
    }
    let dev = deviations(gamma_in, gamma_g);
    let band: Vec<usize> = (0..dev.len()).filter(|&k| dev[k].0 >= eps1 && dev[k].0 <= eps2).collect();
    let (picked, fallback) = if band.is_empty() {
        let k = (0..dev.len()).find(|&k| dev[k].0 > eps1)?;
        let lo = k.saturating_sub(FALLBACK_WINDOW);
        let hi = (k + FALLBACK_WINDOW).min(dev.len() - 1);
        ((lo..=hi).collect::<Vec<_>>(), true)
    } else {
        (band, false)
    };
    let k_loc = if fallback {
        (0..dev.len()).find(|&k| dev[k].0 > eps1)?
    } else {
        picked[0]
    };
    let pre_margin = Rect::bounding(picked.iter().flat_map(|&k| [gamma_in[k], dev[k].1]))?;
    let rect = pre_margin.expanded(margin);
    let gamma_in_loc = gamma_in
        .iter()
        .enumerate()
        .filter(|(_, p)| rect.contains(**p))
        .map(|(k, p)| (k, *p))
        .collect();
    let gamma_g_loc = clip_guide(gamma_g, &rect, dev[k_loc].1);
    Some(LocalRegion { rect, pre_margin, k_loc, gamma_in_loc, gamma_g_loc, fallback })
}

/// The contiguous stretch of the (resampled) guide inside `rect` that
/// contains the guide point closest to `anchor`.
fn clip_guide(gamma_g: &[Vec2], rect: &Rect, anchor: Vec2) -> Vec<Vec2> {
    let mut dense = resample_polyline(gamma_g, CLIP_SPACING);
    // make sure the anchor itself is representable
    let (_, _, seg) = nearest_on_polyline(anchor, &dense);
    dense.insert(seg + 1, anchor);
    let at = seg + 1;
    let mut lo = at;
    while lo > 0 && rect.contains(dense[lo - 1]) {
        lo -= 1;
    }
    let mut hi = at;
    while hi + 1 < dense.len() && rect.contains(dense[hi + 1]) {
        hi += 1;
    }
    dense[lo..=hi].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTargetSet {
    pub center: Vec2,
    pub radius: f64,
}

impl LocalTargetSet {
    /// Strict membership: the boundary circle is outside.
    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) < self.radius
    }
}

pub fn local_target(region: &LocalRegion, eps: f64) -> LocalTargetSet {
    LocalTargetSet {
        center: *region.gamma_g_loc.last().expect("clipped guide is never empty"),
        radius: eps,
    }
}
