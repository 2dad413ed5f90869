//! Supporting blocks: keep the main block where the optimizer put it.
//!
//! A cheap geometric balance test decides which side needs help; the final
//! word is a short ball-free settle run of the whole assembly.

use super::scene::{Scene, SceneBody};
use super::OptError;
use crate::geometry::{Posed, Shape, Vec2};
use crate::kinematics::Owner;
use crate::level::{placement_feasible, Level, LevelError, Placement, PlacementEntry};
use crate::physics::block_drift;
use crate::physics::collide::collide;
use std::f64::consts::FRAC_PI_2;

/// A contact supports the main block when its normal is within the
/// friction cone of straight up (cos of about 16.7 degrees).
pub const SUPPORT_NORMAL_Y: f64 = 0.957;
/// The centre of mass must sit this far inside the support span (px).
pub const COM_MARGIN: f64 = 0.5;
pub const MAX_SUPPORTS: usize = 2;
/// Settle run length: one second.
pub const SETTLE_STEPS: usize = 60;
pub const DRIFT_PX: f64 = 2.0;
pub const DRIFT_DEG: f64 = 2.0;
/// Largest gap left between a support's top and the vertex it holds (px).
pub const SUPPORT_GAP: f64 = 1.0;
/// A support under a tilted block reaches this far inside the held vertex,
/// so the block's face rests on the support's corner instead of two
/// corners meeting (px).
const SUPPORT_INSET: f64 = 1.0;
/// How far the main block is pushed down to expose its resting contacts.
const PROBE_DEPTH: f64 = SUPPORT_GAP + 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Geometric balance: `Ok` when the centre of mass lies over the span of
/// near-vertical resting contacts, otherwise the side that needs support.
pub fn balance(main: &Posed, scene: &Scene) -> Result<(), Side> {
    let probe = Posed::new(main.shape, main.pos + Vec2::new(0.0, PROBE_DEPTH), main.angle);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in &scene.bodies {
        for m in collide(&b.posed, &probe) {
            if m.penetration > 0.0 && -m.normal.y >= SUPPORT_NORMAL_Y {
                lo = lo.min(m.point.x);
                hi = hi.max(m.point.x);
            }
        }
    }
    let x = main.pos.x;
    if lo.is_finite() && x >= lo + COM_MARGIN && x <= hi - COM_MARGIN {
        Ok(())
    } else if lo.is_finite() && x < lo + COM_MARGIN {
        Err(Side::Left)
    } else if lo.is_finite() {
        Err(Side::Right)
    } else {
        // nothing underneath at all: prop up the lower end first
        let v = main.vertices().map(|v| lowest(&v));
        match v {
            Some(p) if p.x < x => Err(Side::Left),
            _ => Err(Side::Right),
        }
    }
}

fn lowest(v: &[Vec2]) -> Vec2 {
    *v.iter()
        .max_by(|a, b| a.y.total_cmp(&b.y).then(b.x.total_cmp(&a.x)))
        .expect("non-empty")
}

/// The lowest vertex of `main` on `side` of its centre.
fn pivot_vertex(main: &Posed, side: Side) -> Option<Vec2> {
    let v = main.vertices()?;
    let on_side: Vec<Vec2> = v
        .iter()
        .copied()
        .filter(|p| match side {
            Side::Left => p.x < main.pos.x - 1e-9,
            Side::Right => p.x > main.pos.x + 1e-9,
        })
        .collect();
    if on_side.is_empty() {
        None
    } else {
        Some(lowest(&on_side))
    }
}

fn is_axis_aligned(angle: f64) -> bool {
    (2.0 * angle).sin().abs() < 1e-6
}

/// One support under `vertex`, or `None` when nothing in `pool` fits.
fn find_support(level: &Level, scene: &Scene, main: &Posed, vertex: Vec2, side: Side, pool: &[u32]) -> Option<PlacementEntry> {
    let dir = match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
    };
    let mut options: Vec<(f64, u32, f64)> = Vec::new();
    for &id in pool {
        let t = level.template(id)?;
        if matches!(t.shape(), Shape::Circle { .. }) {
            continue;
        }
        options.push((t.area(), id, 0.0));
        if t.width != t.height {
            options.push((t.area(), id, FRAC_PI_2));
        }
    }
    options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    for (_, id, angle) in options {
        let t = level.template(id)?;
        let (sw, sh) = if angle == 0.0 { (t.width, t.height) } else { (t.height, t.width) };
        // a flat main block can rest on the support's face; a tilted one
        // would cut into it, so the support goes just outside the vertex
        let (x, clearance) = if is_axis_aligned(main.angle) {
            (vertex.x - dir * sw / 2.0, 0.0)
        } else {
            let slope = main.angle.tan().abs();
            (vertex.x + dir * (sw / 2.0 - SUPPORT_INSET), SUPPORT_INSET * slope + 1e-3)
        };
        let Some(p) = scene.drop_shape(t.shape(), x, vertex.y + clearance + sh / 2.0, angle) else {
            continue;
        };
        let gap = (p.pos.y - sh / 2.0) - vertex.y;
        if (0.0..=SUPPORT_GAP).contains(&gap) {
            return Some(PlacementEntry { id, pos: p.pos, angle });
        }
    }
    None
}

/// Supports that keep `main` in place, given the already placed `frozen`
/// blocks and the ids still available in `pool` (the main block's own id
/// is skipped). An empty list means the main block already rests.
pub fn place_supports(
    level: &Level,
    frozen: &Placement,
    main: &PlacementEntry,
    pool: &[u32],
) -> Result<Vec<PlacementEntry>, OptError> {
    let t = level.template(main.id).ok_or(LevelError::UnknownTemplate(main.id))?;
    let main_posed = t.posed(main.pos, main.angle);
    let base = Scene::new(level, frozen);
    let mut supports: Vec<PlacementEntry> = Vec::new();
    loop {
        let with_supports = base.with(supports.iter().map(|e| SceneBody {
            owner: Owner::Block(e.id),
            posed: level.template(e.id).expect("pool ids exist").posed(e.pos, e.angle),
        }));
        match balance(&main_posed, &with_supports) {
            Ok(()) => break,
            Err(side) => {
                if supports.len() >= MAX_SUPPORTS {
                    return Err(OptError::Unsupportable);
                }
                let vertex = pivot_vertex(&main_posed, side).ok_or(OptError::Unsupportable)?;
                let scene = with_supports.with([SceneBody { owner: Owner::Block(main.id), posed: main_posed }]);
                let free: Vec<u32> = pool
                    .iter()
                    .copied()
                    .filter(|&id| id != main.id && !supports.iter().any(|s| s.id == id) && !frozen.contains(id))
                    .collect();
                let s = find_support(level, &scene, &main_posed, vertex, side, &free).ok_or(OptError::Unsupportable)?;
                supports.push(s);
            }
        }
    }
    let mut assembly = frozen.clone();
    assembly.entries.push(*main);
    assembly.entries.extend(supports.iter().copied());
    if !placement_feasible(&assembly, level)?.is_feasible() {
        return Err(OptError::Unsupportable);
    }
    let (dp, da) = block_drift(level, &assembly, SETTLE_STEPS)?;
    if dp >= DRIFT_PX || da >= DRIFT_DEG {
        return Err(OptError::Unsupportable);
    }
    Ok(supports)
}
