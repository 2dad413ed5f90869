//! Trajectory CSV and SVG plots.

use crate::geometry::{Posed, Rect, Shape, Vec2};
use crate::guide::GuidePath;
use crate::level::{Level, Placement};
use crate::physics::events::detect_events;
use crate::physics::{BodyRef, TrialRecord};
use std::fmt::Write as _;

/// One row per step: `k,x,y,vx,vy,event_kind,object_id`.
pub fn trajectory_csv(tr: &TrialRecord) -> String {
    let mut kind = vec![String::new(); tr.trajectory.len()];
    let mut object = vec![String::new(); tr.trajectory.len()];
    for e in detect_events(tr) {
        for k in e.start..=e.end.min(tr.trajectory.len().saturating_sub(1)) {
            kind[k] = e.kind.name().to_string();
            object[k] = e.object.map(object_id).unwrap_or_default();
        }
    }
    let mut s = String::from("k,x,y,vx,vy,event_kind,object_id\n");
    for (k, b) in tr.trajectory.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{},{},{},{},{}", b.pos.x, b.pos.y, b.vel.x, b.vel.y, kind[k], object[k]);
    }
    s
}

fn object_id(b: BodyRef) -> String {
    match b {
        BodyRef::Ball => "ball".into(),
        BodyRef::Block(id) => format!("block{id}"),
        BodyRef::Env(q) => format!("env{q}"),
    }
}

/// What goes into a plot besides the level itself.
#[derive(Debug, Default, Clone)]
pub struct Plot<'a> {
    pub placement: Option<&'a Placement>,
    pub guide: Option<&'a GuidePath>,
    pub trajectories: Vec<(&'a [Vec2], &'a str)>,
    pub regions: Vec<Rect>,
}

fn shape_svg(s: &mut String, p: &Posed, fill: &str) {
    match p.shape {
        Shape::Circle { radius } => {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{fill}" stroke="black"/>"#, p.pos.x, p.pos.y, radius);
        }
        Shape::Box { .. } => {
            let pts: Vec<String> = p.vertices().unwrap().iter().map(|v| format!("{:.2},{:.2}", v.x, v.y)).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{fill}" stroke="black"/>"#, pts.join(" "));
        }
    }
}

fn polyline(s: &mut String, pts: &[Vec2], color: &str, dash: bool) {
    if pts.is_empty() {
        return;
    }
    let p: Vec<String> = pts.iter().map(|v| format!("{:.2},{:.2}", v.x, v.y)).collect();
    let d = if dash { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{d}/>"#, p.join(" "));
}

pub fn svg(level: &Level, plot: &Plot) -> String {
    let b = level.bounds;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="{} {} {} {}" width="{}" height="{}">"#,
        b.min.x,
        b.min.y,
        b.width(),
        b.height(),
        b.width(),
        b.height()
    );
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white"/>"#, b.min.x, b.min.y, b.width(), b.height());
    for e in &level.env {
        shape_svg(&mut s, &e.posed(), "#777777");
    }
    if let Some(p) = plot.placement {
        for e in &p.entries {
            if let Some(t) = level.template(e.id) {
                shape_svg(&mut s, &t.posed(e.pos, e.angle), "#c8964b");
            }
        }
    }
    for r in &plot.regions {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="orange" stroke-dasharray="3,3"/>"#,
            r.min.x,
            r.min.y,
            r.width(),
            r.height()
        );
    }
    if let Some(g) = plot.guide {
        polyline(&mut s, &g.waypoints, "green", true);
    }
    for (pts, color) in &plot.trajectories {
        polyline(&mut s, pts, color, false);
    }
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="red" stroke-width="2"/>"#,
        level.target.x, level.target.y, level.target_eps
    );
    let st = level.ball_start.pos;
    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="steelblue"/>"#, st.x, st.y, level.ball_radius);
    s.push_str("</svg>\n");
    s
}
