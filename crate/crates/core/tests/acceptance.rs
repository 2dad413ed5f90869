// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// fails. Runs without the libtest harness so the lines are always visible.

use bubble_core::geometry::Vec2;
use bubble_core::guide::{compute_local_region, compute_local_region_with_margin, local_target, plan_guide_path};
use bubble_core::kinematics::{bounce_with_normal, ContactType, KinParams, Owner, Surface, TypeParams};
use bubble_core::learner::{extract_samples, fit, fit_all, predict, EventSample};
use bubble_core::level::{load_level, BallState, Level, Placement};
use bubble_core::optimizer::{argmin, solve_local, OptOptions, Problem};
use bubble_core::physics::{simulate, DT, GRAVITY};
use bubble_core::solver::{solve, SolveOptions, SolveReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

type Verdict = Result<String, String>;
type Check<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn levels_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../levels")
}

fn bundled_levels() -> Vec<(PathBuf, Level)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(levels_dir())
        .expect("levels directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let mut level = load_level(&std::fs::read_to_string(&p).unwrap()).unwrap();
            if level.name.is_empty() {
                level.name = p.file_stem().unwrap().to_string_lossy().into_owned();
            }
            (p, level)
        })
        .collect()
}

struct Solved {
    level: Level,
    report: SolveReport,
}

fn solve_all(levels: &[(PathBuf, Level)]) -> (Vec<Solved>, f64) {
    let opts = SolveOptions { timings: true, ..SolveOptions::default() };
    let t = Instant::now();
    let out = levels
        .iter()
        .map(|(_, level)| Solved { level: level.clone(), report: solve(level, &opts).expect("solve") })
        .collect();
    (out, t.elapsed().as_secs_f64())
}

// 1 -------------------------------------------------------------------------

fn level_suite(runs: &[Solved], seconds: f64) -> Verdict {
    let good: Vec<&Solved> = runs.iter().filter(|r| r.report.solved() && r.report.trials <= 5).collect();
    let detail: Vec<String> = runs
        .iter()
        .map(|r| format!("{}:{}", r.level.name, if r.report.solved() { r.report.trials.to_string() } else { "x".into() }))
        .collect();
    let msg = format!("{}/{} solved within 5 trials in {seconds:.1} s [{}]", good.len(), runs.len(), detail.join(" "));
    if runs.len() == 10 && good.len() >= 8 && seconds <= 300.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 2 -------------------------------------------------------------------------

fn region_time(runs: &[Solved]) -> Verdict {
    let mut worst = 0.0f64;
    let mut n = 0;
    for r in runs {
        for a in &r.report.attempts {
            let (Some(cg), Some(fg)) = (a.cg_seconds, a.fg_seconds) else {
                return Err(format!("{}: attempt without timings", r.level.name));
            };
            worst = worst.max(cg + fg);
            n += 1;
        }
    }
    let msg = format!("{n} region passes, slowest CG+FG {worst:.3} s");
    if worst <= 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 3 -------------------------------------------------------------------------

fn cli_report(level: &Path, jobs: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_bubble"))
        .args(["--jobs", jobs, "solve", "--seed", "7"])
        .arg(level)
        .output()
        .expect("run bubble");
    assert!(matches!(out.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism(levels: &[(PathBuf, Level)]) -> Verdict {
    let mut differ = Vec::new();
    for (path, level) in levels {
        let a = cli_report(path, "1");
        let b = cli_report(path, "4");
        if a != b || a.is_empty() {
            differ.push(level.name.clone());
        }
    }
    if differ.is_empty() {
        Ok(format!("{} levels, byte-identical reports with 1 and 4 worker threads", levels.len()))
    } else {
        Err(format!("reports differ on {}", differ.join(", ")))
    }
}

// 4 -------------------------------------------------------------------------

// Nearest point by enumerating every segment; written out separately from
// the library on purpose.
fn brute_nearest(p: Vec2, poly: &[Vec2]) -> (f64, Vec2) {
    let mut best = (f64::INFINITY, poly[0]);
    for i in 0..poly.len() - 1 {
        let (a, b) = (poly[i], poly[i + 1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = Vec2::new(a.x + dx * t, a.y + dy * t);
        let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
        if d < best.0 {
            best = (d, q);
        }
    }
    best
}

fn brute_aabb(gamma_in: &[Vec2], gamma_g: &[Vec2], lo: f64, hi: f64) -> Option<(Vec2, Vec2)> {
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for &v in gamma_in {
        let (d, u) = brute_nearest(v, gamma_g);
        if d >= lo && d <= hi {
            any = true;
            for p in [v, u] {
                min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
                max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
            }
        }
    }
    any.then_some((min, max))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<Vec2>, Vec<Vec2>) {
    let n = rng.gen_range(3..10);
    let mut guide: Vec<Vec2> = (0..n)
        .map(|i| Vec2::new(i as f64 * 700.0 / (n - 1) as f64 + 50.0 + rng.gen_range(-20.0..20.0), rng.gen_range(100.0..500.0)))
        .collect();
    guide.sort_by(|a, b| a.x.total_cmp(&b.x));
    // a trajectory that starts on the guide and drifts away from it
    let m = rng.gen_range(40..200);
    let drift = rng.gen_range(80.0..200.0);
    let traj = (0..m)
        .map(|k| {
            let s = k as f64 / (m - 1) as f64;
            let x = 50.0 + 700.0 * s;
            let (_, on) = brute_nearest(Vec2::new(x, 300.0), &guide);
            Vec2::new(x + rng.gen_range(-3.0..3.0), on.y + drift * s * s + rng.gen_range(-3.0..3.0))
        })
        .collect();
    (traj, guide)
}

fn region_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut draws) = (0, 0);
    while checked < 100 {
        draws += 1;
        let (traj, guide) = random_pair(&mut rng);
        let Some((min, max)) = brute_aabb(&traj, &guide, 10.0, 60.0) else { continue };
        let Some(r) = compute_local_region(&traj, &guide, 10.0, 60.0) else {
            return Err(format!("draw {draws}: no region where the oracle has one"));
        };
        if r.fallback || r.pre_margin.min != min || r.pre_margin.max != max {
            return Err(format!("draw {draws}: {:?} vs oracle {min:?}..{max:?}", r.pre_margin));
        }
        let with_margin = compute_local_region_with_margin(&traj, &guide, 10.0, 60.0, 0.0).unwrap();
        if with_margin.rect != r.pre_margin {
            return Err(format!("draw {draws}: zero margin changes the rectangle"));
        }
        checked += 1;
    }
    Ok(format!("100 random pairs ({draws} draws), pre-margin rectangle equals the brute-force box exactly"))
}

// 5 -------------------------------------------------------------------------

const FLOOR: Surface = Surface::Segment {
    a: Vec2 { x: 0.0, y: 580.0 },
    b: Vec2 { x: 800.0, y: 580.0 },
    owner: Owner::Env(0),
};

fn bounce_samples(rng: &mut ChaCha8Rng, truth: &TypeParams, n: usize, noise: Option<Normal<f64>>) -> Vec<EventSample> {
    (0..n)
        .map(|_| {
            let theta: f64 = rng.gen_range(-0.6..0.6);
            let normal = Vec2::new(theta.sin(), -theta.cos());
            let speed = rng.gen_range(80.0..600.0);
            let dir = rng.gen_range(-1.2..1.2f64);
            let vel = Vec2::new(dir.sin(), dir.cos()) * speed;
            let s_in = BallState::new(Vec2::new(rng.gen_range(100.0..700.0), 565.0), vel);
            let mut s = EventSample { s_in, surface: FLOOR, normal, j: ContactType::BounceOffSegment, y: s_in, duration: DT };
            s.y = predict(&s, truth);
            if let Some(nd) = noise {
                s.y.vel += Vec2::new(nd.sample(rng), nd.sample(rng));
            }
            s
        })
        .collect()
}

fn planted_recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prior = KinParams::prior();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let truth = TypeParams { e_n: rng.gen_range(0.1..0.95), e_t: rng.gen_range(0.3..1.0), a_roll: 20.0 };
        let s = bounce_samples(&mut rng, &truth, 6, None);
        let r = fit(&s, ContactType::BounceOffSegment, &prior).map_err(|e| e.to_string())?;
        let got = r.beta_new.bounce_off_segment;
        worst = worst.max((got.e_n - truth.e_n).abs()).max((got.e_t - truth.e_t).abs());
    }
    if worst > 1e-6 {
        return Err(format!("noiseless recovery off by {worst:e}"));
    }
    let noise = Normal::new(0.0, 5.0).unwrap();
    let mut worse = 0;
    for _ in 0..100 {
        let truth = TypeParams { e_n: rng.gen_range(0.1..0.95), e_t: rng.gen_range(0.3..1.0), a_roll: 20.0 };
        let n = rng.gen_range(1..12);
        let s = bounce_samples(&mut rng, &truth, n, Some(noise));
        let r = fit(&s, ContactType::BounceOffSegment, &prior).map_err(|e| e.to_string())?;
        worse += (r.residual_after > r.residual_before) as usize;
    }
    let msg = format!("noiseless error {worst:.1e}; residual grew on {worse}/100 noisy sets");
    if worse == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 6 -------------------------------------------------------------------------

fn drop_scene(x: f64, y: f64, vx: f64) -> Level {
    load_level(&format!(
        r#"{{
        "name": "calibration",
        "bounds": {{"min": [0, 0], "max": [1600, 600]}},
        "ball": {{"start": [{x}, {y}, {vx}, 0], "radius": 15}},
        "target": {{"pos": [1500, 100], "eps": 15}},
        "horizon": 600,
        "env": [{{"shape": "rectangle", "pos": [800, 590], "w": 1600, "h": 20}}],
        "inventory": [{{"id": 1, "shape": "rectangle", "w": 100, "h": 20}}]
    }}"#
    ))
    .unwrap()
}

fn calibration() -> Verdict {
    let scene = drop_scene(100.0, 300.0, 150.0);
    let mut beta = KinParams::prior();
    let mut trials = 0;
    for _ in 0..3 {
        trials += 1;
        let tr = simulate(&scene, &Placement::empty()).map_err(|e| e.to_string())?;
        let (next, _) = fit_all(&extract_samples(&scene, &tr), &beta);
        let settled = next == beta;
        beta = next;
        if settled {
            break;
        }
    }
    // held-out drops the fit never saw
    let (mut worst_pos, mut worst_vel, mut events) = (0.0f64, 0.0f64, 0);
    for (x, y, vx) in [(120.0, 250.0, 100.0), (200.0, 380.0, 220.0), (150.0, 200.0, 60.0)] {
        let level = drop_scene(x, y, vx);
        let tr = simulate(&level, &Placement::empty()).map_err(|e| e.to_string())?;
        for s in extract_samples(&level, &tr) {
            let p = predict(&s, &beta.get(s.j));
            worst_pos = worst_pos.max(p.pos.distance(s.y.pos));
            let scale = s.y.vel.length();
            let dv = p.vel.distance(s.y.vel);
            worst_vel = worst_vel.max(if scale > 0.0 { dv / scale } else if dv == 0.0 { 0.0 } else { f64::INFINITY });
            events += 1;
        }
    }
    let msg = format!(
        "{trials} regression trials; {events} held-out events, worst position {worst_pos:.2} px, worst velocity {:.1}%",
        100.0 * worst_vel
    );
    if trials <= 3 && events > 0 && worst_pos <= 10.0 && worst_vel <= 0.10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 7 -------------------------------------------------------------------------

// Positions and velocities of the integrator are half a step apart; this is
// the energy it conserves exactly in free flight.
fn energy(s: &BallState, ground: f64) -> f64 {
    0.5 * s.vel.length_squared() + GRAVITY * (ground - s.pos.y) + 0.5 * GRAVITY * DT * s.vel.y
}

fn contact_scene(rng: &mut ChaCha8Rng) -> Level {
    let circle = rng.gen_bool(0.25);
    let material = if rng.gen_bool(0.5) { "wood" } else { "metal" };
    let angle: f64 = rng.gen_range(-0.7..0.7);
    let (env, top) = if circle {
        (format!(r#"{{"shape": "circle", "pos": [400, 400], "w": 80, "h": 80, "material": "{material}"}}"#), 40.0)
    } else {
        (format!(r#"{{"shape": "rectangle", "pos": [400, 400], "angle": {angle}, "w": 300, "h": 20, "material": "{material}"}}"#), 10.0)
    };
    // start just above the surface, heading roughly at it
    let off = rng.gen_range(-60.0..60.0);
    let gap = rng.gen_range(1.0..40.0);
    let up = if circle { Vec2::new(off / 80.0, -1.0).normalized() } else { Vec2::new(angle.sin(), -angle.cos()) };
    let along = Vec2::new(-up.y, up.x);
    let start = Vec2::new(400.0, 400.0) + up * (top + 15.0 + gap) + if circle { Vec2::new(0.0, 0.0) } else { along * off };
    let speed = rng.gen_range(0.0..500.0);
    let dir: f64 = rng.gen_range(-1.0..1.0);
    let vel = (up * -dir.cos() + along * dir.sin()) * speed;
    load_level(&format!(
        r#"{{
        "bounds": {{"min": [0, 0], "max": [800, 600]}},
        "ball": {{"start": [{}, {}, {}, {}], "radius": 15}},
        "target": {{"pos": [50, 50], "eps": 15}},
        "horizon": 45,
        "env": [{env}],
        "inventory": [{{"id": 1, "shape": "rectangle", "w": 100, "h": 20}}]
    }}"#,
        start.x, start.y, vel.x, vel.y
    ))
    .unwrap()
}

fn physics_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut step_rises, mut scene_rises) = (0, 0);
    let (mut worst_step, mut worst_scene) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let level = contact_scene(&mut rng);
        let tr = simulate(&level, &Placement::empty()).map_err(|e| e.to_string())?;
        let t = &tr.trajectory;
        // the impulse phase of every step, against the gravity-only velocity
        let mut bad = f64::NEG_INFINITY;
        for w in t.windows(2) {
            let free = w[0].vel + Vec2::new(0.0, GRAVITY * DT);
            let before = 0.5 * free.length_squared();
            bad = bad.max((0.5 * w[1].vel.length_squared() - before) / before.max(1.0));
        }
        worst_step = worst_step.max(bad);
        step_rises += (bad > 1e-6) as usize;
        // the whole scenario, position included
        let (e0, e1) = (energy(&t[0], 600.0), energy(t.last().unwrap(), 600.0));
        let rel = (e1 - e0) / e0.abs().max(1.0);
        worst_scene = worst_scene.max(rel);
        scene_rises += (rel > 1e-6) as usize;
    }
    let elastic = TypeParams { e_n: 1.0, e_t: 1.0, a_roll: 0.0 };
    let mut speed_err = 0.0f64;
    for _ in 0..1000 {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let n = Vec2::new(th.cos(), th.sin());
        let v = Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let out = bounce_with_normal(&BallState::new(Vec2::new(0.0, 0.0), v), n, &elastic);
        speed_err = speed_err.max((out.vel.length() - v.length()).abs() / v.length());
    }

    let mut flight_err = 0.0f64;
    for (vx, vy) in [(0.0, 0.0), (200.0, 0.0), (-150.0, 50.0)] {
        let level = load_level(&format!(
            r#"{{
            "bounds": {{"min": [0, 0], "max": [800, 2000]}},
            "ball": {{"start": [400, 50, {vx}, {vy}], "radius": 15}},
            "target": {{"pos": [50, 50], "eps": 15}},
            "horizon": 60,
            "env": [{{"shape": "rectangle", "pos": [400, 1990], "w": 800, "h": 20}}],
            "inventory": [{{"id": 1, "shape": "rectangle", "w": 100, "h": 20}}]
        }}"#
        ))
        .unwrap();
        let tr = simulate(&level, &Placement::empty()).map_err(|e| e.to_string())?;
        let p0 = tr.trajectory[0].pos;
        let exact = |t: f64| Vec2::new(p0.x + vx * t, p0.y + vy * t + 0.5 * GRAVITY * t * t);
        let span = exact(1.0).distance(p0);
        for (k, s) in tr.trajectory.iter().enumerate().take(61) {
            flight_err = flight_err.max(s.pos.distance(exact(k as f64 * DT)) / span);
        }
    }

    let msg = format!(
        "contact impulses added energy in {step_rises}/1000 scenarios (worst {worst_step:.1e}), \
         energy rose over {scene_rises}/1000 scenarios (worst {worst_scene:.1e}); elastic speed error {speed_err:.1e}; free flight within {:.2}%",
        100.0 * flight_err
    );
    if step_rises == 0 && scene_rises == 0 && speed_err <= 1e-12 && flight_err <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 8 -------------------------------------------------------------------------

fn optimizer_properties(runs: &[Solved]) -> Verdict {
    let mut passes = 0;
    for r in runs {
        for a in &r.report.attempts {
            if a.fg_cost > a.cg_cost {
                return Err(format!("{} trial {}: FG {} > CG {}", r.level.name, a.trial, a.fg_cost, a.cg_cost));
            }
            passes += 1;
        }
    }
    // permutation fuzz on the fine pass of each level's first region
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut shuffles = 0;
    for r in runs {
        let level = &r.level;
        let Ok(guide) = plan_guide_path(level) else { continue };
        let tr = simulate(level, &Placement::empty()).map_err(|e| e.to_string())?;
        let Some(region) = compute_local_region(&tr.positions(), &guide.waypoints, 10.0, 60.0) else { continue };
        let remaining: Vec<u32> = level.inventory.iter().map(|t| t.id).collect();
        let beta = KinParams::prior();
        let frozen = Placement::empty();
        let problem = Problem {
            level,
            region: &region,
            target: local_target(&region, level.target_eps),
            trajectory: &tr.trajectory,
            first_step: 0,
            frozen: &frozen,
            remaining: &remaining,
            beta: &beta,
        };
        let Ok(sol) = solve_local(&problem, &OptOptions::default()) else { continue };
        let mut items = sol.ranked.clone();
        let want = sol.ranked[0].candidate;
        for _ in 0..50 {
            items.shuffle(&mut rng);
            let got = items[argmin(&items).unwrap()].candidate;
            if got != want {
                return Err(format!("{}: argmin moved under a shuffle", level.name));
            }
            shuffles += 1;
        }
    }
    Ok(format!("FG <= CG on {passes} region passes; argmin stable over {shuffles} shuffles"))
}

// 9 -------------------------------------------------------------------------

fn closed_loop(runs: &[Solved]) -> Verdict {
    let mut n = 0;
    for r in runs.iter().filter(|r| r.report.solved()) {
        let tr = simulate(&r.level, &r.report.placement).map_err(|e| e.to_string())?;
        let hit = tr.trajectory.iter().any(|s| r.level.in_target_set(s));
        if !tr.outcome.is_success() || !hit {
            return Err(format!("{}: placement does not reach the target on replay", r.level.name));
        }
        n += 1;
    }
    Ok(format!("{n}/{n} solved placements reach the target on replay"))
}

fn main() {
    let levels = bundled_levels();
    let (runs, seconds) = solve_all(&levels);
    let checks: Vec<Check> = vec![
        ("level suite", Box::new(|| level_suite(&runs, seconds))),
        ("region optimization time", Box::new(|| region_time(&runs))),
        ("determinism", Box::new(|| determinism(&levels))),
        ("local region oracle", Box::new(region_oracle)),
        ("planted parameter recovery", Box::new(planted_recovery)),
        ("model vs simulator calibration", Box::new(calibration)),
        ("physics properties", Box::new(physics_properties)),
        ("optimizer properties", Box::new(|| optimizer_properties(&runs))),
        ("closed-loop verification", Box::new(|| closed_loop(&runs))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(msg) => println!("PASS {} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
