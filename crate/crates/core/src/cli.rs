//! Command-line front end.
//!
//! Exit codes: 0 when the level is solved (or the command succeeded),
//! 2 when the solver or simulation did not reach the target, 1 on usage
//! or I/O errors.

use crate::export::{svg, trajectory_csv, Plot};
use crate::guide::plan_guide_path;
use crate::learner::write_log_line;
use crate::level::{load_level, Level, Placement};
use crate::physics::simulate;
use crate::solver::{solve, SolveOptions, SolveReport, DEFAULT_BUDGET};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "bubble", version, about = "Solve and simulate ball-and-blocks physics puzzles")]
struct Cli {
    /// Worker threads for candidate evaluation (results do not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Trial budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use random shooting with this many coarse samples instead of the grid.
    #[arg(long)]
    random: Option<usize>,
    /// Include wall-clock times in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the solver on one level.
    Solve {
        level: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
        /// Directory for report.json, placement.json, trajectory.csv,
        /// plot.svg and fits.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a level with a given placement and print the trajectory CSV.
    Simulate {
        level: PathBuf,
        #[arg(long)]
        placement: Option<PathBuf>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the guide path of a level as JSON.
    Plan { level: PathBuf },
    /// Solve every level in a directory and print a table.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
    },
    /// Draw a level, optionally with a placement and its trajectory.
    Plot {
        level: PathBuf,
        #[arg(long)]
        placement: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read_level(path: &Path) -> Result<Level, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let mut level = load_level(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    if level.name.is_empty() {
        level.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(level)
}

fn read_placement(path: Option<&PathBuf>) -> Result<Placement, Failure> {
    match path {
        None => Ok(Placement::empty()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
            Ok(Placement::from_json(&text)?)
        }
    }
}

fn solve_options(a: &SolveArgs) -> SolveOptions {
    SolveOptions { budget: a.budget, seed: a.seed, random_samples: a.random, timings: a.timings, ..SolveOptions::default() }
}

fn write_outputs(dir: &Path, level: &Level, r: &SolveReport) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(r)? + "\n")?;
    std::fs::write(dir.join("placement.json"), r.placement.to_json() + "\n")?;
    let mut log = Vec::new();
    for f in &r.fits {
        write_log_line(&mut log, f)?;
    }
    std::fs::write(dir.join("fits.jsonl"), log)?;
    let tr = simulate(level, &r.placement)?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&tr))?;
    let pts = tr.positions();
    let plot = Plot {
        placement: Some(&r.placement),
        guide: r.guide.as_ref(),
        trajectories: vec![(&pts, "steelblue")],
        regions: r.attempts.iter().map(|a| a.rect).collect(),
    };
    std::fs::write(dir.join("plot.svg"), svg(level, &plot))?;
    Ok(())
}

fn run_command(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Solve { level, opts, out } => {
            let level = read_level(&level)?;
            let r = solve(&level, &solve_options(&opts))?;
            match out {
                Some(dir) => write_outputs(&dir, &level, &r)?,
                None => println!("{}", serde_json::to_string_pretty(&r)?),
            }
            Ok(if r.solved() { 0 } else { 2 })
        }
        Command::Simulate { level, placement, out } => {
            let level = read_level(&level)?;
            let p = read_placement(placement.as_ref())?;
            let tr = simulate(&level, &p)?;
            let csv = trajectory_csv(&tr);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            eprintln!("outcome: {:?}", tr.outcome);
            Ok(if tr.outcome.is_success() { 0 } else { 2 })
        }
        Command::Plan { level } => {
            let level = read_level(&level)?;
            match plan_guide_path(&level) {
                Ok(g) => {
                    println!("{}", serde_json::to_string_pretty(&g)?);
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(2)
                }
            }
        }
        Command::Bench { dir, opts } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let so = solve_options(&opts);
            println!("{:<24} {:>8} {:>7} {:>8} {:>10}", "level", "status", "trials", "regions", "seconds");
            let mut solved = 0;
            for f in &files {
                let level = read_level(f)?;
                let t = Instant::now();
                let r = solve(&level, &so)?;
                let status = if r.solved() { "solved" } else { "failed" };
                solved += r.solved() as usize;
                println!("{:<24} {:>8} {:>7} {:>8} {:>10.3}", level.name, status, r.trials, r.regions, t.elapsed().as_secs_f64());
            }
            println!("solved {solved}/{}", files.len());
            Ok(if solved == files.len() { 0 } else { 2 })
        }
        Command::Plot { level, placement, out } => {
            let level = read_level(&level)?;
            let p = read_placement(placement.as_ref())?;
            let tr = simulate(&level, &p)?;
            let pts = tr.positions();
            let guide = plan_guide_path(&level).ok();
            let plot = Plot { placement: Some(&p), guide: guide.as_ref(), trajectories: vec![(&pts, "steelblue")], regions: vec![] };
            std::fs::write(out, svg(&level, &plot))?;
            Ok(0)
        }
    }
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("BUBBLE_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run_command(cli) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
