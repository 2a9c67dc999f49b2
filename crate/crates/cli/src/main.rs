use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use lattice_swarm::oracle;
use lattice_swarm::plan::{render_ascii, render_ppm, ActionPlan};
use lattice_swarm::protocol::{corner_border_coords, Coord, CornerCounts, ProtocolError};
use lattice_swarm::scenario::{load_plan, Scenario};
use lattice_swarm::sim::{self, BatchSummary, RunResult, RunStatus, CSV_HEADER};

const EXIT_FAIL: u8 = 1;
const EXIT_TIMEOUT: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "lattice-swarm", version, about = "Self-localising lattice swarm simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one seeded simulation and verify the coordinates it produced.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv and frames/.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a range of seeds, one CSV row each, plus a summary.
    Batch {
        scenario: PathBuf,
        /// Half-open `A..B`, or inclusive `A..=B`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Range<u64>,
        /// CSV file to write.
        #[arg(long, default_value = "batch.csv")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the brute-force oracle suites.
    Verify {
        /// Placement errors to tabulate against the long-spacing bound.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.35")]
        eps: Vec<f64>,
        /// Largest lattice side for the exhaustive perimeter suite.
        #[arg(long, default_value_t = 40)]
        max_side: u16,
        /// Feed the perimeter suite a deliberately broken coordinate rule.
        #[arg(long, hide = true)]
        mutate_perimeter: bool,
    },
}

/// Flags that override scenario values.
#[derive(Args, Clone, Debug, Default)]
struct Overrides {
    #[arg(long)]
    drop: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    bias_frac: Option<f64>,
    #[arg(long)]
    skew: Option<f64>,
    #[arg(long)]
    frames_every: Option<u64>,
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    t1: Option<u32>,
    #[arg(long)]
    t2: Option<u32>,
    #[arg(long)]
    t3: Option<u32>,
    #[arg(long)]
    t4: Option<u32>,
    /// Skip the distance repair sub-phase.
    #[arg(long)]
    no_repair: bool,
    #[arg(long)]
    max_seconds: Option<f64>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut s.noise.drop_prob, self.drop);
        set(&mut s.noise.dist_noise_sigma, self.sigma);
        set(&mut s.noise.biased_agent_frac, self.bias_frac);
        set(&mut s.noise.clock_skew_frac, self.skew);
        set(&mut s.sim.max_sim_seconds, self.max_seconds);
        if self.frames_every.is_some() {
            s.sim.frames_every = self.frames_every;
        }
        if self.plan.is_some() {
            s.plan = self.plan.clone();
        }
        let t = &mut s.sim.protocol.timers;
        for (dst, v) in [(&mut t.t1, self.t1), (&mut t.t2, self.t2), (&mut t.t3, self.t3), (&mut t.t4, self.t4)] {
            if let Some(v) = v {
                *dst = v;
            }
        }
        if self.no_repair {
            s.sim.protocol.repair = false;
        }
    }
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected A..B or A..=B, got `{s}`"));
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("seed range start: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("seed range end: {e}"))?;
    let end = if inclusive { b.checked_add(1).ok_or("seed range overflows")? } else { b };
    if a >= end {
        return Err(format!("seed range `{s}` is empty"));
    }
    Ok(a..end)
}

/// An error together with the exit code it maps to.
struct Failure(u8, anyhow::Error);

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure(EXIT_USAGE, e.into())
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure(EXIT_IO, e.into())
}

fn load(path: &Path, overrides: &Overrides) -> Result<(Scenario, ActionPlan), Failure> {
    let mut scenario = Scenario::load(path).map_err(usage)?;
    overrides.apply(&mut scenario);
    let plan = match &scenario.plan {
        Some(p) => load_plan(p).map_err(usage)?,
        None => ActionPlan::default(),
    };
    Ok((scenario, plan))
}

fn verdict(r: &RunResult) -> &'static str {
    match (r.status, r.success()) {
        (RunStatus::Timeout, _) => "TIMEOUT",
        (_, true) => "PASS",
        (_, false) => "FAIL",
    }
}

fn exit_for(r: &RunResult) -> u8 {
    match verdict(r) {
        "PASS" => 0,
        "TIMEOUT" => EXIT_TIMEOUT,
        _ => EXIT_FAIL,
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, out: &Path, overrides: &Overrides) -> Result<u8, Failure> {
    let (mut scenario, plan) = load(path, overrides)?;
    if let Some(seed) = seed {
        scenario.sim.seed = seed;
    }
    let r = sim::run(&scenario.lattice, &scenario.sim, &scenario.noise, &plan).map_err(usage)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(io)?;
    let csv = format!("{CSV_HEADER}\n{}\n", r.csv_row());
    fs::write(out.join("metrics.csv"), csv).context("writing metrics.csv").map_err(io)?;
    if !r.frames.is_empty() {
        let dir = out.join("frames");
        fs::create_dir_all(&dir).context("creating frames/").map_err(io)?;
        for f in &r.frames {
            let stem = dir.join(format!("frame_{:08}", f.tick));
            fs::write(stem.with_extension("txt"), render_ascii(&f.roles, &r.truth.cells)).map_err(io)?;
            fs::write(stem.with_extension("ppm"), render_ppm(&f.roles, &r.truth.cells)).map_err(io)?;
        }
    }

    let opt = |v: Option<f64>| v.map_or("NA".to_owned(), |s| format!("{s:.3}"));
    println!(
        "{} seed={} symmetry={} origin={} completion_s={} msgs_sent={} msgs_dropped={}",
        verdict(&r),
        r.seed,
        r.symmetry().map_or("NA", |s| s.name()),
        r.origin_corner().unwrap_or("NA"),
        opt(r.completion_s()),
        r.msgs_sent,
        r.msgs_dropped
    );
    if let Some(Err(e)) = &r.verification {
        eprintln!("verification: {e}");
    }
    for (agent, fault) in r.faults.iter().take(5) {
        eprintln!("agent {agent}: {fault:?}");
    }
    if r.faults.len() > 5 {
        eprintln!("... {} more faulted agents", r.faults.len() - 5);
    }
    Ok(exit_for(&r))
}

fn cmd_batch(path: &Path, seeds: Range<u64>, out: &Path, overrides: &Overrides) -> Result<u8, Failure> {
    let (mut scenario, plan) = load(path, overrides)?;
    // frames are a single-run artefact
    scenario.sim.frames_every = None;
    let results: Vec<RunResult> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let mut config = scenario.sim.clone();
            config.seed = seed;
            let r = sim::run(&scenario.lattice, &config, &scenario.noise, &plan);
            if let Ok(r) = &r {
                info!("seed {seed}: {}", verdict(r));
            }
            r
        })
        .collect::<Result<_, _>>()
        .map_err(usage)?;

    let mut csv = format!("{CSV_HEADER}\n");
    for r in &results {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display())).map_err(io)?;
    print!("{}", BatchSummary::from_results(&results));
    Ok(results.iter().map(exit_for).max_by_key(|&c| match c {
        EXIT_FAIL => 2,
        EXIT_TIMEOUT => 1,
        _ => 0,
    }).unwrap_or(0))
}

fn cmd_verify(eps: &[f64], max_side: u16, mutate: bool) -> u8 {
    let mut failed = false;
    let mut report = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        failed |= !ok;
    };

    let broken = |n: u16, c: CornerCounts| -> Result<Coord, ProtocolError> {
        // top-row branch shifted by one column
        corner_border_coords(n, c).map(|p| if n > c[1] && n <= c[2] { Coord::new(p.x + 1, p.y) } else { p })
    };
    let perimeter = if mutate {
        oracle::perimeter_suite(max_side, max_side, broken)
    } else {
        oracle::perimeter_suite(max_side, max_side, corner_border_coords)
    };
    match perimeter {
        Ok(n) => report("perimeter", true, format!("{n} lattices")),
        Err(f) => report(
            "perimeter",
            false,
            format!("{}x{} count {}: expected {}, got {:?}", f.dims.0, f.dims.1, f.count, f.expected, f.got),
        ),
    }

    match oracle::middle_suite(0x5eed, 100, 40, 25) {
        Ok(n) => report("middle-closure", true, format!("{n} random lattices up to 40x25")),
        Err((m, n)) => report("middle-closure", false, format!("interior of {m}x{n} not filled correctly")),
    }

    let s = oracle::radius_sweep(33.0, 110.0, 1.0);
    let ok = s.upper_violations.is_empty() && s.monotone_violations.is_empty() && s.eps0_max_rel_err <= 1e-9;
    report(
        "radius-sweep",
        ok,
        format!(
            "{} grid points; radius below 2x: {} violations; eps bound monotone: {} violations; eps=0 rel err {:.1e}",
            s.grid_points,
            s.upper_violations.len(),
            s.monotone_violations.len(),
            s.eps0_max_rel_err
        ),
    );
    let first = s.diagonal_limit.first().and_then(|&(x, y)| y.map(|y| (x, y)));
    println!(
        "INFO radius-sweep: cell diagonal outside the radius at {} of {} points{}",
        s.diagonal_violations.len(),
        s.grid_points,
        first.map_or(String::new(), |(x, y)| format!(" (x={x}: inside only up to y={y})"))
    );
    for (e, bound) in oracle::eps_table(ROBOT_X, eps) {
        match bound {
            Ok(b) => println!("INFO eps {e}: long spacing bound {b:.3} mm at x={ROBOT_X}"),
            Err(ProtocolError::EpsOutOfRange(_)) => println!("INFO eps {e}: EPS_OUT_OF_RANGE"),
            Err(other) => println!("INFO eps {e}: {other}"),
        }
    }
    if failed {
        EXIT_FAIL
    } else {
        0
    }
}

const ROBOT_X: f64 = lattice_swarm::protocol::ROBOT_BODY_LENGTH_MM;

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Run { scenario, seed, out, overrides } => cmd_run(scenario, *seed, out, overrides),
        Cmd::Batch { scenario, seeds, out, overrides } => cmd_batch(scenario, seeds.clone(), out, overrides),
        Cmd::Verify { eps, max_side, mutate_perimeter } => Ok(cmd_verify(eps, *max_side, *mutate_perimeter)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
