//! The `noise-lab` command line.
//!
//! Exit status: 0 on success, 1 when an asserted check fails or a run
//! errors, 2 for configuration errors (the message names the JSON path).

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::verify_suite;
use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sq};
use crate::noise::{
    default_burn_in, gradient_noise_vectors, omega_elements, search_direction_noise, tail_stats, MIN_TAIL_SAMPLES,
};
use crate::optimizers::{run, OptimizerConfig, TraceOptions};
use crate::problems::Objective;
use crate::rng::RngStream;
use crate::smoothing::{
    adaptive_sharpness, degree_of_smoothing, smoothing_gap_check, PNorm, Perturbation, SharpnessMethod,
};
use crate::sweep::{
    analytic_critical_batch, analytic_sfo, analytic_steps, empirical_critical_batch, estimate_variance,
    render_variance_table, run_sweep, variance_upper_bound, xyz_from_setup, StopKind, StopRule,
};

pub use config::{load_config, parse_config, Command, ExperimentConfig, SEED_ENV};
use output::{fmt_float, write_csv, write_json, write_jsonl};

#[derive(Debug, Parser)]
#[command(
    name = "noise-lab",
    version,
    about = "Gradient-noise experiments for SGD and momentum"
)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// One optimizer trajectory, recorded step by step.
    Run {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Steps and SFO to reach epsilon over a batch-size grid.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        batch_grid: Option<Vec<usize>>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Gradient noise and search-direction noise of a momentum run.
    Noise {
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Monte-Carlo smoothing gap |f_hat - f| against delta * L_f.
    Smooth {
        #[arg(long)]
        delta: Option<f64>,
        /// unit-sphere-uniform, gaussian-scaled or ball-uniform.
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        /// JSON array of points.
        #[arg(long)]
        points_file: Option<PathBuf>,
    },
    /// Adaptive sharpness around a point.
    Sharpness {
        #[arg(long)]
        rho: Option<f64>,
        /// 2 or inf.
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        iters: Option<usize>,
        /// random-search or sign-ascent.
        #[arg(long)]
        method: Option<String>,
    },
    /// Identity and bound checks.
    Verify,
    /// Variance bounds implied by published critical batch sizes.
    Table1,
}

impl Sub {
    fn command(&self) -> Command {
        match self {
            Sub::Run { .. } => Command::Run,
            Sub::Sweep { .. } => Command::Sweep,
            Sub::Noise { .. } => Command::Noise,
            Sub::Smooth { .. } => Command::Smooth,
            Sub::Sharpness { .. } => Command::Sharpness,
            Sub::Verify => Command::Verify,
            Sub::Table1 => Command::Table1,
        }
    }
}

/// Result of a command that ran to completion.
struct Outcome {
    written: Vec<PathBuf>,
    failed: Option<String>,
}

/// Run the CLI on `args` (including the program name) and return the exit
/// status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let seed_env = std::env::var(SEED_ENV).ok();
    let prepared = prepare(&cli, seed_env.as_deref()).and_then(|(cfg, setup)| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        Ok((cfg, setup, pool))
    });
    let (cfg, setup, pool) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli.command, &cfg, &setup)) {
        Ok(outcome) => {
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            match outcome.failed {
                Some(msg) => {
                    eprintln!("FAILED: {msg}");
                    1
                }
                None => 0,
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Built objects shared by the commands.
struct Setup {
    objective: Option<Objective>,
    optimizer: OptimizerConfig,
    x0: Vec<f64>,
    master: RngStream,
    points: Option<Vec<Vec<f64>>>,
}

/// Everything that can fail with a configuration error, done before any
/// computation starts.
fn prepare(cli: &Cli, seed_env: Option<&str>) -> Result<(ExperimentConfig, Setup)> {
    if cli.jobs == Some(0) {
        return Err(Error::config("--jobs", "must be at least 1"));
    }
    let cmd = cli.command.command();
    let mut raw = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed_env {
        raw.master_seed = s
            .trim()
            .parse()
            .map_err(|e| Error::config(SEED_ENV, format!("not an unsigned 64-bit integer: {e}")))?;
    }
    if let Some(out) = &cli.out {
        raw.output_dir = out.clone();
    }
    let mut cfg = raw.resolve(cmd);
    let mut points = None;
    apply_overrides(&cli.command, &mut cfg, &mut points)?;

    let master = RngStream::new(cfg.master_seed);
    let optimizer = cfg.optimizer.clone().unwrap_or_else(|| OptimizerConfig::sgd(0.1, 1));
    let x0 = cfg.x0.clone().unwrap_or_default();
    if cmd == Command::Table1 {
        return Ok((
            cfg,
            Setup {
                objective: None,
                optimizer,
                x0,
                master,
                points,
            },
        ));
    }
    let problem = cfg.problem.as_ref().expect("resolved config has a problem");
    let objective = Objective::from_config(problem)?;
    let dim = objective.dim();
    optimizer.validate()?;
    check_len("x0", dim, &x0)?;

    match cmd {
        Command::Run => {
            let b = cfg.run.as_ref().expect("run block");
            if b.steps == 0 {
                return Err(Error::config("run.steps", "must be at least 1"));
            }
            if let Some(stop) = &b.stop {
                stop.validate().map_err(|e| prefixed(e, "run.stop"))?;
                if let Some(r) = &stop.reference_point {
                    check_len("run.stop.reference_point", dim, r)?;
                }
            }
            if let Some(r) = &b.x_ref {
                check_len("run.x_ref", dim, r)?;
            }
        }
        Command::Sweep => {
            let b = cfg.sweep.as_ref().expect("sweep block");
            sweep_stop_rule(b, &objective)?;
            if b.batch_grid.is_empty() || b.batch_grid[0] == 0 || b.batch_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(
                    "sweep.batch_grid",
                    "must be non-empty, positive and strictly ascending",
                ));
            }
            if b.seeds == 0 {
                return Err(Error::config("sweep.seeds", "must be at least 1"));
            }
            if b.max_steps == 0 {
                return Err(Error::config("sweep.max_steps", "must be at least 1"));
            }
            if b.pilot_steps == 0 {
                return Err(Error::config("sweep.pilot_steps", "must be at least 1"));
            }
        }
        Command::Noise => {
            let b = cfg.noise.as_ref().expect("noise block");
            if b.window == 0 {
                return Err(Error::config("noise.window", "must be at least 1"));
            }
            if b.gradient_samples < MIN_TAIL_SAMPLES {
                return Err(Error::config(
                    "noise.gradient_samples",
                    format!("must be at least {MIN_TAIL_SAMPLES}"),
                ));
            }
            if let Some(p) = &b.point {
                check_len("noise.point", dim, p)?;
            }
            if optimizer.momentum() >= 1.0 {
                return Err(Error::config("optimizer", "momentum must be below 1"));
            }
        }
        Command::Smooth => {
            let b = cfg.smooth.as_ref().expect("smooth block");
            b.spec().validate()?;
            if b.lipschitz.is_none() && objective.known_constants().lipschitz.is_none() {
                return Err(Error::config(
                    "smooth.lipschitz",
                    "the objective has no known Lipschitz constant; set one",
                ));
            }
            if let Some(l) = b.lipschitz {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(Error::config(
                        "smooth.lipschitz",
                        "must be a non-negative finite number",
                    ));
                }
            }
            let pts = match (points.take(), &b.points) {
                (Some(p), _) => p,
                (None, Some(p)) => p.clone(),
                (None, None) => {
                    let mut rng = master.child(1).rng();
                    let mut pts = vec![vec![0.0; dim]];
                    for _ in 0..b.random_points {
                        pts.push((0..dim).map(|_| rng.random_range(-2.0..=2.0)).collect());
                    }
                    pts
                }
            };
            if pts.is_empty() {
                return Err(Error::config("smooth.points", "must not be empty"));
            }
            for (i, p) in pts.iter().enumerate() {
                check_len(&format!("smooth.points[{i}]"), dim, p)?;
            }
            points = Some(pts);
        }
        Command::Sharpness => {
            let b = cfg.sharpness.as_ref().expect("sharpness block");
            b.spec().validate(dim)?;
            if let Some(w) = &b.w {
                check_len("sharpness.w", dim, w)?;
            }
        }
        Command::Verify => {
            let v = cfg.verify.as_ref().expect("verify block");
            if let Some(r) = &v.x_ref {
                check_len("verify.x_ref", dim, r)?;
            }
        }
        Command::Table1 => {}
    }
    Ok((
        cfg,
        Setup {
            objective: Some(objective),
            optimizer,
            x0,
            master,
            points,
        },
    ))
}

fn check_len(path: &str, dim: usize, v: &[f64]) -> Result<()> {
    if v.len() != dim {
        return Err(Error::config(
            path,
            format!("expected {dim} coordinates, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(path, "coordinates must be finite"));
    }
    Ok(())
}

fn prefixed(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { path, message } => Error::Config {
            path: format!("{prefix}.{path}"),
            message,
        },
        other => other,
    }
}

fn flag_error(flag: &str, value: &str, allowed: &str) -> Error {
    Error::config(flag, format!("unknown value {value:?}; expected {allowed}"))
}

fn apply_overrides(sub: &Sub, cfg: &mut ExperimentConfig, points: &mut Option<Vec<Vec<f64>>>) -> Result<()> {
    match sub {
        Sub::Run { steps } => {
            let b = cfg.run.as_mut().expect("run block");
            if let Some(s) = steps {
                b.steps = *s;
            }
        }
        Sub::Sweep {
            batch_grid,
            epsilon,
            seeds,
            max_steps,
        } => {
            let b = cfg.sweep.as_mut().expect("sweep block");
            if let Some(g) = batch_grid {
                b.batch_grid = g.clone();
            }
            if let Some(e) = epsilon {
                b.epsilon = *e;
            }
            if let Some(s) = seeds {
                b.seeds = *s;
            }
            if let Some(m) = max_steps {
                b.max_steps = *m;
            }
        }
        Sub::Noise { window, burn_in } => {
            let b = cfg.noise.as_mut().expect("noise block");
            if let Some(w) = window {
                b.window = *w;
            }
            if burn_in.is_some() {
                b.burn_in = *burn_in;
            }
        }
        Sub::Smooth {
            delta,
            dist,
            samples,
            points_file,
        } => {
            let b = cfg.smooth.as_mut().expect("smooth block");
            if let Some(d) = delta {
                b.delta = *d;
            }
            if let Some(d) = dist {
                b.dist = Perturbation::parse(d)
                    .ok_or_else(|| flag_error("--dist", d, "unit-sphere-uniform, gaussian-scaled or ball-uniform"))?;
            }
            if let Some(s) = samples {
                b.samples = *s;
            }
            if let Some(path) = points_file {
                let pts = read_points(path)?;
                // the resolved config must reproduce the run on its own
                b.points = Some(pts.clone());
                *points = Some(pts);
            }
        }
        Sub::Sharpness { rho, p, iters, method } => {
            let b = cfg.sharpness.as_mut().expect("sharpness block");
            if let Some(r) = rho {
                b.rho = *r;
            }
            if let Some(p) = p {
                b.p = PNorm::parse(p).ok_or_else(|| flag_error("--p", p, "2 or inf"))?;
            }
            if let Some(i) = iters {
                b.iters = *i;
            }
            if let Some(m) = method {
                b.method = SharpnessMethod::parse(m)
                    .ok_or_else(|| flag_error("--method", m, "random-search or sign-ascent"))?;
            }
        }
        Sub::Verify | Sub::Table1 => {}
    }
    Ok(())
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("--points-file", format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.path().to_string();
        let at = if inner == "." { String::new() } else { inner };
        Error::config(format!("--points-file{at}"), e.into_inner().to_string())
    })
}

fn sweep_stop_rule(block: &config::SweepBlock, objective: &Objective) -> Result<StopRule> {
    let reference_point = match block.stop {
        StopKind::CumulativeGradNorm => None,
        StopKind::InnerProduct => Some(
            block
                .reference_point
                .clone()
                .or_else(|| objective.minimizer())
                .ok_or_else(|| Error::config("sweep.reference_point", "required for the inner-product rule"))?,
        ),
    };
    if let Some(r) = &reference_point {
        check_len("sweep.reference_point", objective.dim(), r)?;
    }
    let rule = StopRule {
        kind: block.stop,
        epsilon: block.epsilon,
        reference_point,
        gradient_source: block.gradient_source,
    };
    rule.validate().map_err(|e| prefixed(e, "sweep"))?;
    Ok(rule)
}

fn execute(sub: &Sub, cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::invalid(format!("cannot create {}: {e}", dir.display())))?;
    let mut out = Outcome {
        written: Vec::new(),
        failed: None,
    };
    let resolved = dir.join("resolved_config.json");
    write_json(&resolved, cfg)?;
    out.written.push(resolved);

    match sub.command() {
        Command::Run => cmd_run(cfg, setup, &mut out)?,
        Command::Sweep => cmd_sweep(cfg, setup, &mut out)?,
        Command::Noise => cmd_noise(cfg, setup, &mut out)?,
        Command::Smooth => cmd_smooth(cfg, setup, &mut out)?,
        Command::Sharpness => cmd_sharpness(cfg, setup, &mut out)?,
        Command::Verify => cmd_verify(cfg, setup, &mut out)?,
        Command::Table1 => {
            let text = render_variance_table();
            print!("{text}");
            let p = dir.join("table1.txt");
            std::fs::write(&p, &text).map_err(|e| Error::invalid(format!("cannot write {}: {e}", p.display())))?;
            out.written.push(p);
        }
    }
    Ok(out)
}

/// `report` as a JSON object with the resolved config under `"config"`.
fn with_config<T: Serialize>(cfg: &ExperimentConfig, report: &T) -> Result<Value> {
    let mut v = serde_json::to_value(report).map_err(|e| Error::invalid(e.to_string()))?;
    let c = serde_json::to_value(cfg).map_err(|e| Error::invalid(e.to_string()))?;
    match &mut v {
        Value::Object(map) => {
            map.insert("config".into(), c);
            Ok(v)
        }
        _ => Ok(json!({ "config": c, "report": v })),
    }
}

fn objective(setup: &Setup) -> &Objective {
    setup.objective.as_ref().expect("objective built during setup")
}

fn cmd_run(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let block = cfg.run.as_ref().expect("run block");
    let obj = objective(setup);
    let mut options = TraceOptions::records();
    if let Some(r) = &block.x_ref {
        options = options.with_ref(r.clone());
    }
    let trace = run(
        obj,
        &setup.optimizer,
        &setup.x0,
        block.stop.as_ref(),
        block.steps,
        &setup.master,
        &options,
    )?;
    let lines = trace.records.iter().map(|r| {
        json!({
            "t": r.t,
            "f_value": r.f_value,
            "grad_norm": norm(&r.grad),
            "grad": r.grad,
            "search_direction": r.search_direction,
            "minibatch_grad": r.minibatch_grad,
            "grad_noise_sq": crate::linalg::dist_sq(&r.minibatch_grad, &r.grad),
            "omega_sq": crate::linalg::dist_sq(&r.search_direction, &r.grad),
            "dist_to_ref": r.dist_to_ref,
        })
    });
    let p = cfg.output_dir.join("run.jsonl");
    write_jsonl(&p, lines)?;
    out.written.push(p);

    let summary = json!({
        "steps": trace.steps,
        "exit_reason": trace.exit.as_str(),
        "final_x": trace.final_x,
        "final_f": obj.eval_f(&trace.final_x).ok().filter(|v| v.is_finite()),
        "max_grad_sq": trace.max_grad_sq,
        "x_ref": trace.x_ref,
        "max_dist_to_ref": trace.max_dist_to_ref,
    });
    let p = cfg.output_dir.join("run_summary.json");
    write_json(&p, &with_config(cfg, &summary)?)?;
    out.written.push(p);
    Ok(())
}

const PILOT_STREAM: u64 = u64::MAX;

fn cmd_sweep(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let block = cfg.sweep.as_ref().expect("sweep block");
    let obj = objective(setup);
    let stop = sweep_stop_rule(block, obj)?;
    let summary = run_sweep(
        obj,
        &setup.optimizer,
        &setup.x0,
        &block.batch_grid,
        block.seeds,
        &stop,
        block.max_steps,
        &setup.master,
    )
    .map_err(|e| prefixed(e, "sweep"))?;

    let p = cfg.output_dir.join("sweep.csv");
    write_csv(
        &p,
        &["b", "seed", "steps", "sfo", "exit_reason"],
        summary.rows.iter().map(|r| {
            vec![
                r.b.to_string(),
                r.seed.to_string(),
                r.steps_t.to_string(),
                r.sfo.to_string(),
                r.exit_reason.as_str().to_string(),
            ]
        }),
    )?;
    out.written.push(p);

    // Pilot run for the constants of the analytic curve.
    let x_ref = block.reference_point.clone().or_else(|| obj.minimizer());
    let mut notes: Vec<String> = Vec::new();
    let analytic = match &x_ref {
        None => {
            notes.push("no reference point: the analytic curve needs sweep.reference_point".into());
            None
        }
        Some(x_ref) => {
            let pilot = run(
                obj,
                &setup.optimizer,
                &setup.x0,
                None,
                block.pilot_steps,
                &setup.master.child(PILOT_STREAM),
                &TraceOptions::records().with_ref(x_ref.clone()),
            )?;
            match xyz_from_setup(obj, &setup.optimizer, &setup.x0, x_ref, Some(&pilot), block.epsilon) {
                Ok((params, constants)) => Some((params, constants, estimate_variance(&pilot))),
                Err(e) => {
                    notes.push(format!("analytic curve unavailable: {e}"));
                    None
                }
            }
        }
    };
    let analytic_b_star = analytic
        .as_ref()
        .and_then(|(params, _, _)| match analytic_critical_batch(params) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("no analytic critical batch: {e}"));
                None
            }
        });

    let p = cfg.output_dir.join("summary.csv");
    let curve = |f: fn(&crate::sweep::AnalyticCurveParams, f64) -> Result<f64>, b: usize| -> String {
        analytic
            .as_ref()
            .and_then(|(params, _, _)| f(params, b as f64).ok())
            .map(fmt_float)
            .unwrap_or_default()
    };
    write_csv(
        &p,
        &[
            "b",
            "mean_steps",
            "mean_sfo",
            "converged_fraction",
            "analytic_steps",
            "analytic_sfo",
        ],
        summary.per_batch.iter().map(|s| {
            vec![
                s.b.to_string(),
                fmt_float(s.mean_steps),
                fmt_float(s.mean_sfo),
                fmt_float(s.converged_fraction),
                curve(analytic_steps, s.b),
                curve(analytic_sfo, s.b),
            ]
        }),
    )?;
    out.written.push(p);

    let (eta, _) = setup.optimizer.nshb_equivalent();
    let empirical = empirical_critical_batch(&summary);
    let grid = &block.batch_grid;
    let interior = empirical.is_some_and(|b| b != grid[0] && Some(&b) != grid.last());
    let small_batch_step_ratio = (summary.per_batch.len() >= 2 && summary.per_batch[..2].iter().all(|s| s.converged()))
        .then(|| summary.per_batch[0].mean_steps / summary.per_batch[1].mean_steps);
    if empirical.is_none() {
        notes.push("no grid batch size converged for every seed".into());
    }
    let report = json!({
        "empirical_b_star": empirical,
        "analytic_b_star": analytic_b_star,
        "variance_upper_bound": empirical.map(|b| variance_upper_bound(b as f64, block.epsilon, eta)),
        "params": analytic.as_ref().map(|(p, _, _)| p),
        "constants": analytic.as_ref().map(|(_, c, _)| c),
        "pilot_variance_estimate": analytic.as_ref().and_then(|(_, _, v)| *v),
        "small_batch_step_ratio": small_batch_step_ratio,
        "sfo_interior_minimum": interior,
        "notes": notes,
    });
    let p = cfg.output_dir.join("critical.json");
    write_json(&p, &with_config(cfg, &report)?)?;
    out.written.push(p);

    // Degree of smoothing eta*C/sqrt(b) over the grid, for plotting.
    if let Some((_, constants, _)) = &analytic {
        let p = cfg.output_dir.join("degree_of_smoothing.csv");
        write_csv(
            &p,
            &["b", "delta"],
            grid.iter().map(|&b| {
                vec![
                    b.to_string(),
                    fmt_float(degree_of_smoothing(eta, constants.variance, b)),
                ]
            }),
        )?;
        out.written.push(p);
    }
    Ok(())
}

fn cmd_noise(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let block = cfg.noise.as_ref().expect("noise block");
    let obj = objective(setup);
    let burn_in = block
        .burn_in
        .unwrap_or_else(|| default_burn_in(setup.optimizer.momentum()));
    let steps = burn_in
        .checked_add(block.window)
        .ok_or_else(|| Error::config("noise.burn_in", "burn_in + window overflows"))?;
    let trace = run(
        obj,
        &setup.optimizer,
        &setup.x0,
        None,
        steps,
        &setup.master.child(0),
        &TraceOptions::records(),
    )?;
    let report = search_direction_noise(&trace, obj, Some(burn_in))?;

    let p = cfg.output_dir.join("noise.csv");
    write_csv(
        &p,
        &["t", "grad_noise_sq", "omega_sq"],
        report
            .per_step
            .iter()
            .map(|s| vec![s.t.to_string(), fmt_float(s.grad_noise_sq), fmt_float(s.omega_sq)]),
    )?;
    out.written.push(p);

    // Single-sample gradient noise at one point.
    let point = block.point.clone().unwrap_or_else(|| setup.x0.clone());
    let vectors = gradient_noise_vectors(obj, &point, block.gradient_samples, &mut setup.master.child(1).rng())?;
    let sq: Vec<f64> = vectors.iter().map(|v| norm_sq(v)).collect();
    let per_coordinate = (0..obj.dim())
        .map(|k| tail_stats(&vectors.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let omega = omega_elements(&trace, burn_in);
    let omega_tail = tail_stats(&omega).ok();

    let summary = json!({
        "summary": report.summary,
        "gradient_noise": {
            "point": point,
            "samples": block.gradient_samples,
            "mean_sq": sq.iter().sum::<f64>() / sq.len() as f64,
            "per_coordinate": per_coordinate,
        },
        "omega_tail": omega_tail,
    });
    let p = cfg.output_dir.join("noise_summary.json");
    write_json(&p, &with_config(cfg, &summary)?)?;
    out.written.push(p);
    Ok(())
}

fn cmd_smooth(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let block = cfg.smooth.as_ref().expect("smooth block");
    let points = setup.points.as_ref().expect("points chosen during setup");
    let report = smoothing_gap_check(
        objective(setup),
        points,
        &block.spec(),
        block.lipschitz,
        &setup.master.child(0),
    )?;
    let body = json!({
        "delta": report.delta,
        "dist": block.dist,
        "samples": block.samples,
        "lipschitz": report.lipschitz,
        "rows": report.rows,
        "all_pass": report.all_pass,
    });
    let p = cfg.output_dir.join("smooth.json");
    write_json(&p, &with_config(cfg, &body)?)?;
    out.written.push(p);
    if !report.all_pass {
        let n = report.rows.iter().filter(|r| !r.pass).count();
        out.failed = Some(format!("{n} point(s) exceed the smoothing gap bound"));
    }
    Ok(())
}

fn cmd_sharpness(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let block = cfg.sharpness.as_ref().expect("sharpness block");
    let w = block.w.clone().unwrap_or_else(|| setup.x0.clone());
    let report = adaptive_sharpness(objective(setup), &w, &block.spec(), &setup.master.child(0))?;
    let body = json!({
        "w": w,
        "rho": block.rho,
        "p": block.p,
        "method": block.method,
        "iters": block.iters,
        "value": report.value,
        "perturbation": report.perturbation,
        "evaluations": report.evaluations,
        "batch_draws": report.batch_draws,
    });
    let p = cfg.output_dir.join("sharpness.json");
    write_json(&p, &with_config(cfg, &body)?)?;
    out.written.push(p);
    Ok(())
}

fn cmd_verify(cfg: &ExperimentConfig, setup: &Setup, out: &mut Outcome) -> Result<()> {
    let settings = cfg.verify.as_ref().expect("verify block");
    let checks = verify_suite(objective(setup), &setup.optimizer, &setup.x0, settings, &setup.master)?;
    let p = cfg.output_dir.join("verify.json");
    write_json(&p, &json!({ "config": cfg, "checks": checks }))?;
    out.written.push(p);
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.failed_assertion())
        .map(|c| c.check.as_str())
        .collect();
    let diagnostics = checks.iter().filter(|c| !c.asserted && !c.holds).count();
    println!(
        "{} checks, {} asserted failures, {} diagnostics not holding",
        checks.len(),
        failed.len(),
        diagnostics
    );
    if !failed.is_empty() {
        out.failed = Some(format!("asserted checks failed: {}", failed.join(", ")));
    }
    Ok(())
}
