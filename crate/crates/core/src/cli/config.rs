//! The experiment configuration file and its per-command defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::VerifySettings;
use crate::error::{Error, Result};
use crate::optimizers::OptimizerConfig;
use crate::problems::ProblemConfig;
use crate::smoothing::{PNorm, Perturbation, SharpnessMethod, SharpnessSpec, SmoothingSpec};
use crate::sweep::{default_batch_grid, GradientSource, StopKind, StopRule};

pub const SEED_ENV: &str = "NOISE_LAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Noise,
    Smooth,
    Sharpness,
    Verify,
    Table1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "d_run_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    /// Point for `dist_to_ref`; the objective's minimizer when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ref: Option<Vec<f64>>,
}

fn d_run_steps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default = "default_batch_grid")]
    pub batch_grid: Vec<usize>,
    #[serde(default = "d_sweep_eps")]
    pub epsilon: f64,
    #[serde(default = "d_sweep_seeds")]
    pub seeds: usize,
    #[serde(default = "d_sweep_cap")]
    pub max_steps: usize,
    #[serde(default = "d_stop")]
    pub stop: StopKind,
    #[serde(default)]
    pub gradient_source: GradientSource,
    /// `x` in the inner-product rule and in `X = ‖x₀ − x‖²/(2η)`; the
    /// objective's minimizer when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_point: Option<Vec<f64>>,
    /// Steps of the pilot run used to measure `K²` and `D` for the analytic
    /// curve.
    #[serde(default = "d_pilot")]
    pub pilot_steps: usize,
}

fn d_sweep_eps() -> f64 {
    0.5
}
fn d_sweep_seeds() -> usize {
    3
}
fn d_sweep_cap() -> usize {
    200_000
}
fn d_stop() -> StopKind {
    StopKind::CumulativeGradNorm
}
fn d_pilot() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// Steps after burn-in.
    #[serde(default = "d_window")]
    pub window: usize,
    /// `max(100, ⌈10/(1 − β)⌉)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "d_grad_samples")]
    pub gradient_samples: usize,
    /// Where single-sample gradient noise is measured; `x0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

fn d_window() -> usize {
    20_000
}
fn d_grad_samples() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothBlock {
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default)]
    pub dist: Perturbation,
    #[serde(default = "d_smooth_samples")]
    pub samples: usize,
    /// Evaluation points; the origin plus `random_points` uniform points in
    /// `[-2, 2]^dim` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default = "d_random_points")]
    pub random_points: usize,
    /// Overrides the objective's documented Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

fn d_delta() -> f64 {
    0.5
}
fn d_smooth_samples() -> usize {
    100_000
}
fn d_random_points() -> usize {
    20
}

impl SmoothBlock {
    pub fn spec(&self) -> SmoothingSpec {
        SmoothingSpec::new(self.delta, self.dist, self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessBlock {
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub p: PNorm,
    #[serde(default)]
    pub method: SharpnessMethod,
    #[serde(default = "d_iters")]
    pub iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Where sharpness is measured; `x0` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
}

fn d_rho() -> f64 {
    1.0
}
fn d_iters() -> usize {
    50
}

impl SharpnessBlock {
    pub fn spec(&self) -> SharpnessSpec {
        SharpnessSpec {
            rho: self.rho,
            c: self.c.clone(),
            p: self.p,
            method: self.method,
            iters: self.iters,
            batches: self.batches,
            batch_size: self.batch_size,
        }
    }
}

fn empty<T: serde::de::DeserializeOwned>() -> T {
    serde_json::from_str("{}").expect("block defaults")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<SharpnessBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySettings>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_out")]
    pub output_dir: PathBuf,
}

fn d_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        empty()
    }
}

/// Parse a config document; errors carry the JSON path of the offending
/// value.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "config".to_string() } else { path };
        Error::config(path, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Problem, optimizer and start point used when the config omits them.
pub fn command_defaults(cmd: Command) -> (ProblemConfig, OptimizerConfig, Vec<f64>) {
    let problem = |v: serde_json::Value| -> ProblemConfig { serde_json::from_value(v).expect("default problem") };
    match cmd {
        Command::Sweep => (
            problem(json!({"kind": "noisy-quadratic", "dim": 2, "variance": 36.0,
                           "params": {"curvature": [1.0, 1.0]}})),
            OptimizerConfig::sgd(0.1, 8),
            vec![5.0, 5.0],
        ),
        Command::Noise => (
            problem(json!({"kind": "constant-gradient", "dim": 2, "variance": 4.0,
                           "params": {"coefficients": [1.0, 0.0]}})),
            OptimizerConfig::nshb(0.01, 0.9, 4),
            vec![0.0, 0.0],
        ),
        Command::Smooth => (
            problem(json!({"kind": "euclidean-norm", "dim": 3})),
            OptimizerConfig::sgd(0.1, 1),
            vec![0.0; 3],
        ),
        Command::Sharpness => (
            problem(json!({"kind": "noisy-quadratic", "dim": 1, "params": {"curvature": [1.0]}})),
            OptimizerConfig::sgd(0.1, 1),
            vec![0.0],
        ),
        Command::Run | Command::Verify | Command::Table1 => (
            problem(json!({"kind": "noisy-quadratic", "dim": 2, "variance": 4.0,
                           "params": {"curvature": [1.0, 0.5]}})),
            if cmd == Command::Run {
                OptimizerConfig::nshb(0.1, 0.9, 8)
            } else {
                OptimizerConfig::sgd(0.1, 8)
            },
            vec![2.0, 2.0],
        ),
    }
}

impl ExperimentConfig {
    /// Fill in the blocks `cmd` uses and drop the others, so that the result
    /// describes the run completely.
    pub fn resolve(mut self, cmd: Command) -> Self {
        if cmd == Command::Table1 {
            return Self {
                master_seed: self.master_seed,
                output_dir: self.output_dir,
                ..Default::default()
            };
        }
        let (problem, optimizer, x0) = command_defaults(cmd);
        let custom_problem = self.problem.is_some();
        self.problem.get_or_insert(problem);
        self.optimizer.get_or_insert(optimizer);
        if self.x0.is_none() {
            let dim = self.problem.as_ref().map(|p| p.dim).unwrap_or(x0.len());
            self.x0 = Some(if custom_problem { vec![0.0; dim] } else { x0 });
        }
        let on = |c: Command| cmd == c;
        self.run = on(Command::Run).then(|| self.run.take().unwrap_or_else(empty));
        self.sweep = on(Command::Sweep).then(|| self.sweep.take().unwrap_or_else(empty));
        self.noise = on(Command::Noise).then(|| self.noise.take().unwrap_or_else(empty));
        self.smooth = on(Command::Smooth).then(|| self.smooth.take().unwrap_or_else(empty));
        self.sharpness = on(Command::Sharpness).then(|| self.sharpness.take().unwrap_or_else(empty));
        self.verify = on(Command::Verify).then(|| self.verify.take().unwrap_or_default());
        self
    }
}
