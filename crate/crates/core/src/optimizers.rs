//! SGD, normalized stochastic heavy ball (NSHB) and stochastic heavy ball
//! (SHB), driven by a shared-noise run loop.
//!
//! NSHB keeps `d_t = (1-β) g_t + β d_{t-1}` and steps `x ← x - η d_t`.
//! SHB keeps `m_t = g_t + β̄ m_{t-1}` and steps `x ← x - γ m_t`. With
//! `η = γ/(1-β̄)` and `β = β̄` the two produce the same iterates, since
//! `m_t = d_t/(1-β)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, dist, max_relative_divergence, norm};
use crate::problems::Objective;
use crate::rng::RngStream;
use crate::sweep::StopRule;

/// Any coordinate beyond this magnitude ends a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Nshb,
    Shb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algo: Algorithm,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub beta_bar: f64,
    pub batch_size: usize,
}

impl OptimizerConfig {
    pub fn sgd(eta: f64, batch_size: usize) -> Self {
        Self {
            algo: Algorithm::Sgd,
            eta,
            beta: 0.0,
            gamma: 0.0,
            beta_bar: 0.0,
            batch_size,
        }
    }

    pub fn nshb(eta: f64, beta: f64, batch_size: usize) -> Self {
        Self {
            algo: Algorithm::Nshb,
            eta,
            beta,
            gamma: 0.0,
            beta_bar: 0.0,
            batch_size,
        }
    }

    pub fn shb(gamma: f64, beta_bar: f64, batch_size: usize) -> Self {
        Self {
            algo: Algorithm::Shb,
            eta: 0.0,
            beta: 0.0,
            gamma,
            beta_bar,
            batch_size,
        }
    }

    pub fn with_batch_size(&self, batch_size: usize) -> Self {
        Self {
            batch_size,
            ..self.clone()
        }
    }

    /// Checks the fields the selected algorithm uses. Errors name the
    /// offending field as a config path.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    format!("optimizer.{name}"),
                    "must be a positive finite number",
                ))
            }
        };
        let momentum = |v: f64, name: &str| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("optimizer.{name}"), "must lie in [0, 1)"))
            }
        };
        if self.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be at least 1"));
        }
        match self.algo {
            Algorithm::Sgd => positive(self.eta, "eta"),
            Algorithm::Nshb => {
                positive(self.eta, "eta")?;
                momentum(self.beta, "beta")
            }
            Algorithm::Shb => {
                positive(self.gamma, "gamma")?;
                momentum(self.beta_bar, "beta_bar")
            }
        }
    }

    /// `(η, β)` of the NSHB run that produces the same iterates.
    pub fn nshb_equivalent(&self) -> (f64, f64) {
        match self.algo {
            Algorithm::Sgd => (self.eta, 0.0),
            Algorithm::Nshb => (self.eta, self.beta),
            Algorithm::Shb => (self.gamma / (1.0 - self.beta_bar), self.beta_bar),
        }
    }

    /// Momentum factor of the configured algorithm (0 for SGD).
    pub fn momentum(&self) -> f64 {
        match self.algo {
            Algorithm::Sgd => 0.0,
            Algorithm::Nshb => self.beta,
            Algorithm::Shb => self.beta_bar,
        }
    }
}

/// `(γ, β̄) ↦ (γ/(1-β̄), β̄)`.
pub fn map_shb_to_nshb(gamma: f64, beta_bar: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&beta_bar) {
        return Err(Error::Domain(format!("beta_bar = {beta_bar} is outside [0, 1)")));
    }
    Ok((gamma / (1.0 - beta_bar), beta_bar))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    /// `d_{t-1}` for NSHB, `m_{t-1}` for SHB; zero at `t = 0`.
    pub momentum_buffer: Vec<f64>,
    pub t: usize,
}

fn check_inputs(state: &OptimizerState, g: &[f64]) -> Result<()> {
    check_dim(state.x.len(), g.len())?;
    if !all_finite(g) {
        return Err(Error::NonFinite(format!("gradient at step {}", state.t)));
    }
    Ok(())
}

impl OptimizerState {
    pub fn new(x0: Vec<f64>) -> Self {
        let dim = x0.len();
        Self {
            x: x0,
            momentum_buffer: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn sgd_step(&mut self, g: &[f64], eta: f64) -> Result<()> {
        check_inputs(self, g)?;
        for (xi, gi) in self.x.iter_mut().zip(g) {
            *xi -= eta * gi;
        }
        self.t += 1;
        Ok(())
    }

    pub fn nshb_step(&mut self, g: &[f64], eta: f64, beta: f64) -> Result<()> {
        check_inputs(self, g)?;
        for ((xi, di), gi) in self.x.iter_mut().zip(self.momentum_buffer.iter_mut()).zip(g) {
            *di = (1.0 - beta) * gi + beta * *di;
            *xi -= eta * *di;
        }
        self.t += 1;
        Ok(())
    }

    pub fn shb_step(&mut self, g: &[f64], gamma: f64, beta_bar: f64) -> Result<()> {
        check_inputs(self, g)?;
        for ((xi, mi), gi) in self.x.iter_mut().zip(self.momentum_buffer.iter_mut()).zip(g) {
            *mi = gi + beta_bar * *mi;
            *xi -= gamma * *mi;
        }
        self.t += 1;
        Ok(())
    }

    /// Apply one step of `config.algo` and return the search direction used
    /// (`g`, `d_t` or `m_t`).
    pub fn step(&mut self, config: &OptimizerConfig, g: &[f64]) -> Result<Vec<f64>> {
        match config.algo {
            Algorithm::Sgd => {
                self.sgd_step(g, config.eta)?;
                Ok(g.to_vec())
            }
            Algorithm::Nshb => {
                self.nshb_step(g, config.eta, config.beta)?;
                Ok(self.momentum_buffer.clone())
            }
            Algorithm::Shb => {
                self.shb_step(g, config.gamma, config.beta_bar)?;
                Ok(self.momentum_buffer.clone())
            }
        }
    }

    /// Non-finite or beyond [`DIVERGENCE_THRESHOLD`].
    pub fn diverged(&self) -> bool {
        self.x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD)
    }
}

/// Observables of step `t`, taken at the iterate `x_t` before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub f_value: f64,
    /// Exact `∇f(x_t)`.
    pub grad: Vec<f64>,
    /// `∇f_S(x_t)` for SGD, `d_t` for NSHB, `m_t` for SHB.
    pub search_direction: Vec<f64>,
    pub minibatch_grad: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_snapshot: Option<Vec<f64>>,
    pub dist_to_ref: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    Converged,
    StepCap,
    Diverged,
}

impl ExitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::Converged => "converged",
            ExitReason::StepCap => "step-cap",
            ExitReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceOptions {
    /// Reference point for `dist_to_ref`; defaults to the objective's known
    /// minimizer when absent.
    pub x_ref: Option<Vec<f64>>,
    /// Store per-step records. Off for pure step counting.
    pub keep_records: bool,
    pub snapshots: bool,
}

impl TraceOptions {
    pub fn full() -> Self {
        Self {
            x_ref: None,
            keep_records: true,
            snapshots: true,
        }
    }

    pub fn records() -> Self {
        Self {
            x_ref: None,
            keep_records: true,
            snapshots: false,
        }
    }

    pub fn count_only() -> Self {
        Self::default()
    }

    pub fn with_ref(mut self, x_ref: Vec<f64>) -> Self {
        self.x_ref = Some(x_ref);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config: OptimizerConfig,
    pub x0: Vec<f64>,
    pub records: Vec<TraceRecord>,
    /// Steps executed (equals `records.len()` when records are kept).
    pub steps: usize,
    pub exit: ExitReason,
    pub final_x: Vec<f64>,
    pub x_ref: Option<Vec<f64>>,
    /// `max_t ‖x_t − x_ref‖`, the a-posteriori trajectory radius.
    pub max_dist_to_ref: Option<f64>,
    /// `max_t ‖∇f(x_t)‖²`.
    pub max_grad_sq: f64,
}

/// Run `config` from `x0` until `stop` fires or `max_steps` steps are taken.
///
/// The minibatch at step `t` is drawn from `stream.child(t)`, so two runs
/// sharing `stream` see the same noise sequence whatever the algorithm.
pub fn run(
    objective: &Objective,
    config: &OptimizerConfig,
    x0: &[f64],
    stop: Option<&StopRule>,
    max_steps: usize,
    stream: &RngStream,
    options: &TraceOptions,
) -> Result<Trace> {
    config.validate()?;
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    check_dim(objective.dim(), x0.len())?;
    if let Some(rule) = stop {
        rule.validate()?;
    }
    let x_ref = options.x_ref.clone().or_else(|| objective.minimizer());
    if let Some(r) = &x_ref {
        check_dim(objective.dim(), r.len())?;
    }

    let mut state = OptimizerState::new(x0.to_vec());
    let mut tracker = stop.map(StopRule::tracker);
    let mut records = Vec::new();
    let mut exit = ExitReason::StepCap;
    let mut steps = 0;
    let mut max_dist: Option<f64> = None;
    let mut max_grad_sq: f64 = 0.0;

    for t in 0..max_steps {
        let f_value = objective.eval_f(&state.x)?;
        let grad = objective.eval_grad(&state.x)?;
        if !f_value.is_finite() || !all_finite(&grad) {
            exit = ExitReason::Diverged;
            break;
        }
        let mut rng = stream.child(t as u64).rng();
        let g = objective.minibatch_grad(&state.x, config.batch_size, &mut rng)?;
        if !all_finite(&g) {
            exit = ExitReason::Diverged;
            break;
        }
        let x_t = state.x.clone();
        let dist_to_ref = x_ref.as_ref().map(|r| dist(&x_t, r));
        if let Some(d) = dist_to_ref {
            max_dist = Some(max_dist.map_or(d, |m| m.max(d)));
        }
        let gn = norm(&grad);
        max_grad_sq = max_grad_sq.max(gn * gn);

        let direction = state.step(config, &g)?;
        steps += 1;

        let fired = tracker.as_mut().map(|tr| tr.observe(&x_t, &grad, &g)).unwrap_or(false);

        if options.keep_records {
            records.push(TraceRecord {
                t,
                f_value,
                grad,
                search_direction: direction,
                minibatch_grad: g,
                x_snapshot: options.snapshots.then_some(x_t),
                dist_to_ref,
            });
        }
        if fired {
            exit = ExitReason::Converged;
            break;
        }
        if state.diverged() {
            exit = ExitReason::Diverged;
            break;
        }
    }

    Ok(Trace {
        config: config.clone(),
        x0: x0.to_vec(),
        records,
        steps,
        exit,
        final_x: state.x,
        x_ref,
        max_dist_to_ref: max_dist,
        max_grad_sq,
    })
}

/// Largest per-coordinate relative divergence between two runs, over the
/// recorded snapshots and the final iterate.
pub fn trajectory_divergence(a: &Trace, b: &Trace) -> f64 {
    let mut worst = max_relative_divergence(&a.final_x, &b.final_x);
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if let (Some(xa), Some(xb)) = (&ra.x_snapshot, &rb.x_snapshot) {
            worst = worst.max(max_relative_divergence(xa, xb));
        }
    }
    worst
}
