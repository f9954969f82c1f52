//! Gradient noise `‖G_ξ(x) − ∇f(x)‖` and search-direction noise
//! `ω_t = d_t − ∇f(x_t)`, plus light-tail statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist_sq, norm, norm_sq, scale, sub};
use crate::optimizers::{Algorithm, Trace};
use crate::problems::Objective;
use crate::sweep::{estimate_variance, ConstantSource};

/// `m` independent single-sample gradient-noise norms at a fixed `x`.
pub fn gradient_noise_samples<R: Rng + ?Sized>(
    objective: &Objective,
    x: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(gradient_noise_vectors(objective, x, m, rng)?
        .iter()
        .map(|v| norm(v))
        .collect())
}

/// `m` independent deviations `G_ξ(x) − ∇f(x)`.
pub fn gradient_noise_vectors<R: Rng + ?Sized>(
    objective: &Objective,
    x: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let grad = objective.eval_grad(x)?;
    (0..m)
        .map(|_| Ok(sub(&objective.sample_stochastic_grad(x, rng)?, &grad)))
        .collect()
}

/// Mean of `‖∇f_S(x) − ∇f(x)‖²` over `m` minibatches of size `b`.
pub fn minibatch_deviation_second_moment<R: Rng + ?Sized>(
    objective: &Objective,
    x: &[f64],
    b: usize,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let grad = objective.eval_grad(x)?;
    let mut sum = 0.0;
    for _ in 0..m {
        sum += dist_sq(&objective.minibatch_grad(x, b, rng)?, &grad);
    }
    Ok(sum / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStep {
    pub t: usize,
    /// `‖∇f_S(x_t) − ∇f(x_t)‖²` for the minibatch actually used.
    pub grad_noise_sq: f64,
    pub omega_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub algo: Algorithm,
    pub burn_in: usize,
    pub window: usize,
    pub mean_omega_sq: f64,
    pub mean_grad_noise_sq: f64,
    #[serde(rename = "bound_C2_over_b")]
    pub bound_c2_over_b: f64,
    pub bound_source: ConstantSource,
    pub thm31_holds: bool,
    #[serde(rename = "lemmaA4_lhs")]
    pub lemma_a4_lhs: f64,
    #[serde(rename = "lemmaA4_rhs")]
    pub lemma_a4_rhs: f64,
    #[serde(rename = "lemmaA4_holds")]
    pub lemma_a4_holds: bool,
    /// Mean `‖ω_t‖²` over the discarded burn-in steps.
    pub early_mean_omega_sq: f64,
    /// `β²‖∇f(x₀)‖²`: squared mean of `ω₀` when the buffer starts at zero.
    pub early_bias_sq: f64,
    /// Set when `early_bias_sq` exceeds `C²/b`, i.e. the first steps are
    /// dominated by start-up bias rather than noise.
    pub early_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub per_step: Vec<NoiseStep>,
    pub summary: NoiseSummary,
}

/// `max(100, ⌈10/(1 − β)⌉)`, with `β` the momentum of the configuration.
pub fn default_burn_in(momentum: f64) -> usize {
    let scaled = if momentum < 1.0 {
        (10.0 / (1.0 - momentum) - 1e-9).ceil()
    } else {
        f64::INFINITY
    };
    if scaled.is_finite() {
        (scaled as usize).max(100)
    } else {
        usize::MAX
    }
}

/// Search-direction noise of a recorded trace.
///
/// `ω_t` is `search_direction − ∇f(x_t)`, so for SHB it is `m_t − ∇f(x_t)`.
/// The buffer-deviation sides use the NSHB-normalized buffer `d = (1 − β̄)m`.
pub fn search_direction_noise(trace: &Trace, objective: &Objective, burn_in: Option<usize>) -> Result<NoiseReport> {
    let config = &trace.config;
    let beta = config.momentum();
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(beta));
    let needed = burn_in.saturating_add(1);
    if trace.records.len() < needed {
        return Err(Error::TraceTooShort {
            needed,
            got: trace.records.len(),
        });
    }
    for r in &trace.records {
        check_dim(objective.dim(), r.grad.len())?;
    }

    let per_step: Vec<NoiseStep> = trace
        .records
        .iter()
        .map(|r| NoiseStep {
            t: r.t,
            grad_noise_sq: dist_sq(&r.minibatch_grad, &r.grad),
            omega_sq: dist_sq(&r.search_direction, &r.grad),
        })
        .collect();

    let norm_dir = |v: &[f64]| match config.algo {
        Algorithm::Shb => scale(v, 1.0 - config.beta_bar),
        _ => v.to_vec(),
    };
    let window = &per_step[burn_in..];
    let n = window.len() as f64;
    let mean_omega_sq = window.iter().map(|s| s.omega_sq).sum::<f64>() / n;
    let mean_grad_noise_sq = window.iter().map(|s| s.grad_noise_sq).sum::<f64>() / n;

    let mut lhs = 0.0;
    for i in burn_in..trace.records.len() {
        let r = &trace.records[i];
        let prev = if i == 0 {
            vec![0.0; r.grad.len()]
        } else {
            norm_dir(&trace.records[i - 1].search_direction)
        };
        lhs += dist_sq(&prev, &r.minibatch_grad);
    }
    let lemma_a4_lhs = lhs / n;
    let lemma_a4_rhs = beta * (2.0 - beta) * mean_grad_noise_sq;

    let b = config.batch_size as f64;
    let (c_sq, bound_source) = match objective.known_constants().variance_bound {
        Some(c) => (c, ConstantSource::Known),
        None => (
            estimate_variance(trace).ok_or(Error::UnknownConstant("C^2"))?,
            ConstantSource::Estimated,
        ),
    };
    let bound = c_sq / b;
    let early_bias_sq = beta * beta * norm_sq(&trace.records[0].grad);
    let early_mean_omega_sq = if burn_in == 0 {
        0.0
    } else {
        per_step[..burn_in].iter().map(|s| s.omega_sq).sum::<f64>() / burn_in as f64
    };

    Ok(NoiseReport {
        summary: NoiseSummary {
            algo: config.algo,
            burn_in,
            window: window.len(),
            mean_omega_sq,
            mean_grad_noise_sq,
            bound_c2_over_b: bound,
            bound_source,
            thm31_holds: mean_omega_sq <= bound,
            lemma_a4_lhs,
            lemma_a4_rhs,
            lemma_a4_holds: lemma_a4_lhs <= lemma_a4_rhs,
            early_mean_omega_sq,
            early_bias_sq,
            early_bias: early_bias_sq > bound,
        },
        per_step,
    })
}

/// All coordinates of `ω_t` over the post-burn-in window, flattened.
pub fn omega_elements(trace: &Trace, burn_in: usize) -> Vec<f64> {
    trace
        .records
        .iter()
        .skip(burn_in)
        .flat_map(|r| sub(&r.search_direction, &r.grad))
        .collect()
}

pub const TAIL_SIGMAS: [f64; 3] = [3.0, 4.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub sample_count: usize,
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
    /// Large-sample standard error of the excess kurtosis, `√(24/n)`.
    pub kurtosis_std_error: f64,
    /// Fraction of samples with `|x − mean| > kσ`, for `k` in [`TAIL_SIGMAS`].
    pub tail_mass_beyond_k_sigma: [f64; 3],
}

pub const MIN_TAIL_SAMPLES: usize = 30;

pub fn tail_stats(samples: &[f64]) -> Result<TailStats> {
    let n = samples.len();
    if n < MIN_TAIL_SAMPLES {
        return Err(Error::invalid(format!(
            "tail statistics need at least {MIN_TAIL_SAMPLES} samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tail_stats sample".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in samples {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    let (m2, m4) = (m2 / nf, m4 / nf);
    let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let sd = variance.sqrt();
    let mut tail = [0.0; 3];
    for (slot, k) in tail.iter_mut().zip(TAIL_SIGMAS) {
        *slot = samples.iter().filter(|v| (*v - mean).abs() > k * sd).count() as f64 / nf;
    }
    Ok(TailStats {
        sample_count: n,
        mean,
        variance,
        excess_kurtosis,
        kurtosis_std_error: (24.0 / nf).sqrt(),
        tail_mass_beyond_k_sigma: tail,
    })
}
