//! Convergence-bound right-hand sides, Monte-Carlo left-hand sides, and the
//! algebraic identities behind them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist_sq, dot, norm, norm_sq, sub};
use crate::optimizers::{run, Algorithm, OptimizerConfig, Trace, TraceOptions};
use crate::problems::Objective;
use crate::rng::RngStream;
use crate::smoothing::Perturbation;
use crate::stats::Estimate;
use crate::sweep::estimate_variance;

mod suite;
pub use suite::{verify_suite, VerifySettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    /// `‖x₀ − x‖²/(2ηT)`
    pub first_term: f64,
    /// `D·β·√(C²/b)`; zero for SGD.
    pub momentum_term: f64,
    /// `(η/2)(C²/b + K²)`
    pub variance_term: f64,
}

impl BoundComponents {
    pub fn total(&self) -> f64 {
        self.first_term + self.momentum_term + self.variance_term
    }
}

/// Right-hand side of the SGD / NSHB bound on
/// `(1/T)Σ E⟨x_t − x, ∇f(x_t)⟩`. For SHB pass the mapped `(η, β)`.
#[allow(clippy::too_many_arguments)]
pub fn thm_rhs(
    algo: Algorithm,
    norm_x0_sq: f64,
    eta: f64,
    t: usize,
    c_sq: f64,
    b: usize,
    k_sq: f64,
    d: f64,
    beta: f64,
) -> BoundComponents {
    let cb = c_sq / b as f64;
    BoundComponents {
        first_term: norm_x0_sq / (2.0 * eta * t as f64),
        momentum_term: match algo {
            Algorithm::Sgd => 0.0,
            Algorithm::Nshb | Algorithm::Shb => d * beta * cb.sqrt(),
        },
        variance_term: eta / 2.0 * (cb + k_sq),
    }
}

/// Per-trace time average of `⟨x_t − x_ref, ∇f(x_t)⟩`, then mean and
/// standard error across traces.
pub fn lhs_inner_product(traces: &[Trace], x_ref: &[f64]) -> Result<Estimate> {
    if traces.is_empty() {
        return Err(Error::invalid("need at least one trace"));
    }
    let len = traces[0].records.len();
    let mut per_trace = Vec::with_capacity(traces.len());
    for tr in traces {
        if tr.records.len() != len || len == 0 {
            return Err(Error::invalid("traces must be non-empty and of equal length"));
        }
        let mut s = 0.0;
        for r in &tr.records {
            let x = r
                .x_snapshot
                .as_ref()
                .ok_or_else(|| Error::invalid("trace is missing x snapshots"))?;
            check_dim(x.len(), x_ref.len())?;
            s += dot(&sub(x, x_ref), &r.grad);
        }
        per_trace.push(s / len as f64);
    }
    Ok(Estimate::from_samples(&per_trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub algo: Algorithm,
    pub lhs_estimate: f64,
    /// Three standard errors.
    pub confidence: f64,
    pub rhs: f64,
    pub components: BoundComponents,
    pub holds: bool,
    /// `rhs − (lhs − confidence)`
    pub margin: f64,
    pub regime_notes: Vec<String>,
}

/// `seeds` independent runs of `steps` steps with snapshots, substream
/// `stream/[seed]`.
pub fn ensemble(
    objective: &Objective,
    config: &OptimizerConfig,
    x0: &[f64],
    x_ref: &[f64],
    steps: usize,
    seeds: usize,
    stream: &RngStream,
) -> Result<Vec<Trace>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            run(
                objective,
                config,
                x0,
                None,
                steps,
                &stream.child(s),
                &TraceOptions::full().with_ref(x_ref.to_vec()),
            )
        })
        .collect()
}

/// Bound check on an ensemble. `C²` and `K²` come from the objective when
/// known and are otherwise measured on the traces; `D` is always the
/// measured trajectory radius.
pub fn bound_report(objective: &Objective, traces: &[Trace], x_ref: &[f64]) -> Result<BoundReport> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("need at least one trace"))?;
    let config = &first.config;
    let (eta, beta) = config.nshb_equivalent();
    let steps = first.records.len();
    let lhs = lhs_inner_product(traces, x_ref)?;
    let mut notes = Vec::new();

    let known = objective.known_constants();
    let c_sq = match known.variance_bound {
        Some(c) => {
            notes.push("C^2 known".to_string());
            c
        }
        None => {
            let est: Vec<f64> = traces.iter().filter_map(estimate_variance).collect();
            notes.push("C^2 estimated".to_string());
            est.iter().sum::<f64>() / est.len() as f64
        }
    };
    let k_sq = match known.gradient_sq_bound {
        Some(k) => {
            notes.push("K^2 known".to_string());
            k
        }
        None => {
            notes.push("K^2 = max_t ||grad f(x_t)||^2 over the ensemble".to_string());
            traces.iter().map(|t| t.max_grad_sq).fold(0.0, f64::max)
        }
    };
    let d = traces.iter().filter_map(|t| t.max_dist_to_ref).fold(0.0, f64::max);
    if config.algo != Algorithm::Sgd {
        notes.push(format!("D = {d:.6e} measured max_t ||x_t - x||"));
    }
    if lhs.mean < 0.0 {
        notes.push("lhs negative: inner products of unknown sign, not a convergence signal".to_string());
    }
    let components = thm_rhs(
        config.algo,
        dist_sq(&first.x0, x_ref),
        eta,
        steps,
        c_sq,
        config.batch_size,
        k_sq,
        d,
        beta,
    );
    let rhs = components.total();
    let confidence = lhs.radius(3.0);
    Ok(BoundReport {
        algo: config.algo,
        lhs_estimate: lhs.mean,
        confidence,
        rhs,
        components,
        holds: lhs.mean - confidence <= rhs,
        margin: rhs - (lhs.mean - confidence),
        regime_notes: notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
}

/// Both sides of
/// `‖αx + (1−α)y‖² = α‖x‖² + (1−α)‖y‖² − α(1−α)‖x−y‖²`.
pub fn prop_a1_identity(x: &[f64], y: &[f64], alpha: f64) -> Result<IdentityCheck> {
    check_dim(x.len(), y.len())?;
    let mix: Vec<f64> = x.iter().zip(y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    let lhs = norm_sq(&mix);
    let rhs = alpha * norm_sq(x) + (1.0 - alpha) * norm_sq(y) - alpha * (1.0 - alpha) * dist_sq(x, y);
    Ok(IdentityCheck {
        lhs,
        rhs,
        abs_diff: (lhs - rhs).abs(),
    })
}

pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub min_inner_product: f64,
    pub consistent: bool,
}

/// Compares `∇f(x*) = 0` with the variational inequality
/// `⟨∇f(x*), y − x*⟩ ≥ 0` over random unit directions plus `y = x* − ∇f(x*)`.
pub fn stationarity_check(
    objective: &Objective,
    x_star: &[f64],
    directions: usize,
    stream: &RngStream,
) -> Result<StationarityReport> {
    if directions == 0 {
        return Err(Error::invalid("need at least one direction"));
    }
    let g = objective.eval_grad(x_star)?;
    let mut rng = stream.rng();
    let mut min_ip = -norm_sq(&g);
    for _ in 0..directions {
        let u = Perturbation::UnitSphere.sample(x_star.len(), &mut rng);
        let r: f64 = rng.random_range(0.0..1.0);
        min_ip = min_ip.min(r * dot(&g, &u));
    }
    let grad_norm = norm(&g);
    let stationary = grad_norm <= STATIONARITY_TOL;
    let vi = min_ip >= -STATIONARITY_TOL;
    Ok(StationarityReport {
        grad_norm,
        min_inner_product: min_ip,
        consistent: stationary == vi,
    })
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    /// Diagnostics report but never fail a run.
    pub asserted: bool,
    pub notes: String,
}

impl Check {
    /// `lhs ≤ rhs`, margin `rhs − lhs`.
    pub fn le(check: impl Into<String>, lhs: f64, rhs: f64, asserted: bool, notes: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            holds: lhs <= rhs,
            asserted,
            notes: notes.into(),
        }
    }

    pub fn failed_assertion(&self) -> bool {
        self.asserted && !self.holds
    }
}

/// Windowed mean of `‖∇f_S(x_t)‖²` against the measured `C²/b + K²`, with
/// 5% slack.
pub fn minibatch_second_moment_check(trace: &Trace) -> Result<Check> {
    if trace.records.is_empty() {
        return Err(Error::invalid("trace has no records"));
    }
    let n = trace.records.len() as f64;
    let lhs = trace.records.iter().map(|r| norm_sq(&r.minibatch_grad)).sum::<f64>() / n;
    let dev = trace
        .records
        .iter()
        .map(|r| dist_sq(&r.minibatch_grad, &r.grad))
        .sum::<f64>()
        / n;
    let rhs = dev + trace.max_grad_sq;
    Ok(Check::le(
        "minibatch-second-moment",
        lhs,
        1.05 * rhs,
        true,
        format!("measured C^2/b = {dev:.6e}, K^2 = {:.6e}, 5% slack", trace.max_grad_sq),
    ))
}

/// Windowed mean of `‖d_t‖²` against the measured `C²/b + K²` for a
/// momentum trace (SHB buffers normalized by `1 − β̄`), with 5% slack.
pub fn momentum_second_moment_check(trace: &Trace) -> Result<Check> {
    if trace.records.is_empty() {
        return Err(Error::invalid("trace has no records"));
    }
    let scale = match trace.config.algo {
        Algorithm::Shb => 1.0 - trace.config.beta_bar,
        _ => 1.0,
    };
    let n = trace.records.len() as f64;
    let lhs = trace
        .records
        .iter()
        .map(|r| scale * scale * norm_sq(&r.search_direction))
        .sum::<f64>()
        / n;
    let dev = trace
        .records
        .iter()
        .map(|r| dist_sq(&r.minibatch_grad, &r.grad))
        .sum::<f64>()
        / n;
    let rhs = dev + trace.max_grad_sq;
    Ok(Check::le("momentum-second-moment", lhs, 1.05 * rhs, true, "5% slack"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_examples() {
        let sgd = thm_rhs(Algorithm::Sgd, 1.0, 0.1, 100, 1.0, 1, 1.0, 1.0, 0.9);
        assert!((sgd.total() - 0.15).abs() < 1e-15);
        assert!((sgd.first_term - 0.05).abs() < 1e-15);
        let nshb = thm_rhs(Algorithm::Nshb, 1.0, 0.1, 100, 1.0, 1, 1.0, 1.0, 0.9);
        assert!((nshb.total() - 1.05).abs() < 1e-15);
        assert_eq!(nshb.total(), nshb.first_term + nshb.momentum_term + nshb.variance_term);
        let flat = thm_rhs(Algorithm::Nshb, 1.0, 0.1, 100, 1.0, 1, 1.0, 1.0, 0.0);
        assert_eq!(flat.total(), sgd.total());
    }

    #[test]
    fn convex_combination_examples() {
        let c = prop_a1_identity(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.5, 0.5));
        let y = [3.0, -1.0];
        assert_eq!(prop_a1_identity(&[1.0, 2.0], &y, 0.0).unwrap().abs_diff, 0.0);
        assert_eq!(prop_a1_identity(&y, &[1.0, 2.0], 1.0).unwrap().abs_diff, 0.0);
        assert!(prop_a1_identity(&[1.0], &y, 0.5).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let s = RngStream::new(0);
        let q = Objective::isotropic_quadratic(2, 0.0).unwrap();
        let r = stationarity_check(&q, &[0.0, 0.0], 100, &s).unwrap();
        assert_eq!((r.grad_norm, r.min_inner_product), (0.0, 0.0));
        assert!(r.consistent);
        let lin = Objective::constant_gradient(vec![1.0, 0.0], 0.0).unwrap();
        let r = stationarity_check(&lin, &[0.0, 0.0], 10, &s).unwrap();
        assert_eq!(r.min_inner_product, -1.0);
        assert!(r.consistent);
    }

    #[test]
    fn lhs_degenerate_and_positive() {
        let q = Objective::isotropic_quadratic(2, 0.0).unwrap();
        let cfg = OptimizerConfig::sgd(0.1, 1);
        let tr = ensemble(&q, &cfg, &[0.0, 0.0], &[0.0, 0.0], 1, 1, &RngStream::new(0)).unwrap();
        assert_eq!(lhs_inner_product(&tr, &[0.0, 0.0]).unwrap().mean, 0.0);

        let tr = ensemble(&q, &cfg, &[2.0, -1.0], &[0.0, 0.0], 50, 2, &RngStream::new(0)).unwrap();
        for t in &tr {
            for r in &t.records {
                assert!(dot(r.x_snapshot.as_ref().unwrap(), &r.grad) >= 0.0);
            }
        }
        assert!(lhs_inner_product(&tr, &[0.0, 0.0]).unwrap().mean > 0.0);

        let mut bare = tr.clone();
        bare[0].records[0].x_snapshot = None;
        assert!(lhs_inner_product(&bare, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn sgd_bound_holds_on_noisy_quadratic() {
        let q = Objective::noisy_quadratic(vec![1.0, 0.5], 4.0).unwrap();
        let x0 = [2.0, 2.0];
        for b in [8, 64] {
            let tr = ensemble(
                &q,
                &OptimizerConfig::sgd(0.1, b),
                &x0,
                &[0.0, 0.0],
                500,
                100,
                &RngStream::new(b as u64),
            )
            .unwrap();
            let rep = bound_report(&q, &tr, &[0.0, 0.0]).unwrap();
            assert!(rep.holds, "{rep:?}");
            assert!((rep.rhs - rep.components.total()).abs() == 0.0);
        }
    }

    #[test]
    fn default_suite_passes() {
        let q = Objective::noisy_quadratic(vec![1.0, 0.5], 4.0).unwrap();
        let checks = verify_suite(
            &q,
            &OptimizerConfig::sgd(0.1, 8),
            &[2.0, 2.0],
            &VerifySettings::default(),
            &RngStream::new(0),
        )
        .unwrap();
        for c in &checks {
            println!("{} {} {} {} {}", c.check, c.holds, c.lhs, c.rhs, c.notes);
        }
        assert!(checks.iter().all(|c| !c.failed_assertion()));
        let diag: Vec<bool> = checks.iter().filter(|c| !c.asserted).map(|c| c.holds).collect();
        assert!(!diag.is_empty());
    }

    #[test]
    fn second_moment_checks() {
        let q = Objective::noisy_quadratic(vec![1.0, 0.5], 4.0).unwrap();
        let s = RngStream::new(3);
        let opts = TraceOptions::records();
        let sgd = run(&q, &OptimizerConfig::sgd(0.1, 4), &[2.0, 2.0], None, 2000, &s, &opts).unwrap();
        assert!(minibatch_second_moment_check(&sgd).unwrap().holds);
        let nshb = run(
            &q,
            &OptimizerConfig::nshb(0.1, 0.9, 4),
            &[2.0, 2.0],
            None,
            2000,
            &s,
            &opts,
        )
        .unwrap();
        assert!(momentum_second_moment_check(&nshb).unwrap().holds);
    }
}
