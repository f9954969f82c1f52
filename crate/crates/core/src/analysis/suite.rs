//! The full identity / bound suite behind the `verify` command.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    bound_report, ensemble, minibatch_second_moment_check, momentum_second_moment_check, prop_a1_identity,
    stationarity_check, Check,
};
use crate::error::Result;
use crate::linalg::norm_sq;
use crate::noise::{minibatch_deviation_second_moment, search_direction_noise};
use crate::optimizers::{run, trajectory_divergence, Algorithm, OptimizerConfig, TraceOptions};
use crate::problems::Objective;
use crate::rng::RngStream;
use crate::smoothing::{gd_vs_nshb_expectation, smoothing_gap_check, Branching, Perturbation, SmoothingSpec};
use crate::sweep::{analytic_critical_batch, AnalyticCurveParams, ARCHITECTURE_FIXTURES, TABLE1_FIXTURES};

fn d_seeds() -> usize {
    100
}
fn d_steps() -> usize {
    500
}
fn d_batches() -> Vec<usize> {
    vec![8, 64]
}
fn d_beta() -> f64 {
    0.9
}
fn d_draws() -> usize {
    20_000
}
fn d_triples() -> usize {
    10_000
}
fn d_smooth() -> usize {
    20_000
}
fn d_points() -> usize {
    20
}
fn d_replicas() -> usize {
    10_000
}
fn d_noise_steps() -> usize {
    20_000
}

/// Sizes of the Monte-Carlo parts of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_batches")]
    pub batch_sizes: Vec<usize>,
    /// Momentum of the NSHB ensembles.
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_draws")]
    pub variance_draws: usize,
    #[serde(default = "d_triples")]
    pub identity_triples: usize,
    #[serde(default = "d_smooth")]
    pub smoothing_samples: usize,
    #[serde(default = "d_points")]
    pub smoothing_points: usize,
    #[serde(default = "d_replicas")]
    pub replicas: usize,
    #[serde(default = "d_noise_steps")]
    pub noise_steps: usize,
    /// Comparison point for the bound checks; the objective's minimizer,
    /// else the origin, when absent.
    #[serde(default)]
    pub x_ref: Option<Vec<f64>>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn exact(check: &str, lhs: f64, rhs: f64, notes: String) -> Check {
    Check {
        check: check.into(),
        lhs,
        rhs,
        margin: rhs - lhs,
        holds: lhs == rhs,
        asserted: true,
        notes,
    }
}

/// Run every check. The convergence-bound rows use `objective`, `x0` and
/// the step size of `config`; everything else runs on fixed fixtures.
pub fn verify_suite(
    objective: &Objective,
    config: &OptimizerConfig,
    x0: &[f64],
    settings: &VerifySettings,
    stream: &RngStream,
) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    for f in TABLE1_FIXTURES.iter().chain(&ARCHITECTURE_FIXTURES) {
        out.push(exact(
            "variance-bound-arithmetic",
            f.computed(),
            f.expected,
            format!("{} eta={} eps={} b*={}", f.label, f.eta, f.epsilon, f.b_star),
        ));
    }

    // minibatch variance C^2/b
    let fixture = Objective::isotropic_quadratic(2, 4.0)?;
    for (i, b) in [1usize, 4, 16, 64].into_iter().enumerate() {
        let m = minibatch_deviation_second_moment(
            &fixture,
            &[1.0, -1.0],
            b,
            settings.variance_draws,
            &mut stream.children(&[1, i as u64]).rng(),
        )?;
        let target = 4.0 / b as f64;
        out.push(Check::le(
            "minibatch-variance-scaling",
            (m - target).abs() / target,
            0.05,
            true,
            format!("b={b} measured={m:.6e} expected={target:.6e} (relative error vs 5%)"),
        ));
    }

    // convergence bounds on the configured problem
    let x_ref = settings
        .x_ref
        .clone()
        .or_else(|| objective.minimizer())
        .unwrap_or_else(|| vec![0.0; objective.dim()]);
    let (eta, _) = config.nshb_equivalent();
    for (i, &b) in settings.batch_sizes.iter().enumerate() {
        for (algo, cfg, asserted) in [
            (Algorithm::Sgd, OptimizerConfig::sgd(eta, b), true),
            (Algorithm::Nshb, OptimizerConfig::nshb(eta, settings.beta, b), false),
        ] {
            let tag = if algo == Algorithm::Sgd { 0 } else { 1 };
            let traces = ensemble(
                objective,
                &cfg,
                x0,
                &x_ref,
                settings.steps,
                settings.seeds,
                &stream.children(&[2, tag, i as u64]),
            )?;
            let rep = bound_report(objective, &traces, &x_ref)?;
            let name = if asserted {
                "sgd-convergence-bound"
            } else {
                "nshb-convergence-bound"
            };
            out.push(Check {
                check: name.into(),
                lhs: rep.lhs_estimate - rep.confidence,
                rhs: rep.rhs,
                margin: rep.margin,
                holds: rep.holds,
                asserted,
                notes: format!(
                    "b={b} eta={eta} T={} seeds={} lhs={:.6e} +-{:.6e}; {}",
                    settings.steps,
                    settings.seeds,
                    rep.lhs_estimate,
                    rep.confidence,
                    rep.regime_notes.join("; ")
                ),
            });
            let mut second = if asserted {
                minibatch_second_moment_check(&traces[0])?
            } else {
                momentum_second_moment_check(&traces[0])?
            };
            second.notes = format!("b={b}; {}", second.notes);
            out.push(second);
        }
    }

    // convex-combination identity on random triples
    let mut rng = stream.child(3).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..settings.identity_triples {
        let dim = rng.random_range(1..=8);
        let s = 10f64.powf(rng.random_range(-4.0..4.0));
        let x: Vec<f64> = (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let alpha = rng.random_range(0.0..=1.0);
        let c = prop_a1_identity(&x, &y, alpha)?;
        let scale = norm_sq(&x).max(norm_sq(&y)).max(f64::MIN_POSITIVE);
        worst = worst.max(c.abs_diff / scale);
    }
    out.push(Check::le(
        "convex-combination-identity",
        worst,
        1e-12,
        true,
        format!(
            "max |lhs-rhs|/max(|x|^2,|y|^2) over {} triples",
            settings.identity_triples
        ),
    ));

    // stationarity
    let sine = Objective::sine_bowl(2, 0.5, 3.0, 0.0, None)?;
    let gd = run(
        &sine,
        &OptimizerConfig::sgd(0.05, 1),
        &[0.7, -0.4],
        None,
        20_000,
        &stream.child(4),
        &TraceOptions::count_only(),
    )?;
    let cases = [
        ("quadratic minimizer", fixture.clone(), vec![0.0, 0.0]),
        (
            "non-stationary point",
            Objective::constant_gradient(vec![1.0, 0.0], 0.0)?,
            vec![0.0, 0.0],
        ),
        ("sine-bowl point reached by gradient descent", sine, gd.final_x),
    ];
    for (i, (label, obj, x)) in cases.into_iter().enumerate() {
        let r = stationarity_check(&obj, &x, 256, &stream.children(&[5, i as u64]))?;
        out.push(Check::le(
            "stationarity-variational-inequality",
            if r.consistent { 0.0 } else { 1.0 },
            0.0,
            true,
            format!(
                "{label}: ||grad f|| = {:.3e}, min <grad f, y - x> = {:.3e}; lhs is 1 when the two tests disagree",
                r.grad_norm, r.min_inner_product
            ),
        ));
    }

    // b* > eta C^2 / eps^2 over a grid with K^2 = 0.1
    let mut worst_ratio: f64 = 0.0;
    for eta in [0.01, 0.1, 0.5] {
        for c_sq in [10.0, 128.0, 1280.0] {
            for eps in [0.5, 1.0, 2.0] {
                let p = AnalyticCurveParams::new(1.0, eta * c_sq / 2.0, eta * 0.1 / 2.0, eps * eps);
                let bstar = analytic_critical_batch(&p)?;
                worst_ratio = worst_ratio.max(eta * c_sq / (eps * eps) / bstar);
            }
        }
    }
    out.push(Check {
        check: "critical-batch-lower-bound".into(),
        lhs: worst_ratio,
        rhs: 1.0,
        margin: 1.0 - worst_ratio,
        holds: worst_ratio < 1.0,
        asserted: true,
        notes: "max over 27 (eta, C^2, eps) of (eta C^2/eps^2) / b*".into(),
    });

    // search-direction noise on the constant-gradient problem
    let lin = Objective::constant_gradient(vec![1.0, 0.0], 4.0)?;
    let burn = 200;
    let tr = run(
        &lin,
        &OptimizerConfig::nshb(0.01, 0.9, 4),
        &[0.0, 0.0],
        None,
        settings.noise_steps + burn,
        &stream.child(6),
        &TraceOptions::records(),
    )?;
    let s = search_direction_noise(&tr, &lin, Some(burn))?.summary;
    out.push(Check {
        notes: format!(
            "NSHB beta=0.9 C^2/b=1 window={}; stationary value (1-beta)/(1+beta) = {:.6e}",
            s.window,
            0.1 / 1.9
        ),
        ..Check::le(
            "search-direction-noise-bound",
            s.mean_omega_sq,
            s.bound_c2_over_b,
            false,
            "",
        )
    });
    out.push(Check {
        notes: format!(
            "lhs = mean ||d_(t-1) - g_t||^2, rhs = beta(2-beta) mean ||g_t - grad f||^2; stationary lhs 2/(1+beta) = {:.6e}",
            2.0 / 1.9
        ),
        ..Check::le("buffer-deviation-bound", s.lemma_a4_lhs, s.lemma_a4_rhs, false, "")
    });

    // smoothing gap on f = ||x||
    let nrm = Objective::euclidean_norm(3, 0.0)?;
    let mut prng = stream.child(7).rng();
    let mut points = vec![vec![0.0; 3]];
    for _ in 0..settings.smoothing_points {
        points.push((0..3).map(|_| prng.random_range(-2.0..2.0)).collect());
    }
    for (i, delta) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let spec = SmoothingSpec::new(delta, Perturbation::UnitSphere, settings.smoothing_samples);
        let rep = smoothing_gap_check(&nrm, &points, &spec, None, &stream.children(&[8, i as u64]))?;
        let worst = rep
            .rows
            .iter()
            .map(|r| r.gap - r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(Check {
            check: "smoothing-gap".into(),
            lhs: worst,
            rhs: 0.0,
            margin: -worst,
            holds: rep.all_pass,
            asserted: true,
            notes: format!(
                "delta={delta}: max over {} points of gap - (delta L_f + 3 se); gap at 0 = {:.6e}",
                points.len(),
                rep.rows[0].gap
            ),
        });
    }

    // E[x_(t+1)] = x_t - eta grad f(x_t)
    let lin = Objective::constant_gradient(vec![1.0, 0.0], 4.0)?;
    let warm = gd_vs_nshb_expectation(
        &lin,
        &[0.0, 0.0],
        0.1,
        0.9,
        4,
        settings.replicas,
        200,
        Branching::IndependentHistories,
        &stream.child(9),
    )?;
    out.push(Check::le(
        "gd-expectation-identity",
        warm.discrepancy,
        warm.confidence_radius,
        true,
        format!("burn_in=200 replicas={}; rhs = 3 standard errors", warm.replicas),
    ));
    let cold = gd_vs_nshb_expectation(
        &lin,
        &[0.0, 0.0],
        0.1,
        0.9,
        4,
        settings.replicas,
        0,
        Branching::IndependentHistories,
        &stream.child(10),
    )?;
    out.push(Check::le(
        "gd-expectation-early-bias",
        (cold.discrepancy - cold.early_bias_prediction).abs() / cold.early_bias_prediction,
        0.05,
        false,
        format!(
            "no burn-in: discrepancy {:.6e} vs eta beta ||grad f|| = {:.6e} (relative error vs 5%)",
            cold.discrepancy, cold.early_bias_prediction
        ),
    ));

    // shared-noise algorithm equivalences
    let quad = Objective::isotropic_quadratic(4, 1.0)?.with_center(vec![5.0, -3.0, 4.0, 6.0])?;
    let start = [1.0, 1.0, -1.0, 2.0];
    let eq_stream = stream.child(11);
    let opts = TraceOptions::full();
    let mut worst: f64 = 0.0;
    for gamma in [0.1, 0.01] {
        for beta_bar in [0.5, 0.9] {
            let shb = run(
                &quad,
                &OptimizerConfig::shb(gamma, beta_bar, 4),
                &start,
                None,
                1000,
                &eq_stream,
                &opts,
            )?;
            let nshb = run(
                &quad,
                &OptimizerConfig::nshb(gamma / (1.0 - beta_bar), beta_bar, 4),
                &start,
                None,
                1000,
                &eq_stream,
                &opts,
            )?;
            worst = worst.max(trajectory_divergence(&shb, &nshb));
        }
    }
    let sgd = run(
        &quad,
        &OptimizerConfig::sgd(0.1, 4),
        &start,
        None,
        1000,
        &eq_stream,
        &opts,
    )?;
    let nshb0 = run(
        &quad,
        &OptimizerConfig::nshb(0.1, 0.0, 4),
        &start,
        None,
        1000,
        &eq_stream,
        &opts,
    )?;
    out.push(Check::le(
        "shb-nshb-equivalence",
        worst,
        1e-10,
        true,
        "max relative coordinate divergence after 1000 shared-noise steps, gamma in {0.1,0.01} x beta_bar in {0.5,0.9}",
    ));
    out.push(Check::le(
        "nshb-zero-momentum-is-sgd",
        trajectory_divergence(&sgd, &nshb0),
        1e-10,
        true,
        "1000 shared-noise steps",
    ));

    Ok(out)
}
