//! Randomized smoothing `f̂_δ(x) = E_u[f(x − δu)]`, the implicit smoothing
//! radius of stochastic search directions, and related checks.

mod sharpness;

pub use sharpness::{adaptive_sharpness, PNorm, SharpnessMethod, SharpnessReport, SharpnessSpec};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, norm, norm_sq, scale};
use crate::optimizers::{OptimizerConfig, OptimizerState};
use crate::problems::Objective;
use crate::rng::RngStream;
use crate::stats::Estimate;

/// Draws per parallel chunk of a Monte-Carlo estimate.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Perturbation {
    #[default]
    #[serde(rename = "unit-sphere-uniform")]
    UnitSphere,
    /// Standard normal divided by `E‖N(0, I_d)‖`.
    #[serde(rename = "gaussian-scaled")]
    GaussianScaled,
    #[serde(rename = "ball-uniform")]
    BallUniform,
}

impl Perturbation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit-sphere-uniform" | "unit-sphere" => Some(Self::UnitSphere),
            "gaussian-scaled" | "gaussian" => Some(Self::GaussianScaled),
            "ball-uniform" | "ball" => Some(Self::BallUniform),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, dim: usize, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        match self {
            Self::GaussianScaled => scale(&z, 1.0 / expected_gaussian_norm(dim)),
            Self::UnitSphere | Self::BallUniform => {
                let n = norm(&z);
                let r = if self == Self::BallUniform {
                    rng.random::<f64>().powf(1.0 / dim as f64)
                } else {
                    1.0
                };
                scale(&z, r / n)
            }
        }
    }

    /// `E‖u‖` for this distribution in `dim` dimensions.
    pub fn mean_norm(self, dim: usize) -> f64 {
        match self {
            Self::UnitSphere | Self::GaussianScaled => 1.0,
            Self::BallUniform => dim as f64 / (dim as f64 + 1.0),
        }
    }
}

/// `E‖N(0, I_d)‖ = √2·Γ((d+1)/2)/Γ(d/2)`, via `c₁ = √(2/π)`, `c_{d+1} = d/c_d`.
pub fn expected_gaussian_norm(dim: usize) -> f64 {
    let mut c = (2.0 / std::f64::consts::PI).sqrt();
    for d in 1..dim {
        c = d as f64 / c;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    pub delta: f64,
    #[serde(default)]
    pub dist: Perturbation,
    pub samples: usize,
}

impl SmoothingSpec {
    pub fn new(delta: f64, dist: Perturbation, samples: usize) -> Self {
        Self { delta, dist, samples }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::config("smooth.delta", "must be a non-negative finite number"));
        }
        if self.samples == 0 {
            return Err(Error::config("smooth.samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// `δ = η·√(C²/b)`. The same for SGD and NSHB; there is no momentum
/// argument.
pub fn degree_of_smoothing(eta: f64, c_sq: f64, b: usize) -> f64 {
    eta * (c_sq / b as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedValue {
    pub estimate: f64,
    pub std_error: f64,
    /// Empirical `E‖u‖` over the draws used.
    pub mean_u_norm: f64,
}

/// Monte-Carlo estimate of `f̂_δ(x)`. Draws are split into fixed-size chunks,
/// each with its own substream, so the result is independent of the thread
/// count.
pub fn smoothed_value(
    objective: &Objective,
    x: &[f64],
    spec: &SmoothingSpec,
    stream: &RngStream,
) -> Result<SmoothedValue> {
    spec.validate()?;
    check_dim(objective.dim(), x.len())?;
    if spec.delta == 0.0 {
        let f = objective.eval_f(x)?;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("f at {x:?}")));
        }
        return Ok(SmoothedValue {
            estimate: f,
            std_error: 0.0,
            mean_u_norm: spec.dist.mean_norm(x.len()),
        });
    }
    let chunks = spec.samples.div_ceil(CHUNK);
    let parts: Vec<(Vec<f64>, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let n = CHUNK.min(spec.samples - c * CHUNK);
            let mut vals = Vec::with_capacity(n);
            let mut unorm = 0.0;
            for _ in 0..n {
                let u = spec.dist.sample(x.len(), &mut rng);
                unorm += norm(&u);
                let p: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi - spec.delta * ui).collect();
                vals.push(objective.eval_f(&p)?);
            }
            Ok((vals, unorm))
        })
        .collect::<Result<_>>()?;
    let mut vals = Vec::with_capacity(spec.samples);
    let mut unorm = 0.0;
    for (v, u) in parts {
        vals.extend(v);
        unorm += u;
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("f during smoothing".into()));
    }
    let est = Estimate::from_samples(&vals);
    Ok(SmoothedValue {
        estimate: est.mean,
        std_error: est.std_error,
        mean_u_norm: unorm / spec.samples as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub point: Vec<f64>,
    pub f: f64,
    pub f_hat: f64,
    pub std_error: f64,
    pub gap: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub delta: f64,
    pub lipschitz: f64,
    pub rows: Vec<GapRow>,
    pub all_pass: bool,
}

/// `|f̂_δ(x) − f(x)|` at each point against `δ·L_f + 3·std_error`.
///
/// `lipschitz` overrides the objective's documented constant. A relative
/// rounding slack of 1e-12 is allowed so the equality case `f = ‖x‖, x = 0`
/// with sphere draws is not lost to floating point.
pub fn smoothing_gap_check(
    objective: &Objective,
    points: &[Vec<f64>],
    spec: &SmoothingSpec,
    lipschitz: Option<f64>,
    stream: &RngStream,
) -> Result<GapReport> {
    let lip = lipschitz
        .or(objective.known_constants().lipschitz)
        .ok_or(Error::UnknownConstant("L_f"))?;
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = objective.eval_f(x)?;
            let s = smoothed_value(objective, x, spec, &stream.child(i as u64))?;
            let gap = (s.estimate - f).abs();
            let bound = spec.delta * lip + 3.0 * s.std_error;
            let slack = 1e-12 * f.abs().max(s.estimate.abs()).max(1.0);
            Ok(GapRow {
                point: x.clone(),
                f,
                f_hat: s.estimate,
                std_error: s.std_error,
                gap,
                bound,
                pass: gap <= bound + slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport {
        delta: spec.delta,
        lipschitz: lip,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// How replicas of [`gd_vs_nshb_expectation`] share randomness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    /// Each replica has its own noise for every step, so the average is the
    /// unconditional expectation of `x_{t+1}`.
    #[default]
    IndependentHistories,
    /// All replicas share the burn-in noise and differ only at step `t`; the
    /// average is conditional on the history and carries `−ηβ(d_{t−1} − ∇f)`.
    SharedPrefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationReport {
    pub branching: Branching,
    pub burn_in: usize,
    pub replicas: usize,
    /// `‖mean_r (x_{t+1} − (x_t − η∇f(x_t)))‖`
    pub discrepancy: f64,
    /// Three standard errors of the mean difference vector, in norm.
    pub confidence_radius: f64,
    pub within_confidence: bool,
    /// `η·β·‖∇f(x₀)‖`, the expected discrepancy without burn-in.
    pub early_bias_prediction: f64,
}

/// Minimum replica count.
pub const MIN_REPLICAS: usize = 1000;

/// Checks `E[x_{t+1}] = x_t − η∇f(x_t)` for NSHB after `burn_in` steps.
#[allow(clippy::too_many_arguments)]
pub fn gd_vs_nshb_expectation(
    objective: &Objective,
    x_start: &[f64],
    eta: f64,
    beta: f64,
    batch_size: usize,
    replicas: usize,
    burn_in: usize,
    branching: Branching,
    stream: &RngStream,
) -> Result<ExpectationReport> {
    if replicas < MIN_REPLICAS {
        return Err(Error::invalid(format!("need at least {MIN_REPLICAS} replicas")));
    }
    check_dim(objective.dim(), x_start.len())?;
    let config = OptimizerConfig::nshb(eta, beta, batch_size);
    config.validate()?;

    let advance = |state: &mut OptimizerState, s: &RngStream, steps: usize| -> Result<()> {
        for t in 0..steps {
            let g = objective.minibatch_grad(&state.x, batch_size, &mut s.child(t as u64).rng())?;
            state.step(&config, &g)?;
        }
        Ok(())
    };
    let prefix = match branching {
        Branching::SharedPrefix => {
            let mut st = OptimizerState::new(x_start.to_vec());
            advance(&mut st, &stream.child(u64::MAX), burn_in)?;
            Some(st)
        }
        Branching::IndependentHistories => None,
    };

    let diffs: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rs = stream.child(r as u64);
            let mut st = match &prefix {
                Some(p) => p.clone(),
                None => {
                    let mut st = OptimizerState::new(x_start.to_vec());
                    advance(&mut st, &rs, burn_in)?;
                    st
                }
            };
            let x_t = st.x.clone();
            let grad = objective.eval_grad(&x_t)?;
            let g = objective.minibatch_grad(&x_t, batch_size, &mut rs.child(burn_in as u64).rng())?;
            st.step(&config, &g)?;
            if !all_finite(&st.x) || st.diverged() {
                return Err(Error::NonFinite(format!("replica {r} diverged")));
            }
            Ok(st
                .x
                .iter()
                .zip(&x_t)
                .zip(&grad)
                .map(|((x1, x0), gi)| x1 - (x0 - eta * gi))
                .collect())
        })
        .collect::<Result<_>>()?;

    let dim = x_start.len();
    let rf = replicas as f64;
    let mut mean = vec![0.0; dim];
    for d in &diffs {
        mean.iter_mut().zip(d).for_each(|(m, v)| *m += v / rf);
    }
    let mut var_sum = 0.0;
    for j in 0..dim {
        let v = diffs.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / (rf - 1.0);
        var_sum += v;
    }
    let discrepancy = norm(&mean);
    let confidence_radius = 3.0 * (var_sum / rf).sqrt();
    let g0 = objective.eval_grad(x_start)?;
    Ok(ExpectationReport {
        branching,
        burn_in,
        replicas,
        discrepancy,
        confidence_radius,
        within_confidence: discrepancy <= confidence_radius,
        early_bias_prediction: eta * beta * norm_sq(&g0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_of_smoothing_examples() {
        assert_eq!(degree_of_smoothing(0.1, 0.0, 8), 0.0);
        assert!((degree_of_smoothing(0.1, 1280.0, 128) - 0.316_227_766).abs() < 1e-8);
        let grid: Vec<f64> = (3..=13).map(|k| degree_of_smoothing(0.1, 1280.0, 1 << k)).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn gaussian_norm_constant() {
        assert!((expected_gaussian_norm(1) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((expected_gaussian_norm(2) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-15);
        // E‖N_3‖ = 2√(2/π)
        assert!((expected_gaussian_norm(3) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn perturbation_norms() {
        let mut rng = RngStream::new(9).rng();
        for dist in [
            Perturbation::UnitSphere,
            Perturbation::GaussianScaled,
            Perturbation::BallUniform,
        ] {
            let n = 50_000;
            let m = (0..n).map(|_| norm(&dist.sample(5, &mut rng))).sum::<f64>() / n as f64;
            assert!((m - dist.mean_norm(5)).abs() < 0.01, "{dist:?} {m}");
        }
        let u = Perturbation::UnitSphere.sample(3, &mut rng);
        assert!((norm(&u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn smoothed_value_examples() {
        let s = RngStream::new(2);
        let q = Objective::isotropic_quadratic(3, 0.0).unwrap();
        let zero = smoothed_value(
            &q,
            &[1.0, 2.0, 3.0],
            &SmoothingSpec::new(0.0, Perturbation::UnitSphere, 10),
            &s,
        )
        .unwrap();
        assert_eq!((zero.estimate, zero.std_error), (7.0, 0.0));
        let v = smoothed_value(
            &q,
            &[0.0; 3],
            &SmoothingSpec::new(0.4, Perturbation::UnitSphere, 1000),
            &s,
        )
        .unwrap();
        assert!((v.estimate - 0.08).abs() < 1e-12);

        let nrm = Objective::euclidean_norm(2, 0.0).unwrap();
        let v = smoothed_value(
            &nrm,
            &[0.3, -0.2],
            &SmoothingSpec::new(0.5, Perturbation::GaussianScaled, 20_000),
            &s,
        )
        .unwrap();
        assert!((v.estimate - nrm.eval_f(&[0.3, -0.2]).unwrap()).abs() <= 0.5 + 3.0 * v.std_error);
    }

    #[test]
    fn gap_check_boundary_and_errors() {
        let s = RngStream::new(4);
        let nrm = Objective::euclidean_norm(3, 0.0).unwrap();
        let spec = SmoothingSpec::new(0.5, Perturbation::UnitSphere, 5000);
        let r = smoothing_gap_check(&nrm, &[vec![0.0; 3]], &spec, None, &s).unwrap();
        assert!(r.all_pass);
        assert!((r.rows[0].gap - 0.5).abs() < 1e-12);

        let r = smoothing_gap_check(
            &nrm,
            &[vec![1.0, 0.0, 0.0]],
            &SmoothingSpec::new(0.0, Perturbation::UnitSphere, 1),
            None,
            &s,
        )
        .unwrap();
        assert_eq!(r.rows[0].gap, 0.0);

        let ls = Objective::finite_sum_least_squares(vec![vec![1.0]], vec![0.0]).unwrap();
        assert!(matches!(
            smoothing_gap_check(&ls, &[vec![0.0]], &spec, None, &s),
            Err(Error::UnknownConstant("L_f"))
        ));
    }

    #[test]
    fn smoothing_is_thread_count_independent() {
        let q = Objective::euclidean_norm(4, 0.0).unwrap();
        let spec = SmoothingSpec::new(0.3, Perturbation::BallUniform, 20_000);
        let s = RngStream::new(5);
        let a = smoothed_value(&q, &[0.1, 0.2, 0.3, 0.4], &spec, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| smoothed_value(&q, &[0.1, 0.2, 0.3, 0.4], &spec, &s).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn expectation_identity() {
        let obj = Objective::constant_gradient(vec![1.0, 0.0], 4.0).unwrap();
        let s = RngStream::new(8);
        let sgd = gd_vs_nshb_expectation(&obj, &[0.0, 0.0], 0.1, 0.0, 4, 4000, 0, Branching::default(), &s).unwrap();
        assert!(sgd.discrepancy <= 4.0 * (0.01 * 4.0 / (4.0 * 4000.0f64)).sqrt());

        let burned =
            gd_vs_nshb_expectation(&obj, &[0.0, 0.0], 0.1, 0.9, 4, 4000, 200, Branching::default(), &s).unwrap();
        assert!(burned.within_confidence, "{burned:?}");

        let cold = gd_vs_nshb_expectation(&obj, &[0.0, 0.0], 0.1, 0.9, 4, 4000, 0, Branching::default(), &s).unwrap();
        assert!((cold.discrepancy - 0.09).abs() < 0.05 * 0.09, "{cold:?}");
        assert!((cold.early_bias_prediction - 0.09).abs() < 1e-15);

        assert!(gd_vs_nshb_expectation(&obj, &[0.0, 0.0], 0.1, 0.9, 4, 10, 0, Branching::default(), &s).is_err());
    }
}
