//! Worst-case adaptive sharpness
//! `max_{‖z‖_p ≤ ρ} f(w + c⊙z) − f(w)`, estimated from below.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::norm;
use crate::problems::Objective;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "2")]
    Two,
    #[default]
    #[serde(rename = "inf")]
    Inf,
}

impl PNorm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "2" => Some(Self::Two),
            "inf" | "infinity" => Some(Self::Inf),
            _ => None,
        }
    }

    fn norm(self, z: &[f64]) -> f64 {
        match self {
            Self::Two => norm(z),
            Self::Inf => z.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Project onto `{‖z‖_p ≤ ρ}`.
    fn project(self, z: &mut [f64], rho: f64) {
        match self {
            Self::Inf => z.iter_mut().for_each(|v| *v = v.clamp(-rho, rho)),
            Self::Two => {
                let n = norm(z);
                if n > rho {
                    z.iter_mut().for_each(|v| *v *= rho / n);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharpnessMethod {
    RandomSearch,
    #[default]
    SignAscent,
}

impl SharpnessMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random-search" => Some(Self::RandomSearch),
            "sign-ascent" => Some(Self::SignAscent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSpec {
    pub rho: f64,
    /// Per-coordinate scaling; all ones when absent.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub p: PNorm,
    #[serde(default)]
    pub method: SharpnessMethod,
    pub iters: usize,
    /// Finite sums only: average the loss over this many fixed resampled
    /// training sets instead of using the full sum.
    #[serde(default)]
    pub batches: Option<usize>,
    /// Size of each resampled set; defaults to the number of components.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl SharpnessSpec {
    pub fn new(rho: f64, p: PNorm, method: SharpnessMethod, iters: usize) -> Self {
        Self {
            rho,
            c: None,
            p,
            method,
            iters,
            batches: None,
            batch_size: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::config("sharpness.rho", "must be a non-negative finite number"));
        }
        if self.iters == 0 {
            return Err(Error::config("sharpness.iters", "must be at least 1"));
        }
        if let Some(c) = &self.c {
            if c.len() != dim {
                return Err(Error::config(
                    "sharpness.c",
                    format!("expected {dim} entries, got {}", c.len()),
                ));
            }
            if let Some(i) = c.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config(format!("sharpness.c[{i}]"), "must be positive"));
            }
        }
        if self.batches == Some(0) {
            return Err(Error::config("sharpness.batches", "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("sharpness.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    /// Best `f(w + c⊙z) − f(w)` found; never negative since `z = 0` is a
    /// candidate.
    pub value: f64,
    pub perturbation: Vec<f64>,
    pub evaluations: usize,
    /// Resampled training sets averaged over, for finite sums.
    pub batch_draws: Option<usize>,
}

struct Loss<'a> {
    objective: &'a Objective,
    sets: Vec<Vec<usize>>,
}

impl Loss<'_> {
    fn f(&self, x: &[f64]) -> Result<f64> {
        if self.sets.is_empty() {
            return self.objective.eval_f(x);
        }
        let mut s = 0.0;
        for idx in &self.sets {
            s += self.objective.eval_f_batch(x, idx)?;
        }
        Ok(s / self.sets.len() as f64)
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.sets.is_empty() {
            return self.objective.eval_grad(x);
        }
        let mut g = vec![0.0; x.len()];
        for idx in &self.sets {
            let gi = self.objective.eval_grad_batch(x, idx)?;
            g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
        }
        let k = self.sets.len() as f64;
        g.iter_mut().for_each(|a| *a /= k);
        Ok(g)
    }
}

fn consider(z: &[f64], value: f64, best: &mut f64, best_z: &mut Vec<f64>) {
    if value > *best {
        *best = value;
        *best_z = z.to_vec();
    }
}

/// A point on the boundary of the unit `p`-ball.
fn boundary_direction<R: Rng + ?Sized>(p: PNorm, dim: usize, rng: &mut R) -> Vec<f64> {
    let mut z: Vec<f64> = match p {
        PNorm::Two => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        PNorm::Inf => (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    };
    let n = p.norm(&z);
    if n > 0.0 {
        z.iter_mut().for_each(|v| *v /= n);
    } else {
        z[0] = 1.0;
    }
    z
}

/// Lower bound on the adaptive sharpness of `objective` at `w`.
///
/// `random-search` evaluates `±ρ·u_k` for a fixed sequence of boundary
/// directions `u_k`; `sign-ascent` starts from a random feasible point and
/// takes projected steps of length `ρ/4`. Both keep the best value seen, so
/// the result never decreases with `iters`; random search is also monotone
/// in `ρ` for convex `f`.
pub fn adaptive_sharpness(
    objective: &Objective,
    w: &[f64],
    spec: &SharpnessSpec,
    stream: &RngStream,
) -> Result<SharpnessReport> {
    let dim = objective.dim();
    check_dim(dim, w.len())?;
    spec.validate(dim)?;
    let c = spec.c.clone().unwrap_or_else(|| vec![1.0; dim]);

    let sets = match (spec.batches, objective.sample_count()) {
        (Some(k), Some(n)) => {
            let size = spec.batch_size.unwrap_or(n);
            let mut rng = stream.child(0).rng();
            (0..k)
                .map(|_| (0..size).map(|_| rng.random_range(0..n)).collect())
                .collect()
        }
        _ => Vec::new(),
    };
    let batch_draws = (!sets.is_empty()).then_some(sets.len());
    let loss = Loss { objective, sets };

    let base = loss.f(w)?;
    let mut best = 0.0;
    let mut best_z = vec![0.0; dim];
    let mut evaluations = 1;
    let at = |z: &[f64]| -> Vec<f64> { w.iter().zip(&c).zip(z).map(|((wi, ci), zi)| wi + ci * zi).collect() };

    if spec.rho > 0.0 {
        let draws = stream.child(1);
        match spec.method {
            SharpnessMethod::RandomSearch => {
                for k in 0..spec.iters {
                    let u = boundary_direction(spec.p, dim, &mut draws.child(k as u64).rng());
                    for sign in [1.0, -1.0] {
                        let z: Vec<f64> = u.iter().map(|v| sign * spec.rho * v).collect();
                        let v = loss.f(&at(&z))? - base;
                        evaluations += 1;
                        consider(&z, v, &mut best, &mut best_z);
                    }
                }
            }
            SharpnessMethod::SignAscent => {
                let mut rng = draws.rng();
                let r: f64 = rng.random();
                let mut z: Vec<f64> = boundary_direction(spec.p, dim, &mut rng)
                    .iter()
                    .map(|v| v * spec.rho * r)
                    .collect();
                let step = spec.rho / 4.0;
                let v = loss.f(&at(&z))? - base;
                evaluations += 1;
                consider(&z, v, &mut best, &mut best_z);
                for _ in 0..spec.iters {
                    let g: Vec<f64> = loss.grad(&at(&z))?.iter().zip(&c).map(|(gi, ci)| gi * ci).collect();
                    match spec.p {
                        PNorm::Inf => z.iter_mut().zip(&g).for_each(|(zi, gi)| *zi += step * gi.signum()),
                        PNorm::Two => {
                            let n = norm(&g);
                            if n > 0.0 {
                                z.iter_mut().zip(&g).for_each(|(zi, gi)| *zi += step * gi / n);
                            }
                        }
                    }
                    spec.p.project(&mut z, spec.rho);
                    let v = loss.f(&at(&z))? - base;
                    evaluations += 1;
                    consider(&z, v, &mut best, &mut best_z);
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::NonFinite("sharpness value".into()));
    }
    Ok(SharpnessReport {
        value: best,
        perturbation: best_z.iter().zip(&c).map(|(z, ci)| z * ci).collect(),
        evaluations,
        batch_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad1() -> Objective {
        Objective::isotropic_quadratic(1, 0.0).unwrap()
    }

    #[test]
    fn fixture_one_dimensional_quadratic() {
        let spec = SharpnessSpec::new(1.0, PNorm::Inf, SharpnessMethod::SignAscent, 50);
        let r = adaptive_sharpness(&quad1(), &[0.0], &spec, &RngStream::new(0)).unwrap();
        assert!((r.value - 0.5).abs() < 0.01, "{r:?}");
        let spec = SharpnessSpec::new(1.0, PNorm::Inf, SharpnessMethod::RandomSearch, 5);
        let r = adaptive_sharpness(&quad1(), &[0.0], &spec, &RngStream::new(0)).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trivial_cases() {
        let s = RngStream::new(1);
        let spec = SharpnessSpec::new(0.0, PNorm::Two, SharpnessMethod::SignAscent, 10);
        assert_eq!(adaptive_sharpness(&quad1(), &[0.3], &spec, &s).unwrap().value, 0.0);
        // constant f: zero curvature quadratic
        let flat = Objective::noisy_quadratic(vec![0.0, 0.0], 0.0).unwrap();
        for m in [SharpnessMethod::SignAscent, SharpnessMethod::RandomSearch] {
            let spec = SharpnessSpec::new(2.0, PNorm::Inf, m, 10);
            assert_eq!(adaptive_sharpness(&flat, &[1.0, 1.0], &spec, &s).unwrap().value, 0.0);
        }
    }

    #[test]
    fn two_norm_ball_on_quadratic() {
        // max over ‖z‖ ≤ ρ of ½‖z‖² at w = 0 is ρ²/2
        let q = Objective::isotropic_quadratic(3, 0.0).unwrap();
        let spec = SharpnessSpec::new(2.0, PNorm::Two, SharpnessMethod::SignAscent, 20);
        let r = adaptive_sharpness(&q, &[0.0; 3], &spec, &RngStream::new(2)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn scaling_vector_widens_the_box() {
        let q = quad1();
        let mut spec = SharpnessSpec::new(1.0, PNorm::Inf, SharpnessMethod::SignAscent, 50);
        spec.c = Some(vec![2.0]);
        let r = adaptive_sharpness(&q, &[0.0], &spec, &RngStream::new(3)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        spec.c = Some(vec![-1.0]);
        assert!(adaptive_sharpness(&q, &[0.0], &spec, &RngStream::new(3)).is_err());
    }

    #[test]
    fn finite_sum_batches_are_reported() {
        let ls = Objective::finite_sum_least_squares(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let mut spec = SharpnessSpec::new(0.5, PNorm::Inf, SharpnessMethod::RandomSearch, 20);
        spec.batches = Some(4);
        let r = adaptive_sharpness(&ls, &[0.0, 0.0], &spec, &RngStream::new(4)).unwrap();
        assert_eq!(r.batch_draws, Some(4));
        assert!(r.value > 0.0);
        spec.batches = None;
        assert_eq!(
            adaptive_sharpness(&ls, &[0.0, 0.0], &spec, &RngStream::new(4))
                .unwrap()
                .batch_draws,
            None
        );
    }
}
