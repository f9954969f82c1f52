//! Synthetic stochastic objectives with analytically known constants.
//!
//! Every objective exposes the exact value and gradient plus a stochastic
//! oracle. For the additive-noise kinds the oracle returns the exact gradient
//! plus isotropic Gaussian noise with per-coordinate variance `C²/dim`, so the
//! expected squared deviation is exactly `C²`. The finite-sum kind returns the
//! gradient of one uniformly drawn component.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    NoisyQuadratic,
    ConstantGradient,
    FiniteSumLeastSquares,
    NonconvexSineBowl,
    EuclideanNorm,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::NoisyQuadratic => "noisy-quadratic",
            ObjectiveKind::ConstantGradient => "constant-gradient",
            ObjectiveKind::FiniteSumLeastSquares => "finite-sum-least-squares",
            ObjectiveKind::NonconvexSineBowl => "nonconvex-sine-bowl",
            ObjectiveKind::EuclideanNorm => "euclidean-norm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    /// `½ Σ h_j (x_j - c_j)²`
    Quadratic { curvature: Vec<f64>, center: Vec<f64> },
    /// `cᵀx`
    Linear { coefficients: Vec<f64> },
    /// `(1/n) Σ ½ (a_iᵀx - y_i)²`
    LeastSquares { features: Vec<Vec<f64>>, targets: Vec<f64> },
    /// `½‖x‖² + a Σ sin(ω x_j)`
    SineBowl {
        amplitude: f64,
        frequency: f64,
        box_radius: Option<f64>,
    },
    /// `‖x‖`
    Norm,
}

/// Analytic constants of an objective. `None` means unknown; such values are
/// estimated from traces by the modules that need them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownConstants {
    pub variance_bound: Option<f64>,
    pub gradient_sq_bound: Option<f64>,
    pub lipschitz: Option<f64>,
    pub sample_count: Option<usize>,
}

/// The JSON problem block: `{"kind", "dim", "params", "variance"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ObjectiveKind,
    pub dim: usize,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub variance: f64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    curvature: Option<Vec<f64>>,
    center: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    coefficients: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LeastSquaresParams {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SineBowlParams {
    amplitude: f64,
    frequency: f64,
    box_radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn parse_params<T: serde::de::DeserializeOwned>(params: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(params).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        Error::config(path, e.into_inner().to_string())
    })
}

/// An objective oracle. Immutable after construction; all randomness is
/// supplied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    dim: usize,
    variance: f64,
    model: Model,
}

impl Objective {
    fn build(dim: usize, variance: f64, model: Model) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::invalid("variance must be finite and non-negative"));
        }
        let obj = Self { dim, variance, model };
        obj.validate()?;
        Ok(obj)
    }

    fn validate(&self) -> Result<()> {
        match &self.model {
            Model::Quadratic { curvature, center } => {
                check_dim(self.dim, curvature.len())?;
                check_dim(self.dim, center.len())?;
                if curvature.iter().any(|h| !h.is_finite() || *h < 0.0) {
                    return Err(Error::invalid("curvature entries must be finite and >= 0"));
                }
            }
            Model::Linear { coefficients } => check_dim(self.dim, coefficients.len())?,
            Model::LeastSquares { features, targets } => {
                if features.is_empty() {
                    return Err(Error::invalid("finite-sum objective needs n >= 1 samples"));
                }
                check_dim(features.len(), targets.len())?;
                for row in features {
                    check_dim(self.dim, row.len())?;
                }
                if self.variance != 0.0 {
                    return Err(Error::invalid(
                        "finite-sum objectives draw component gradients; variance must be 0",
                    ));
                }
            }
            Model::SineBowl {
                amplitude,
                frequency,
                box_radius,
            } => {
                if !amplitude.is_finite() || !frequency.is_finite() {
                    return Err(Error::invalid("sine parameters must be finite"));
                }
                if let Some(r) = box_radius {
                    if !(r.is_finite() && *r > 0.0) {
                        return Err(Error::invalid("box_radius must be positive"));
                    }
                }
            }
            Model::Norm => {}
        }
        Ok(())
    }

    /// `½ Σ h_j x_j²` with additive noise of total variance `variance`.
    pub fn noisy_quadratic(curvature: Vec<f64>, variance: f64) -> Result<Self> {
        let dim = curvature.len();
        Self::build(
            dim,
            variance,
            Model::Quadratic {
                curvature,
                center: vec![0.0; dim],
            },
        )
    }

    /// `½‖x‖²` in `dim` dimensions.
    pub fn isotropic_quadratic(dim: usize, variance: f64) -> Result<Self> {
        Self::noisy_quadratic(vec![1.0; dim], variance)
    }

    /// Shift the minimizer of a quadratic objective to `center`.
    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        match &mut self.model {
            Model::Quadratic { center: c, .. } => {
                check_dim(self.dim, center.len())?;
                *c = center;
                Ok(self)
            }
            _ => Err(Error::invalid("only quadratic objectives have a center")),
        }
    }

    pub fn constant_gradient(coefficients: Vec<f64>, variance: f64) -> Result<Self> {
        Self::build(coefficients.len(), variance, Model::Linear { coefficients })
    }

    /// Least squares over rows `features[i]` with targets `targets[i]`.
    pub fn finite_sum_least_squares(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let dim = features.first().map(Vec::len).unwrap_or(0);
        Self::build(dim, 0.0, Model::LeastSquares { features, targets })
    }

    pub fn sine_bowl(
        dim: usize,
        amplitude: f64,
        frequency: f64,
        variance: f64,
        box_radius: Option<f64>,
    ) -> Result<Self> {
        Self::build(
            dim,
            variance,
            Model::SineBowl {
                amplitude,
                frequency,
                box_radius,
            },
        )
    }

    pub fn euclidean_norm(dim: usize, variance: f64) -> Result<Self> {
        Self::build(dim, variance, Model::Norm)
    }

    pub fn from_config(cfg: &ProblemConfig) -> Result<Self> {
        let dim = cfg.dim;
        if dim == 0 {
            return Err(Error::config("problem.dim", "must be at least 1"));
        }
        if !(cfg.variance.is_finite() && cfg.variance >= 0.0) {
            return Err(Error::config("problem.variance", "must be finite and non-negative"));
        }
        let prefix = "problem.params";
        let model = match cfg.kind {
            ObjectiveKind::NoisyQuadratic => {
                let p: QuadraticParams = parse_params(&cfg.params, prefix)?;
                Model::Quadratic {
                    curvature: p.curvature.unwrap_or_else(|| vec![1.0; dim]),
                    center: p.center.unwrap_or_else(|| vec![0.0; dim]),
                }
            }
            ObjectiveKind::ConstantGradient => {
                let p: LinearParams = parse_params(&cfg.params, prefix)?;
                Model::Linear {
                    coefficients: p.coefficients,
                }
            }
            ObjectiveKind::FiniteSumLeastSquares => {
                let p: LeastSquaresParams = parse_params(&cfg.params, prefix)?;
                Model::LeastSquares {
                    features: p.features,
                    targets: p.targets,
                }
            }
            ObjectiveKind::NonconvexSineBowl => {
                let p: SineBowlParams = parse_params(&cfg.params, prefix)?;
                Model::SineBowl {
                    amplitude: p.amplitude,
                    frequency: p.frequency,
                    box_radius: p.box_radius,
                }
            }
            ObjectiveKind::EuclideanNorm => {
                let _: NoParams = parse_params(&cfg.params, prefix)?;
                Model::Norm
            }
        };
        Self::build(dim, cfg.variance, model).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config(prefix, other.to_string()),
        })
    }

    pub fn to_config(&self) -> ProblemConfig {
        let params = match &self.model {
            Model::Quadratic { curvature, center } => {
                serde_json::json!({ "curvature": curvature, "center": center })
            }
            Model::Linear { coefficients } => serde_json::json!({ "coefficients": coefficients }),
            Model::LeastSquares { features, targets } => {
                serde_json::json!({ "features": features, "targets": targets })
            }
            Model::SineBowl {
                amplitude,
                frequency,
                box_radius,
            } => {
                let mut v = serde_json::json!({ "amplitude": amplitude, "frequency": frequency });
                if let Some(r) = box_radius {
                    v["box_radius"] = serde_json::json!(r);
                }
                v
            }
            Model::Norm => empty_object(),
        };
        ProblemConfig {
            kind: self.kind(),
            dim: self.dim,
            params,
            variance: self.variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Configured additive-noise variance `C²` (0 for finite sums).
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.model {
            Model::Quadratic { .. } => ObjectiveKind::NoisyQuadratic,
            Model::Linear { .. } => ObjectiveKind::ConstantGradient,
            Model::LeastSquares { .. } => ObjectiveKind::FiniteSumLeastSquares,
            Model::SineBowl { .. } => ObjectiveKind::NonconvexSineBowl,
            Model::Norm => ObjectiveKind::EuclideanNorm,
        }
    }

    pub fn sample_count(&self) -> Option<usize> {
        match &self.model {
            Model::LeastSquares { targets, .. } => Some(targets.len()),
            _ => None,
        }
    }

    /// A known global minimizer, where one exists in closed form.
    pub fn minimizer(&self) -> Option<Vec<f64>> {
        match &self.model {
            Model::Quadratic { curvature, center } if curvature.iter().all(|&h| h > 0.0) => Some(center.clone()),
            Model::Norm => Some(vec![0.0; self.dim]),
            _ => None,
        }
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(match &self.model {
            Model::Quadratic { curvature, center } => {
                0.5 * curvature
                    .iter()
                    .zip(x.iter().zip(center))
                    .map(|(h, (xi, ci))| h * (xi - ci) * (xi - ci))
                    .sum::<f64>()
            }
            Model::Linear { coefficients } => dot(coefficients, x),
            Model::LeastSquares { features, targets } => {
                let n = targets.len() as f64;
                features
                    .iter()
                    .zip(targets)
                    .map(|(a, y)| {
                        let r = dot(a, x) - y;
                        0.5 * r * r
                    })
                    .sum::<f64>()
                    / n
            }
            Model::SineBowl {
                amplitude, frequency, ..
            } => 0.5 * norm_sq(x) + amplitude * x.iter().map(|xi| (frequency * xi).sin()).sum::<f64>(),
            Model::Norm => norm(x),
        })
    }

    pub fn eval_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(match &self.model {
            Model::Quadratic { curvature, center } => curvature
                .iter()
                .zip(x.iter().zip(center))
                .map(|(h, (xi, ci))| h * (xi - ci))
                .collect(),
            Model::Linear { coefficients } => coefficients.clone(),
            Model::LeastSquares { features, targets } => {
                let n = targets.len() as f64;
                let mut g = vec![0.0; self.dim];
                for (a, y) in features.iter().zip(targets) {
                    let r = dot(a, x) - y;
                    for (gj, aj) in g.iter_mut().zip(a) {
                        *gj += r * aj;
                    }
                }
                g.iter_mut().for_each(|gj| *gj /= n);
                g
            }
            Model::SineBowl {
                amplitude, frequency, ..
            } => x
                .iter()
                .map(|xi| xi + amplitude * frequency * (frequency * xi).cos())
                .collect(),
            Model::Norm => {
                let r = norm(x);
                if r == 0.0 {
                    vec![0.0; self.dim]
                } else {
                    x.iter().map(|xi| xi / r).collect()
                }
            }
        })
    }

    /// Gradient of the `i`-th component of a finite sum.
    pub fn component_grad(&self, x: &[f64], i: usize) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        match &self.model {
            Model::LeastSquares { features, targets } => {
                let a = features
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("component index {i} out of range")))?;
                let r = dot(a, x) - targets[i];
                Ok(a.iter().map(|aj| r * aj).collect())
            }
            _ => Err(Error::invalid("only finite-sum objectives have components")),
        }
    }

    /// Mean of the component values over `indices` (finite sums); the full
    /// objective for every other kind.
    pub fn eval_f_batch(&self, x: &[f64], indices: &[usize]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        match &self.model {
            Model::LeastSquares { features, targets } if !indices.is_empty() => {
                let mut total = 0.0;
                for &i in indices {
                    let a = features
                        .get(i)
                        .ok_or_else(|| Error::invalid(format!("component index {i} out of range")))?;
                    let r = dot(a, x) - targets[i];
                    total += 0.5 * r * r;
                }
                Ok(total / indices.len() as f64)
            }
            _ => self.eval_f(x),
        }
    }

    /// Gradient counterpart of [`Objective::eval_f_batch`].
    pub fn eval_grad_batch(&self, x: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        match &self.model {
            Model::LeastSquares { .. } if !indices.is_empty() => {
                let mut g = vec![0.0; self.dim];
                for &i in indices {
                    let gi = self.component_grad(x, i)?;
                    g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
                }
                let b = indices.len() as f64;
                g.iter_mut().for_each(|a| *a /= b);
                Ok(g)
            }
            _ => self.eval_grad(x),
        }
    }

    fn add_noise<R: Rng + ?Sized>(&self, out: &mut [f64], draws: usize, rng: &mut R) {
        if self.variance == 0.0 {
            return;
        }
        let sd = (self.variance / self.dim as f64).sqrt();
        let mut noise = vec![0.0; self.dim];
        for _ in 0..draws {
            for v in noise.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += z;
            }
        }
        let s = sd / draws as f64;
        for (o, v) in out.iter_mut().zip(&noise) {
            *o += s * v;
        }
    }

    /// One stochastic gradient `G_ξ(x)`.
    pub fn sample_stochastic_grad<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.minibatch_grad(x, 1, rng)
    }

    /// Mean of `b` independent stochastic gradients, drawn with replacement.
    pub fn minibatch_grad<R: Rng + ?Sized>(&self, x: &[f64], b: usize, rng: &mut R) -> Result<Vec<f64>> {
        if b == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        check_dim(self.dim, x.len())?;
        match &self.model {
            Model::LeastSquares { targets, .. } => {
                let n = targets.len();
                let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
                self.eval_grad_batch(x, &idx)
            }
            _ => {
                let mut g = self.eval_grad(x)?;
                self.add_noise(&mut g, b, rng);
                Ok(g)
            }
        }
    }

    /// Exact `E‖G_ξ(x) − ∇f(x)‖²` at `x`.
    pub fn sample_variance_at(&self, x: &[f64]) -> Result<f64> {
        match &self.model {
            Model::LeastSquares { targets, .. } => {
                let full = self.eval_grad(x)?;
                let n = targets.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let gi = self.component_grad(x, i)?;
                    acc += crate::linalg::dist_sq(&gi, &full);
                }
                Ok(acc / n as f64)
            }
            _ => {
                check_dim(self.dim, x.len())?;
                Ok(self.variance)
            }
        }
    }

    /// Upper bound on the Lipschitz constant of `f` over the cube
    /// `[-radius, radius]^dim`, for kinds where one is computable.
    pub fn lipschitz_on_box(&self, radius: f64) -> Option<f64> {
        let d = self.dim as f64;
        match &self.model {
            Model::Quadratic { curvature, center } => {
                let s: f64 = curvature
                    .iter()
                    .zip(center)
                    .map(|(h, c)| {
                        let m = h * (radius + c.abs());
                        m * m
                    })
                    .sum();
                Some(s.sqrt())
            }
            Model::Linear { coefficients } => Some(norm(coefficients)),
            Model::SineBowl {
                amplitude, frequency, ..
            } => Some(d.sqrt() * (radius + (amplitude * frequency).abs())),
            Model::Norm => Some(1.0),
            Model::LeastSquares { .. } => None,
        }
    }

    pub fn known_constants(&self) -> KnownConstants {
        match &self.model {
            Model::Quadratic { .. } => KnownConstants {
                variance_bound: Some(self.variance),
                ..Default::default()
            },
            Model::Linear { coefficients } => KnownConstants {
                variance_bound: Some(self.variance),
                gradient_sq_bound: Some(norm_sq(coefficients)),
                lipschitz: Some(norm(coefficients)),
                sample_count: None,
            },
            Model::LeastSquares { targets, .. } => KnownConstants {
                sample_count: Some(targets.len()),
                ..Default::default()
            },
            Model::SineBowl { box_radius, .. } => KnownConstants {
                variance_bound: Some(self.variance),
                lipschitz: box_radius.and_then(|r| self.lipschitz_on_box(r)),
                ..Default::default()
            },
            Model::Norm => KnownConstants {
                variance_bound: Some(self.variance),
                gradient_sq_bound: Some(1.0),
                lipschitz: Some(1.0),
                sample_count: None,
            },
        }
    }
}
