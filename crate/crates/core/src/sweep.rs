//! Stopping rules, batch-size sweeps, critical batch sizes and the variance
//! back-estimate `C² < b*·ε²/η`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist_sq, dot, norm, sub};
use crate::optimizers::{run, Algorithm, ExitReason, OptimizerConfig, Trace, TraceOptions};
use crate::problems::Objective;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    /// Mean of `‖∇f(x_s)‖` over all steps so far drops strictly below ε.
    CumulativeGradNorm,
    /// Mean of `⟨x_s − x, ∇f(x_s)⟩` over all steps so far is at most ε².
    InnerProduct,
}

/// Which gradient the stopping rule looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientSource {
    #[default]
    Full,
    Minibatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub kind: StopKind,
    pub epsilon: f64,
    #[serde(default)]
    pub reference_point: Option<Vec<f64>>,
    #[serde(default)]
    pub gradient_source: GradientSource,
}

impl StopRule {
    pub fn cumulative_grad_norm(epsilon: f64) -> Self {
        Self {
            kind: StopKind::CumulativeGradNorm,
            epsilon,
            reference_point: None,
            gradient_source: GradientSource::Full,
        }
    }

    pub fn inner_product(epsilon: f64, reference_point: Vec<f64>) -> Self {
        Self {
            kind: StopKind::InnerProduct,
            epsilon,
            reference_point: Some(reference_point),
            gradient_source: GradientSource::Full,
        }
    }

    pub fn with_source(mut self, source: GradientSource) -> Self {
        self.gradient_source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be a positive finite number"));
        }
        if self.kind == StopKind::InnerProduct && self.reference_point.is_none() {
            return Err(Error::config(
                "reference_point",
                "the inner-product rule needs a reference point",
            ));
        }
        Ok(())
    }

    pub fn tracker(&self) -> StopTracker {
        StopTracker {
            rule: self.clone(),
            sum: 0.0,
            count: 0,
        }
    }
}

/// Running state of a [`StopRule`].
#[derive(Debug, Clone)]
pub struct StopTracker {
    rule: StopRule,
    sum: f64,
    count: usize,
}

impl StopTracker {
    /// Feed step `t`'s iterate, exact gradient and minibatch gradient.
    /// Returns true once the rule fires.
    pub fn observe(&mut self, x: &[f64], full_grad: &[f64], minibatch_grad: &[f64]) -> bool {
        let g = match self.rule.gradient_source {
            GradientSource::Full => full_grad,
            GradientSource::Minibatch => minibatch_grad,
        };
        self.count += 1;
        match self.rule.kind {
            StopKind::CumulativeGradNorm => {
                self.sum += norm(g);
                self.mean() < self.rule.epsilon
            }
            StopKind::InnerProduct => {
                let r = self.rule.reference_point.as_deref().unwrap_or(&[]);
                self.sum += dot(&sub(x, r), g);
                self.mean() <= self.rule.epsilon * self.rule.epsilon
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b: usize,
    pub seed: u64,
    #[serde(rename = "steps")]
    pub steps_t: usize,
    /// `steps_t · b`
    pub sfo: u64,
    pub exit_reason: ExitReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub b: usize,
    pub mean_steps: f64,
    pub mean_sfo: f64,
    pub converged_fraction: f64,
}

impl BatchSummary {
    /// A grid point enters the argmin only if every seed converged.
    pub fn converged(&self) -> bool {
        self.converged_fraction == 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub per_batch: Vec<BatchSummary>,
}

/// Default batch grid `{2³, …, 2¹³}`.
pub fn default_batch_grid() -> Vec<usize> {
    (3..=13).map(|k| 1usize << k).collect()
}

/// Number of steps until `stop` fires, as a [`SweepRow`]. The run uses the
/// substream `master/[b, seed]`.
pub fn steps_to_epsilon(
    objective: &Objective,
    config: &OptimizerConfig,
    x0: &[f64],
    stop: &StopRule,
    cap: usize,
    master: &RngStream,
    seed: u64,
) -> Result<SweepRow> {
    if cap == 0 {
        return Err(Error::invalid("step cap must be at least 1"));
    }
    let b = config.batch_size;
    let stream = master.children(&[b as u64, seed]);
    let trace = run(
        objective,
        config,
        x0,
        Some(stop),
        cap,
        &stream,
        &TraceOptions::count_only(),
    )?;
    Ok(SweepRow {
        b,
        seed,
        steps_t: trace.steps,
        sfo: trace.steps as u64 * b as u64,
        exit_reason: trace.exit,
    })
}

/// Run every `(b, seed)` cell. Cells execute on the current rayon pool and
/// are reduced in `(b, seed)` order, so the result does not depend on the
/// degree of parallelism.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    objective: &Objective,
    template: &OptimizerConfig,
    x0: &[f64],
    batch_grid: &[usize],
    seeds: usize,
    stop: &StopRule,
    cap: usize,
    master: &RngStream,
) -> Result<SweepSummary> {
    if batch_grid.is_empty() {
        return Err(Error::config("batch_grid", "must not be empty"));
    }
    if batch_grid.windows(2).any(|w| w[0] >= w[1]) || batch_grid[0] == 0 {
        return Err(Error::config("batch_grid", "must be positive and strictly ascending"));
    }
    if seeds == 0 {
        return Err(Error::config("seeds", "must be at least 1"));
    }
    template.validate()?;
    stop.validate()?;

    let cells: Vec<(usize, u64)> = batch_grid
        .iter()
        .flat_map(|&b| (0..seeds as u64).map(move |s| (b, s)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(b, seed)| steps_to_epsilon(objective, &template.with_batch_size(b), x0, stop, cap, master, seed))
        .collect::<Result<_>>()?;

    let per_batch = batch_grid
        .iter()
        .map(|&b| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.b == b).collect();
            let n = group.len() as f64;
            let mean_steps = group.iter().map(|r| r.steps_t as f64).sum::<f64>() / n;
            let converged = group.iter().filter(|r| r.exit_reason == ExitReason::Converged).count() as f64;
            BatchSummary {
                b,
                mean_steps,
                mean_sfo: mean_steps * b as f64,
                converged_fraction: converged / n,
            }
        })
        .collect();
    Ok(SweepSummary { rows, per_batch })
}

/// Grid batch size with the smallest mean SFO among converged points; ties
/// go to the smaller batch. `None` when no grid point converged.
pub fn empirical_critical_batch(summary: &SweepSummary) -> Option<usize> {
    let mut best: Option<&BatchSummary> = None;
    for s in summary.per_batch.iter().filter(|s| s.converged()) {
        match best {
            Some(cur) if s.mean_sfo > cur.mean_sfo => {}
            Some(cur) if s.mean_sfo == cur.mean_sfo && s.b >= cur.b => {}
            _ => best = Some(s),
        }
    }
    best.map(|s| s.b)
}

/// Coefficients of the bound `X/T + Y/b + Z ≤ ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCurveParams {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub epsilon_sq: f64,
}

impl AnalyticCurveParams {
    pub fn new(x: f64, y: f64, z: f64, epsilon_sq: f64) -> Self {
        Self { x, y, z, epsilon_sq }
    }

    fn slack(&self) -> Result<f64> {
        let s = self.epsilon_sq - self.z;
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::Domain(format!(
                "epsilon^2 = {} does not exceed Z = {}",
                self.epsilon_sq, self.z
            )))
        }
    }

    /// Batch size at the pole, `Y/(ε² − Z)`.
    pub fn pole(&self) -> Result<f64> {
        Ok(self.y / self.slack()?)
    }

    fn check_b(&self, b: f64) -> Result<f64> {
        let slack = self.slack()?;
        if b > self.y / slack {
            Ok(slack)
        } else {
            Err(Error::Domain(format!(
                "b = {b} is not above the pole {}",
                self.y / slack
            )))
        }
    }
}

/// `T(b) = X·b / ((ε² − Z)·b − Y)`.
pub fn analytic_steps(params: &AnalyticCurveParams, b: f64) -> Result<f64> {
    let slack = params.check_b(b)?;
    Ok(params.x * b / (slack * b - params.y))
}

/// `T(b)·b = X·b² / ((ε² − Z)·b − Y)`.
pub fn analytic_sfo(params: &AnalyticCurveParams, b: f64) -> Result<f64> {
    let slack = params.check_b(b)?;
    Ok(params.x * b * b / (slack * b - params.y))
}

/// Minimizer of the SFO curve, `2Y/(ε² − Z)`.
pub fn analytic_critical_batch(params: &AnalyticCurveParams) -> Result<f64> {
    Ok(2.0 * params.y / params.slack()?)
}

/// Back-estimated upper bound on `C²`: `b*·ε²/η`.
pub fn variance_upper_bound(b_star: f64, epsilon: f64, eta: f64) -> f64 {
    b_star * epsilon * epsilon / eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    Known,
    Estimated,
}

/// Constants that entered [`xyz_from_setup`], with where each came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub variance: f64,
    pub variance_source: ConstantSource,
    pub grad_sq: f64,
    pub grad_sq_source: ConstantSource,
    /// `D(x) = max_t ‖x_t − x‖`; only needed for momentum methods.
    pub radius: Option<f64>,
    pub eta: f64,
    pub beta: f64,
}

/// Single-sample variance estimated from a recorded trace:
/// `b · mean_t ‖∇f_S(x_t) − ∇f(x_t)‖²`.
pub fn estimate_variance(trace: &Trace) -> Option<f64> {
    if trace.records.is_empty() {
        return None;
    }
    let b = trace.config.batch_size as f64;
    let m = trace
        .records
        .iter()
        .map(|r| dist_sq(&r.minibatch_grad, &r.grad))
        .sum::<f64>()
        / trace.records.len() as f64;
    Some(b * m)
}

fn trace_radius(trace: &Trace, x_ref: &[f64]) -> Option<f64> {
    if trace.x_ref.as_deref() == Some(x_ref) {
        return trace.max_dist_to_ref;
    }
    let snaps: Vec<&Vec<f64>> = trace.records.iter().filter_map(|r| r.x_snapshot.as_ref()).collect();
    if snaps.is_empty() || snaps.len() != trace.records.len() {
        return None;
    }
    Some(snaps.iter().map(|x| dist_sq(x, x_ref).sqrt()).fold(0.0, f64::max))
}

/// Build `X`, `Y`, `Z` from the setup. Known constants are used where the
/// objective has them; otherwise `C²`, `K²` and `D` are measured on `trace`.
/// SHB configurations are first mapped to their NSHB equivalent.
pub fn xyz_from_setup(
    objective: &Objective,
    config: &OptimizerConfig,
    x0: &[f64],
    x_ref: &[f64],
    trace: Option<&Trace>,
    epsilon: f64,
) -> Result<(AnalyticCurveParams, ResolvedConstants)> {
    check_dim(objective.dim(), x0.len())?;
    check_dim(objective.dim(), x_ref.len())?;
    let known = objective.known_constants();
    let (eta, beta) = config.nshb_equivalent();

    let (variance, variance_source) = match known.variance_bound {
        Some(c) => (c, ConstantSource::Known),
        None => (
            trace.and_then(estimate_variance).ok_or(Error::UnknownConstant("C^2"))?,
            ConstantSource::Estimated,
        ),
    };
    let (grad_sq, grad_sq_source) = match known.gradient_sq_bound {
        Some(k) => (k, ConstantSource::Known),
        None => (
            trace
                .filter(|t| t.steps > 0)
                .map(|t| t.max_grad_sq)
                .ok_or(Error::UnknownConstant("K^2"))?,
            ConstantSource::Estimated,
        ),
    };
    let momentum = config.algo != Algorithm::Sgd && beta > 0.0;
    let radius = if momentum {
        Some(
            trace
                .and_then(|t| trace_radius(t, x_ref))
                .ok_or(Error::UnknownConstant("D"))?,
        )
    } else {
        None
    };

    let x = dist_sq(x0, x_ref) / (2.0 * eta);
    let y = eta * variance / 2.0;
    let mut z = eta * grad_sq / 2.0;
    if let Some(d) = radius {
        z += beta * d * variance.sqrt();
    }
    Ok((
        AnalyticCurveParams::new(x, y, z, epsilon * epsilon),
        ResolvedConstants {
            variance,
            variance_source,
            grad_sq,
            grad_sq_source,
            radius,
            eta,
            beta,
        },
    ))
}

/// One published `(η, ε, b*)` setting and the variance bound it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceFixture {
    pub label: &'static str,
    pub eta: f64,
    pub epsilon: f64,
    pub b_star: u32,
    pub expected: f64,
}

/// ResNet18 / CIFAR100 rows, one per learning rate. SGD and NSHB share the
/// same measured `b*` in every row.
pub const TABLE1_FIXTURES: [VarianceFixture; 5] = [
    VarianceFixture {
        label: "resnet18-cifar100",
        eta: 0.01,
        epsilon: 1.0,
        b_star: 128,
        expected: 12800.0,
    },
    VarianceFixture {
        label: "resnet18-cifar100",
        eta: 0.05,
        epsilon: 0.5,
        b_star: 256,
        expected: 1280.0,
    },
    VarianceFixture {
        label: "resnet18-cifar100",
        eta: 0.1,
        epsilon: 0.5,
        b_star: 512,
        expected: 1280.0,
    },
    VarianceFixture {
        label: "resnet18-cifar100",
        eta: 0.5,
        epsilon: 0.5,
        b_star: 512,
        expected: 256.0,
    },
    VarianceFixture {
        label: "resnet18-cifar100",
        eta: 1.0,
        epsilon: 0.5,
        b_star: 512,
        expected: 128.0,
    },
];

/// Other architectures and datasets at `η = 0.1`, `ε = 0.5`.
pub const ARCHITECTURE_FIXTURES: [VarianceFixture; 3] = [
    VarianceFixture {
        label: "wideresnet28-10-cifar100",
        eta: 0.1,
        epsilon: 0.5,
        b_star: 4,
        expected: 10.0,
    },
    VarianceFixture {
        label: "mobilenetv2-cifar100",
        eta: 0.1,
        epsilon: 0.5,
        b_star: 8,
        expected: 20.0,
    },
    VarianceFixture {
        label: "resnet18-cifar10",
        eta: 0.1,
        epsilon: 0.5,
        b_star: 8,
        expected: 20.0,
    },
];

impl VarianceFixture {
    pub fn computed(&self) -> f64 {
        variance_upper_bound(self.b_star as f64, self.epsilon, self.eta)
    }
}

/// Text rendering of the fixture tables, as written by `table1`.
pub fn render_variance_table() -> String {
    let mut out = String::new();
    out.push_str("# variance upper bound C^2 < b* eps^2 / eta\n");
    out.push_str("# table setting eta epsilon b_star c_sq_sgd c_sq_nshb\n");
    let rows = TABLE1_FIXTURES
        .iter()
        .map(|f| ("table1", f))
        .chain(ARCHITECTURE_FIXTURES.iter().map(|f| ("architectures", f)));
    for (table, f) in rows {
        let c = f.computed();
        out.push_str(&format!(
            "{table} {} {} {} {} {} {}\n",
            f.label, f.eta, f.epsilon, f.b_star, c, c
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_tracker(norms: &[f64], eps: f64) -> Option<usize> {
        let mut tr = StopRule::cumulative_grad_norm(eps).tracker();
        for (i, &n) in norms.iter().enumerate() {
            if tr.observe(&[0.0], &[n], &[n]) {
                return Some(i + 1);
            }
        }
        None
    }

    #[test]
    fn cumulative_rule_hand_example() {
        assert_eq!(hand_tracker(&[0.6, 0.4, 0.4], 0.5), Some(3));
        // mean 0.5 at t = 2 is not strictly below
        assert_eq!(hand_tracker(&[0.6, 0.4], 0.5), None);
    }

    #[test]
    fn stop_at_minimizer_and_large_epsilon() {
        let obj = Objective::isotropic_quadratic(2, 0.0).unwrap();
        let cfg = OptimizerConfig::sgd(0.1, 8);
        let m = RngStream::new(1);
        let row = steps_to_epsilon(
            &obj,
            &cfg,
            &[0.0, 0.0],
            &StopRule::cumulative_grad_norm(0.1),
            100,
            &m,
            0,
        )
        .unwrap();
        assert_eq!((row.steps_t, row.exit_reason), (1, ExitReason::Converged));
        let row = steps_to_epsilon(
            &obj,
            &cfg,
            &[1.0, 1.0],
            &StopRule::cumulative_grad_norm(10.0),
            100,
            &m,
            0,
        )
        .unwrap();
        assert_eq!(row.steps_t, 1);
        assert_eq!(row.sfo, 8);
    }

    #[test]
    fn inner_product_rule_and_validation() {
        assert!(StopRule::cumulative_grad_norm(0.0).validate().is_err());
        let mut r = StopRule::inner_product(0.5, vec![0.0]);
        assert!(r.validate().is_ok());
        r.reference_point = None;
        assert!(r.validate().is_err());
        let mut tr = StopRule::inner_product(0.5, vec![0.0]).tracker();
        // <x, g> = 1, then 0: mean 0.5 > 0.25, then 1/3 > 0.25, then 0.25 <= 0.25
        assert!(!tr.observe(&[1.0], &[1.0], &[1.0]));
        assert!(!tr.observe(&[0.0], &[1.0], &[1.0]));
        assert!(!tr.observe(&[0.0], &[1.0], &[1.0]));
        assert!(tr.observe(&[0.0], &[1.0], &[1.0]));
    }

    #[test]
    fn critical_batch_argmin_and_ties() {
        let mk = |pts: &[(usize, f64)]| SweepSummary {
            rows: vec![],
            per_batch: pts
                .iter()
                .map(|&(b, sfo)| BatchSummary {
                    b,
                    mean_steps: sfo / b as f64,
                    mean_sfo: sfo,
                    converged_fraction: 1.0,
                })
                .collect(),
        };
        assert_eq!(
            empirical_critical_batch(&mk(&[(8, 100.0), (16, 60.0), (32, 70.0)])),
            Some(16)
        );
        assert_eq!(empirical_critical_batch(&mk(&[(64, 5.0)])), Some(64));
        assert_eq!(empirical_critical_batch(&mk(&[(8, 50.0), (16, 50.0)])), Some(8));
        let mut s = mk(&[(8, 10.0), (16, 60.0)]);
        s.per_batch[0].converged_fraction = 0.0;
        assert_eq!(empirical_critical_batch(&s), Some(16));
        s.per_batch[1].converged_fraction = 2.0 / 3.0;
        assert_eq!(empirical_critical_batch(&s), None);
    }

    #[test]
    fn analytic_curve_examples() {
        let p = AnalyticCurveParams::new(100.0, 64.0, 0.05, 0.25);
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(analytic_steps(&p, 512.0).unwrap(), 4000.0 / 3.0) < 1e-12);
        assert!(rel(analytic_steps(&p, 640.0).unwrap(), 1000.0) < 1e-12);
        assert!(rel(analytic_sfo(&p, 640.0).unwrap(), 640_000.0) < 1e-12);
        assert!(rel(analytic_sfo(&p, 512.0).unwrap(), 2_048_000.0 / 3.0) < 1e-12);
        assert!(rel(analytic_sfo(&p, 800.0).unwrap(), 2_000_000.0 / 3.0) < 1e-12);
        assert!(rel(analytic_critical_batch(&p).unwrap(), 640.0) < 1e-12);
        assert!(matches!(analytic_steps(&p, 320.0), Err(Error::Domain(_))));
        assert!(analytic_steps(&p, 100.0).is_err());

        let flat = AnalyticCurveParams::new(100.0, 0.0, 0.05, 0.25);
        assert_eq!(
            analytic_steps(&flat, 8.0).unwrap(),
            analytic_steps(&flat, 4096.0).unwrap()
        );
        let no_z = AnalyticCurveParams::new(1.0, 64.0, 0.0, 0.25);
        assert_eq!(analytic_critical_batch(&no_z).unwrap(), 2.0 * 64.0 / 0.25);
        assert!(analytic_critical_batch(&AnalyticCurveParams::new(1.0, 1.0, 0.3, 0.25)).is_err());
        // lower bound eta C^2 / eps^2 = 512
        let b_star = analytic_critical_batch(&AnalyticCurveParams::new(100.0, 64.0, 0.05, 0.25)).unwrap();
        assert!(b_star > 0.1 * 1280.0 / 0.25);
    }

    #[test]
    fn variance_bound_fixtures() {
        assert_eq!(variance_upper_bound(512.0, 0.5, 0.1), 1280.0);
        assert_eq!(variance_upper_bound(128.0, 1.0, 0.01), 12800.0);
        assert_eq!(variance_upper_bound(4.0, 0.5, 0.1), 10.0);
        for f in TABLE1_FIXTURES.iter().chain(&ARCHITECTURE_FIXTURES) {
            assert_eq!(f.computed(), f.expected, "{f:?}");
        }
    }

    #[test]
    fn xyz_examples() {
        // ‖x0 − x_ref‖² = 20, η = 0.1, C² = 1280, K² = 1 via a constant gradient of norm 1
        let obj = Objective::constant_gradient(vec![1.0, 0.0], 1280.0).unwrap();
        let x0 = [4.0, 2.0];
        let (p, c) = xyz_from_setup(&obj, &OptimizerConfig::sgd(0.1, 8), &x0, &[0.0, 0.0], None, 0.5).unwrap();
        assert!((p.x - 100.0).abs() < 1e-12);
        assert!((p.y - 64.0).abs() < 1e-12);
        assert!((p.z - 0.05).abs() < 1e-15);
        assert_eq!(c.variance_source, ConstantSource::Known);

        let (p0, _) = xyz_from_setup(&obj, &OptimizerConfig::nshb(0.1, 0.0, 8), &x0, &[0.0, 0.0], None, 0.5).unwrap();
        assert_eq!(p0.z, p.z);

        // momentum needs a trajectory radius
        let nshb = OptimizerConfig::nshb(0.1, 0.9, 8);
        assert!(matches!(
            xyz_from_setup(&obj, &nshb, &x0, &[0.0, 0.0], None, 0.5),
            Err(Error::UnknownConstant("D"))
        ));
    }

    #[test]
    fn xyz_momentum_term_from_trace() {
        let obj = Objective::constant_gradient(vec![1.0, 0.0], 1280.0).unwrap();
        let nshb = OptimizerConfig::nshb(0.1, 0.9, 8);
        let mut trace = run(
            &obj,
            &nshb,
            &[0.0, 0.0],
            None,
            3,
            &RngStream::new(0),
            &TraceOptions::count_only().with_ref(vec![0.0, 0.0]),
        )
        .unwrap();
        trace.max_dist_to_ref = Some(1.0);
        let (p, c) = xyz_from_setup(&obj, &nshb, &[0.0, 0.0], &[0.0, 0.0], Some(&trace), 0.5).unwrap();
        assert_eq!(c.radius, Some(1.0));
        let extra = p.z - 0.1 * 1.0 / 2.0;
        assert!((extra - 0.9 * 1280f64.sqrt()).abs() < 1e-12);
        assert!((extra - 32.2).abs() < 0.05);
    }

    #[test]
    fn noiseless_steps_do_not_depend_on_batch() {
        let obj = Objective::isotropic_quadratic(2, 0.0).unwrap();
        let s = run_sweep(
            &obj,
            &OptimizerConfig::sgd(0.1, 1),
            &[3.0, -4.0],
            &[8, 16, 32, 64],
            2,
            &StopRule::cumulative_grad_norm(0.5),
            10_000,
            &RngStream::new(4),
        )
        .unwrap();
        let t0 = s.rows[0].steps_t;
        assert!(s
            .rows
            .iter()
            .all(|r| r.steps_t == t0 && r.sfo == t0 as u64 * r.b as u64));
        assert_eq!(empirical_critical_batch(&s), Some(8));
    }

    #[test]
    fn sweep_input_validation() {
        let obj = Objective::isotropic_quadratic(1, 1.0).unwrap();
        let cfg = OptimizerConfig::sgd(0.1, 1);
        let stop = StopRule::cumulative_grad_norm(0.5);
        let m = RngStream::new(0);
        assert!(run_sweep(&obj, &cfg, &[1.0], &[], 1, &stop, 10, &m).is_err());
        assert!(run_sweep(&obj, &cfg, &[1.0], &[16, 8], 1, &stop, 10, &m).is_err());
        assert!(run_sweep(&obj, &cfg, &[1.0], &[8], 0, &stop, 10, &m).is_err());
    }

    #[test]
    fn table_render_is_stable() {
        let t = render_variance_table();
        assert_eq!(t.lines().count(), 2 + 8);
        assert!(t.contains("table1 resnet18-cifar100 0.01 1 128 12800 12800\n"));
        assert!(t.contains("architectures wideresnet28-10-cifar100 0.1 0.5 4 10 10\n"));
    }
}
