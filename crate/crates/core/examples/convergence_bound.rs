//! Averaged inner products `(1/T)Σ⟨x_t − x*, ∇f(x_t)⟩` over 100 runs against
//! the SGD and NSHB upper bounds, then the full check suite.

use noise_lab::analysis::{bound_report, ensemble, verify_suite, VerifySettings};
use noise_lab::{Objective, OptimizerConfig, RngStream};

fn main() -> noise_lab::Result<()> {
    let obj = Objective::noisy_quadratic(vec![1.0, 0.5], 4.0)?;
    let x0 = [2.0, 2.0];
    let x_ref = obj.minimizer().expect("quadratics have a minimizer");
    let stream = RngStream::new(11);

    for cfg in [OptimizerConfig::sgd(0.1, 8), OptimizerConfig::nshb(0.1, 0.9, 8)] {
        let traces = ensemble(&obj, &cfg, &x0, &x_ref, 500, 100, &stream)?;
        let r = bound_report(&obj, &traces, &x_ref)?;
        println!(
            "{:?} b=8: lhs {:.4} +- {:.4} <= rhs {:.4} ({}), terms {:?}",
            r.algo, r.lhs_estimate, r.confidence, r.rhs, r.holds, r.components
        );
    }

    let checks = verify_suite(
        &obj,
        &OptimizerConfig::sgd(0.1, 8),
        &x0,
        &VerifySettings::default(),
        &stream,
    )?;
    for c in &checks {
        let kind = if c.asserted { "assert" } else { "diag" };
        println!(
            "{:<6} {:<5} {:<36} {:>12.5e} <= {:<12.5e}",
            kind, c.holds, c.check, c.lhs, c.rhs
        );
    }
    Ok(())
}
