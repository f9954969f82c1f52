//! SGD, NSHB and SHB on the same noise sequence. NSHB with β = 0 is SGD, and
//! SHB(γ, β̄) is NSHB(γ/(1 − β̄), β̄) step for step.

use noise_lab::optimizers::trajectory_divergence;
use noise_lab::{run, Objective, OptimizerConfig, RngStream, TraceOptions};

fn main() -> noise_lab::Result<()> {
    let obj = Objective::noisy_quadratic(vec![1.0, 0.5], 4.0)?;
    let x0 = [2.0, -1.0];
    let stream = RngStream::new(7);
    let go = |c: OptimizerConfig| run(&obj, &c, &x0, None, 1000, &stream, &TraceOptions::full());

    let sgd = go(OptimizerConfig::sgd(0.1, 8))?;
    let nshb0 = go(OptimizerConfig::nshb(0.1, 0.0, 8))?;
    println!(
        "NSHB(beta=0) vs SGD: max rel divergence {:.2e}",
        trajectory_divergence(&sgd, &nshb0)
    );

    for (gamma, beta_bar) in [(0.1, 0.5), (0.1, 0.9), (0.01, 0.5), (0.01, 0.9)] {
        let shb = go(OptimizerConfig::shb(gamma, beta_bar, 8))?;
        let nshb = go(OptimizerConfig::nshb(gamma / (1.0 - beta_bar), beta_bar, 8))?;
        println!(
            "SHB({gamma}, {beta_bar}) vs NSHB({:.3}, {beta_bar}): {:.2e}, final x {:.4?}",
            gamma / (1.0 - beta_bar),
            trajectory_divergence(&shb, &nshb),
            shb.final_x
        );
    }
    Ok(())
}
