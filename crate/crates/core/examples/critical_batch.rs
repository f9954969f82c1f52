//! Steps and SFO to reach ε over a batch-size grid, the empirical critical
//! batch size, and the analytic curve `T(b) = Xb/((ε² − Z)b − Y)`.

use noise_lab::sweep::{
    analytic_critical_batch, analytic_sfo, analytic_steps, default_batch_grid, empirical_critical_batch, run_sweep,
    AnalyticCurveParams,
};
use noise_lab::{Objective, OptimizerConfig, RngStream, StopRule};

fn main() -> noise_lab::Result<()> {
    let obj = Objective::noisy_quadratic(vec![1.0, 1.0], 36.0)?;
    let summary = run_sweep(
        &obj,
        &OptimizerConfig::sgd(0.1, 8),
        &[5.0, 5.0],
        &default_batch_grid(),
        3,
        &StopRule::cumulative_grad_norm(0.5),
        200_000,
        &RngStream::new(0),
    )?;
    println!("b      mean T     mean SFO");
    for s in &summary.per_batch {
        println!("{:<6} {:<10.1} {:.0}", s.b, s.mean_steps, s.mean_sfo);
    }
    println!("empirical b* = {:?}", empirical_critical_batch(&summary));

    let p = AnalyticCurveParams::new(100.0, 64.0, 0.05, 0.25);
    let b_star = analytic_critical_batch(&p)?;
    println!("\nanalytic curve X=100 Y=64 Z=0.05 eps^2=0.25: b* = {b_star}");
    for b in [512.0, 640.0, 800.0] {
        println!(
            "  b={b}: T={:.2} SFO={:.2}",
            analytic_steps(&p, b)?,
            analytic_sfo(&p, b)?
        );
    }
    Ok(())
}
