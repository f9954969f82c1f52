//! Search-direction noise `ω_t = d_t − ∇f(x_t)` of NSHB on a linear
//! objective. Averaging shrinks it to `(1−β)/(1+β)·C²/b`, while the buffer
//! deviation `‖d_{t−1} − ∇f_S(x_t)‖²` exceeds `β(2−β)·C²/b`.

use noise_lab::noise::search_direction_noise;
use noise_lab::{run, Objective, OptimizerConfig, RngStream, TraceOptions};

fn main() -> noise_lab::Result<()> {
    let obj = Objective::constant_gradient(vec![1.0, 0.0], 4.0)?;
    for beta in [0.5, 0.9, 0.99] {
        let cfg = OptimizerConfig::nshb(0.01, beta, 4);
        let trace = run(
            &obj,
            &cfg,
            &[0.0, 0.0],
            None,
            100_000,
            &RngStream::new(3),
            &TraceOptions::records(),
        )?;
        let s = search_direction_noise(&trace, &obj, None)?.summary;
        println!(
            "beta {beta}: mean |omega|^2 {:.4} (stationary {:.4}, C^2/b {}), buffer deviation {:.4} vs {:.4}, burn-in {}",
            s.mean_omega_sq,
            (1.0 - beta) / (1.0 + beta),
            s.bound_c2_over_b,
            s.lemma_a4_lhs,
            s.lemma_a4_rhs,
            s.burn_in
        );
    }
    Ok(())
}
