//! Monte-Carlo smoothing `f̂_δ(x) = E f(x − δu)`: the gap to `f` stays below
//! `δ·L_f`, with equality for `‖x‖` at the origin. Also the one-step identity
//! `E[x_{t+1}] = x_t − η∇f(x_t)` for NSHB after burn-in, and the start-up bias
//! without it.

use noise_lab::smoothing::{
    degree_of_smoothing, gd_vs_nshb_expectation, smoothed_value, smoothing_gap_check, Branching, Perturbation,
    SmoothingSpec,
};
use noise_lab::{Objective, RngStream};

fn main() -> noise_lab::Result<()> {
    let stream = RngStream::new(5);
    let norm = Objective::euclidean_norm(3, 0.0)?;
    let points = vec![vec![0.0; 3], vec![1.0, -0.5, 0.2], vec![0.01, 0.0, 0.0]];
    for delta in [0.1, 0.5, 1.0] {
        let spec = SmoothingSpec::new(delta, Perturbation::UnitSphere, 100_000);
        let rep = smoothing_gap_check(&norm, &points, &spec, None, &stream.child(0))?;
        let gaps: Vec<f64> = rep.rows.iter().map(|r| r.gap).collect();
        println!("delta {delta}: gaps {gaps:.4?} <= {delta}, all pass {}", rep.all_pass);
    }

    let quad = Objective::isotropic_quadratic(3, 0.0)?;
    for dist in [
        Perturbation::UnitSphere,
        Perturbation::GaussianScaled,
        Perturbation::BallUniform,
    ] {
        let v = smoothed_value(
            &quad,
            &[0.0; 3],
            &SmoothingSpec::new(0.5, dist, 100_000),
            &stream.child(1),
        )?;
        println!(
            "{dist:?}: f_hat(0) = {:.5} +- {:.5} (sphere: 0.125)",
            v.estimate, v.std_error
        );
    }

    println!("\ndegree of smoothing eta*C/sqrt(b), eta 0.1, C^2 36:");
    for b in [8, 32, 128, 512] {
        println!("  b={b}: {:.4}", degree_of_smoothing(0.1, 36.0, b));
    }

    let lin = Objective::constant_gradient(vec![1.0, 0.0], 4.0)?;
    for burn_in in [0, 200] {
        let r = gd_vs_nshb_expectation(
            &lin,
            &[0.0, 0.0],
            0.1,
            0.9,
            4,
            10_000,
            burn_in,
            Branching::IndependentHistories,
            &stream.child(2),
        )?;
        println!(
            "burn-in {burn_in}: |E x_(t+1) - GD step| = {:.5} (radius {:.5}, start-up bias {:.3})",
            r.discrepancy, r.confidence_radius, r.early_bias_prediction
        );
    }
    Ok(())
}
