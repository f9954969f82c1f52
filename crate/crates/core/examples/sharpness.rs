//! Adaptive sharpness `max_{‖z/c‖_p ≤ ρ} f(w + z) − f(w)`, estimated from
//! below by sign ascent or random search.

use noise_lab::smoothing::{adaptive_sharpness, PNorm, SharpnessMethod, SharpnessSpec};
use noise_lab::{Objective, RngStream};

fn main() -> noise_lab::Result<()> {
    let stream = RngStream::new(2);
    let quad = Objective::noisy_quadratic(vec![1.0], 0.0)?;
    let spec = SharpnessSpec::new(1.0, PNorm::Inf, SharpnessMethod::SignAscent, 50);
    let r = adaptive_sharpness(&quad, &[0.0], &spec, &stream)?;
    println!("1-D quadratic at 0, rho 1: {} (exact 0.5)", r.value);

    let bowl = Objective::sine_bowl(2, 0.5, 3.0, 0.0, None)?;
    for rho in [0.1, 0.5, 1.0] {
        for method in [SharpnessMethod::SignAscent, SharpnessMethod::RandomSearch] {
            let spec = SharpnessSpec::new(rho, PNorm::Two, method, 200);
            let r = adaptive_sharpness(&bowl, &[0.2, -0.3], &spec, &stream)?;
            println!(
                "sine bowl rho {rho} {method:?}: {:.4} after {} evaluations",
                r.value, r.evaluations
            );
        }
    }

    // finite sums average over resampled training sets
    let ls = Objective::finite_sum_least_squares(
        vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, -1.0]],
        vec![1.0, 0.5, 2.0, 0.0],
    )?;
    let mut spec = SharpnessSpec::new(0.5, PNorm::Inf, SharpnessMethod::SignAscent, 50);
    spec.batches = Some(16);
    spec.batch_size = Some(4);
    let r = adaptive_sharpness(&ls, &[0.5, 0.5], &spec, &stream)?;
    println!(
        "least squares, 16 resampled sets: {:.4} ({:?} draws)",
        r.value, r.batch_draws
    );
    Ok(())
}
