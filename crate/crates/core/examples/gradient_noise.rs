//! Minibatch gradient noise: the second moment of `∇f_S − ∇f` falls as
//! `C²/b`, and the single-sample noise of the Gaussian oracle has no excess
//! kurtosis.

use noise_lab::noise::{gradient_noise_vectors, minibatch_deviation_second_moment, tail_stats};
use noise_lab::{Objective, RngStream};

fn main() -> noise_lab::Result<()> {
    let obj = Objective::isotropic_quadratic(2, 4.0)?;
    let x = [1.0, -1.0];
    let stream = RngStream::new(1);

    println!("b   E|g_S - g|^2   C^2/b");
    for (i, b) in [1usize, 4, 16, 64].into_iter().enumerate() {
        let m = minibatch_deviation_second_moment(&obj, &x, b, 100_000, &mut stream.child(i as u64).rng())?;
        println!("{b:<3} {m:<14.5} {}", 4.0 / b as f64);
    }

    let v = gradient_noise_vectors(&obj, &x, 20_000, &mut stream.child(9).rng())?;
    let first: Vec<f64> = v.iter().map(|d| d[0]).collect();
    let t = tail_stats(&first)?;
    println!(
        "\ncoordinate 0: variance {:.4}, excess kurtosis {:.4} +- {:.4}, mass beyond 3/4/5 sigma {:?}",
        t.variance, t.excess_kurtosis, t.kurtosis_std_error, t.tail_mass_beyond_k_sigma
    );
    Ok(())
}
