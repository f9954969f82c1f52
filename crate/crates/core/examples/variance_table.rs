//! Variance upper bounds implied by measured critical batch sizes,
//! `C² < b*·ε²/η`, and the SHB-to-NSHB step-size map used to read them for
//! heavy-ball runs.

use noise_lab::optimizers::map_shb_to_nshb;
use noise_lab::sweep::{render_variance_table, variance_upper_bound};

fn main() -> noise_lab::Result<()> {
    print!("{}", render_variance_table());

    // An SHB run with (γ, β̄) is the NSHB run with η = γ/(1 − β̄).
    let (eta, beta) = map_shb_to_nshb(0.01, 0.9)?;
    println!("\nSHB gamma=0.01 beta_bar=0.9 -> NSHB eta={eta:.3} beta={beta}");
    println!(
        "bound for b*=512, eps=0.5 at that eta: {}",
        variance_upper_bound(512.0, 0.5, eta)
    );
    Ok(())
}
