//! The JSON experiment file read by `noise-lab --config`: unknown keys are
//! rejected with their path, and resolution fills in per-command defaults.

use noise_lab::cli::config::{parse_config, Command};

fn main() -> noise_lab::Result<()> {
    let text = r#"{
        "problem": {"kind": "noisy-quadratic", "dim": 2, "variance": 36,
                    "params": {"curvature": [1, 1]}},
        "optimizer": {"algo": "shb", "gamma": 0.01, "beta_bar": 0.9, "batch_size": 8},
        "x0": [5, 5],
        "sweep": {"batch_grid": [8, 16, 32, 64], "seeds": 2},
        "master_seed": 3
    }"#;
    let cfg = parse_config(text)?.resolve(Command::Sweep);
    println!("{}", serde_json::to_string_pretty(&cfg).expect("serializable"));

    match parse_config(r#"{"sweep": {"epsilon": 0.5, "epsilom": 1}}"#) {
        Err(e) => println!("\nrejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
