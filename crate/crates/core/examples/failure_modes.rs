// Inputs where anchoring has nothing to offer.
//
// cargo run --example failure_modes

use attanchor::{run_failure_scenario, FailureKind, FailureScenario};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for kind in FailureKind::ALL {
        let r = run_failure_scenario(
            &FailureScenario {
                kind,
                generator_seed: 7,
            },
            0.12,
        )?;
        println!(
            "{:<26} {}",
            kind.name(),
            if r.passed { "pass" } else { "FAIL" }
        );
        println!("    {}", serde_json::to_string(&r)?);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
