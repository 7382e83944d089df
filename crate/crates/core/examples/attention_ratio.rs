// Attention from a text token to its matched image before and after the
// copy is moved next to the image, under additive distance penalties.
//
// cargo run --example attention_ratio

use attanchor::attention::{theorem1_sweep, Theorem1Sweep};
use attanchor::synth;
use attanchor::{argmax_match, build_similarity_matrix, verify_theorem1, BiasFamily, BiasModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = synth::rng(3);
    let e = synth::uniform_set(&mut rng, 48, 8, 16)?;
    let sim = build_similarity_matrix(&e);
    let (m, score) = argmax_match(sim.row(5));
    println!("T5 best matches I{m} (cos {score:.3})");

    for family in [BiasFamily::Linear, BiasFamily::Logarithmic] {
        for alpha in [0.01, 0.1, 1.0] {
            let r = verify_theorem1(&e, (5, m), score, BiasModel::new(family, alpha)?)?;
            println!(
                "{family:<11} alpha={alpha:<4} dist {:>2} -> {}  A {:.2e} -> {:.2e}  ratio {:.3e}  bound {:.3e}  S'/S-1 {:+.3}  {}",
                r.distance_before,
                r.distance_after,
                r.a_original,
                r.a_attanchor,
                r.ratio,
                r.bound,
                r.denominator_change,
                if r.satisfied { "ok" } else { "below" },
            );
        }
    }

    let cfg = Theorem1Sweep {
        trials: 200,
        ..Theorem1Sweep::default()
    };
    let trials = theorem1_sweep(&cfg)?;
    let ok = trials.iter().filter(|t| t.report.satisfied).count();
    println!(
        "randomized: {ok}/{} trials at or above the bound",
        trials.len()
    );
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
