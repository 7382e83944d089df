// Cluster-id mutual information inside a position window, before and after
// text anchors are placed next to their images.
//
// cargo run --example mutual_information

use attanchor::synth::{clustered, ClusteredSpec};
use attanchor::{local_mi_experiment, mutual_information, JointDistribution, LocalityWindow};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let diag = JointDistribution::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]])?;
    println!(
        "perfectly correlated bits: {} bit",
        mutual_information(&diag)
    );

    println!("seed  anchors  local before -> after   global before -> after   H(anchor)");
    for seed in 0..5 {
        let e = clustered(&ClusteredSpec::new(128, 40, 32, 4), seed)?;
        let r = local_mi_experiment(&e, 0.5, LocalityWindow::DEFAULT)?;
        println!(
            "{seed:>4}  {:>7}  {:>12.4} -> {:<8.4} {:>13.4} -> {:<8.4} {:>9.4}",
            r.anchor_count,
            r.mi_local_before,
            r.mi_local_after,
            r.mi_global_before,
            r.mi_global_after,
            r.anchor_entropy
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
