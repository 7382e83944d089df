// Choosing the similarity threshold: the anchor-count sweep, calibration to
// a target fraction, F1 on labelled pairs and the Gaussian-mixture oracle.
//
// cargo run --example threshold_tuning

use attanchor::synth::{clustered, ClusteredSpec};
use attanchor::threshold::{sweep_csv, sweep_report, DEFAULT_SWEEP};
use attanchor::{
    anchor_fraction, build_similarity_matrix, calibrate_threshold, gaussian_oracle,
    optimal_threshold, plan_text_into_image, CorrespondenceLabels, GaussianMixtureSpec,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let e = clustered(&ClusteredSpec::new(576, 50, 64, 4), 0)?;
    print!("{}", sweep_csv(&sweep_report(&e, &DEFAULT_SWEEP)?));

    let sim = build_similarity_matrix(&e);
    let tau = calibrate_threshold(&sim, 0.10)?;
    let plan = plan_text_into_image(&sim, tau)?;
    println!(
        "calibrated tau {tau:.4}: {} anchors, fraction {:.3}",
        plan.len(),
        anchor_fraction(&plan, e.n())
    );

    let labels = CorrespondenceLabels::from_clusters(&e)?;
    let curve = optimal_threshold(&labels)?;
    println!(
        "F1-optimal tau {:.4} (F1 {:.3}) over {} pairs, {} true",
        curve.tau_star,
        curve.f1_star,
        labels.pairs().len(),
        labels.true_count()
    );

    for mu_true in [0.2, 0.4, 0.6, 0.8] {
        let spec = GaussianMixtureSpec::new(mu_true, 0.0, 0.15, 0.3)?;
        let c = gaussian_oracle(&spec)?;
        println!(
            "oracle mu_true {mu_true}: tau* {:.3}  F1* {:.3}",
            c.tau_star, c.f1_star
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
