// Timing of similarity, insertion and one attention pass along each axis.
// Build with --release for meaningful numbers.
//
// cargo run --release --example scaling_bench

use attanchor::bench::{run_scaling, BenchGrid};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let grid = BenchGrid {
        n_values: vec![32, 64, 128, 256],
        m_values: vec![128, 256, 512],
        d_values: vec![32, 64, 128],
        repetitions: 3,
        seed: 0,
        threshold: 0.12,
        parallel: false,
    };
    let report = run_scaling(&grid)?;
    print!("{}", report.to_csv());
    println!("{}", report.summary_json());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
