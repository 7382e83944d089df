// Rotary embeddings: norm and relative-position checks, then attention to
// matched images before and after reordering.
//
// cargo run --example rope_attention

use attanchor::attention::{rope_attention_demo, DEFAULT_ROPE_BASE};
use attanchor::rope_rotate;
use attanchor::synth::{clustered, ClusteredSpec};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let x = [0.3, -1.2, 0.8, 0.5];
    let y = [1.0, 0.1, -0.4, 0.9];
    let rx = rope_rotate(&x, 17, DEFAULT_ROPE_BASE)?;
    println!(
        "|x| = {:.12}  |R x| = {:.12}",
        dot(&x, &x).sqrt(),
        dot(&rx, &rx).sqrt()
    );
    for shift in [0, 5, 500] {
        let a = rope_rotate(&x, 20 + shift, DEFAULT_ROPE_BASE)?;
        let b = rope_rotate(&y, 3 + shift, DEFAULT_ROPE_BASE)?;
        println!(
            "positions (20+{shift}, 3+{shift}): <Rx, Ry> = {:.12}",
            dot(&a, &b)
        );
    }

    let e = clustered(&ClusteredSpec::new(96, 20, 32, 4), 5)?;
    let report = rope_attention_demo(&e, 0.7, DEFAULT_ROPE_BASE)?;
    println!("{} anchored pairs", report.pairs.len());
    for p in report.pairs.iter().take(6) {
        println!(
            "  T{:<2} -> I{:<2}  distance {:>3} -> {}  attention {:.4} -> {:.4}",
            p.text_index,
            p.image_index,
            p.distance_before,
            p.distance_after,
            p.attention_before,
            p.attention_after
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
