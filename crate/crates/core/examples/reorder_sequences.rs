// Anchors in both directions on a small clustered set, plus the JSON
// document round trip.
//
// cargo run --example reorder_sequences

use attanchor::anchor::SequenceDocument;
use attanchor::synth::{clustered, ClusteredSpec};
use attanchor::{build_similarity_matrix, reorder, ImageIntoTextConfig, Mode, TokenKind};

fn glyph(kind: TokenKind) -> char {
    match kind {
        TokenKind::Image => 'I',
        TokenKind::Text => 'T',
        TokenKind::AnchorText => 't',
        TokenKind::AnchorImage => 'i',
        TokenKind::Pause => '.',
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let e = clustered(&ClusteredSpec::new(24, 10, 16, 3), 11)?;
    let sim = build_similarity_matrix(&e);

    let cfg = ImageIntoTextConfig::new(0.6, 0, false)?;
    let (plan, seq) = reorder(&e, &sim, Mode::TextIntoImage, &cfg)?;
    println!("text-into-image, tau = 0.6: {} anchors", plan.len());
    for a in &plan.entries {
        println!(
            "  T{} -> after I{}  (cos {:.3})",
            a.source, a.target, a.score
        );
    }
    println!(
        "  {}",
        seq.tokens()
            .iter()
            .map(|t| glyph(t.kind))
            .collect::<String>()
    );

    let cfg = ImageIntoTextConfig::new(0.6, 3, true)?;
    let (plan, seq) = reorder(&e, &sim, Mode::ImageIntoText, &cfg)?;
    println!("image-into-text with 3 pauses: {} anchors", plan.len());
    println!(
        "  {}",
        seq.tokens()
            .iter()
            .map(|t| glyph(t.kind))
            .collect::<String>()
    );

    let doc = SequenceDocument::new(&seq, 0.6, Mode::ImageIntoText);
    let json = doc.to_json_string();
    let back = SequenceDocument::from_json_str(&json)?.to_sequence()?;
    assert_eq!(back, seq);
    println!("document: {} bytes, round trip ok", json.len());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
