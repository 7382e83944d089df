// Driving the command-line front end in-process: write a generated set,
// reorder it from the file and read the document back.
//
// cargo run --example cli_pipeline

use attanchor::anchor::SequenceDocument;
use attanchor::cli;
use attanchor::synth::{clustered, ClusteredSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("attanchor-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("set.json");
    let output = dir.join("seq.json");
    std::fs::write(
        &input,
        clustered(&ClusteredSpec::new(32, 8, 16, 4), 2)?.to_json_string(),
    )?;

    let code = cli::run([
        "attanchor",
        "reorder",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--threshold",
        "0.5",
    ]);
    assert_eq!(code, 0);
    let doc = SequenceDocument::from_json_str(&std::fs::read_to_string(&output)?)?;
    println!("header: {}", serde_json::to_string(&doc.header)?);
    println!("{} tokens", doc.tokens.len());

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
