//! Rule-based decomposition of complex instructions, with and without a
//! scene to ground boxes against.
//!
//! cargo run --example decompose_instructions -- "add two red squares; remove the blue circle"

use mcie::datapipe::generate_synthetic_corpus;
use mcie::instructions::decompose_rules;

fn main() -> anyhow::Result<()> {
    let raw = std::env::args().nth(1).unwrap_or_else(|| "add three apples on the left and then remove the cat".into());
    let ci = decompose_rules(&raw, None)?;
    println!("{raw:?}");
    for s in ci.subs() {
        println!("  {:<7} {:<28} {:?}", s.op.as_str(), s.text, s.bbox.coords());
    }

    // With a scene, REMOVE and CHANGE clauses are grounded on the named object.
    let sample = generate_synthetic_corpus(1, 3, 7)?.remove(0);
    let objects: Vec<String> = sample.src.objects.iter().map(|o| o.describe()).collect();
    println!("\nscene objects: {}", objects.join(", "));
    let grounded = decompose_rules(&sample.instruction.raw_text, Some(&sample.src))?;
    println!("{:?}", sample.instruction.raw_text);
    for s in grounded.subs() {
        println!("  {:<7} {:<36} {:?}", s.op.as_str(), s.text, s.bbox.coords());
    }
    Ok(())
}
