//! Dataset construction: synthetic corpus, multi-turn expansion with
//! conflict filtering, box selection and the score filter.
//!
//! cargo run --example build_dataset -- /tmp/mcie-data

use std::path::PathBuf;

use mcie::datapipe::{
    detect_conflicts, expand_multiturn, generate_multiturn_record, generate_synthetic_corpus, postprocess_filter,
    select_bbox, write_synthetic_corpus, ConflictJudge, QualityScores,
};
use mcie::encoders::PixelEmbedder;
use mcie::instructions::BBox;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mcie-data"));
    let corpus = generate_synthetic_corpus(50, 4, 0)?;
    let manifest = write_synthetic_corpus(&out, &corpus)?;
    println!("wrote {} samples to {}", corpus.len(), manifest.display());

    let rec = generate_multiturn_record(0, 4, 0.5, 1)?;
    let windows = expand_multiturn(&rec.record)?;
    println!("\n4-turn record -> {} windows", windows.len());
    for w in &windows {
        let verdict = detect_conflicts(w, &ConflictJudge::Stub)?;
        println!(
            "  start {} len {}  conflict={:<5}  {}",
            w.provenance.start, w.provenance.len, verdict.conflict, w.instruction.raw_text
        );
    }

    // The edited box is the one whose outside region is unchanged.
    let s = corpus.iter().find(|s| s.instruction.len() == 1).expect("a single-edit sample");
    let true_box = s.instruction.subs()[0].bbox;
    let candidates = vec![BBox::new(0.0, 0.0, 0.2, 0.2)?, true_box, BBox::new(0.7, 0.7, 1.0, 1.0)?];
    let (i, scores) = select_bbox(&s.src.render(), &s.tgt.render(), &candidates, &PixelEmbedder)?;
    println!("\nselect_bbox picked candidate {i} with scores {scores:.4?}");

    let mut scored = windows.clone();
    for (w, q) in
        scored.iter_mut().zip([(true, 4, 5), (true, 3, 5), (false, 5, 5), (true, 5, 4), (true, 4, 4), (true, 2, 2)])
    {
        w.scores = Some(QualityScores::new(q.0, q.1, q.2)?);
    }
    println!("score filter keeps {} of {}", postprocess_filter(scored)?.len(), windows.len());
    Ok(())
}
