//! The multimodal-model client without a network: recorded fixtures for
//! decomposition, canned replies for the conflict and quality judges.
//!
//! Point MCIE_MLLM_ENDPOINT at a chat-completion server to use it live.

use std::path::Path;

use mcie::bench::{instruction_union, judge_ic_bc, normalize, Judge};
use mcie::datapipe::{detect_conflicts, expand_multiturn, generate_multiturn_record, ConflictJudge};
use mcie::image::Image;
use mcie::instructions::decompose_mllm;
use mcie::mllm::{Fixtures, MllmClient};

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mllm");
    let replay = MllmClient::replay(Fixtures::load(&dir)?);
    let raw = "add a red square at the top left; remove the blue circle; make the green triangle yellow";
    let ci = decompose_mllm(raw, &Image::filled(4, 4, [0.5; 3]), &replay)?;
    println!("{}", ci.to_json());

    let canned = MllmClient::mock(vec![
        r#"{"conflict": false, "rationale": "each edit touches a different object"}"#.into(),
        r#"{"ic": 8, "bc": 5, "rationale": "both edits visible, background intact"}"#.into(),
    ]);
    let rec = generate_multiturn_record(0, 2, 0.0, 3)?;
    let window = expand_multiturn(&rec.record)?.remove(0);
    let (src, tgt) = (rec.scenes[0].render(), rec.scenes[2].render());
    let verdict = detect_conflicts(&window, &ConflictJudge::Mllm { client: &canned, src: &src, tgt: &tgt })?;
    println!("conflict: {} ({})", verdict.conflict, verdict.rationale);

    let union = instruction_union(&window.instruction, 16, 16)?;
    let v = judge_ic_bc(&src, &tgt, &window.instruction, &union, &Judge::Mllm(&canned))?;
    let (ic, bc) = normalize(v.ic_raw(), v.bc_raw())?;
    println!("judge: ic {} bc {} -> normalized ({ic:.3}, {bc:.3})", v.ic_raw(), v.bc_raw());
    Ok(())
}
