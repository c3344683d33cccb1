//! Trains the full model and both single-pathway variants on the same
//! corpus and compares them on a synthetic benchmark, plus the phase-1
//! checkpoint of the full model on multi-edit samples.
//!
//! cargo run --release --example ablation -- [steps1] [steps2] [bench_size] [seed]

use mcie::bench::{aggregate_report, evaluate_model, generate_benchmark, render_table};
use mcie::datapipe::training_corpora;
use mcie::editor::{train_two_phase, EditExample, EditorConfig, EditorModel, TrainConfig, Variant};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps1 = args.next().map_or(Ok(2000), |s| s.parse())?;
    let steps2 = args.next().map_or(Ok(1000), |s| s.parse())?;
    let bench_size = args.next().map_or(Ok(400), |s| s.parse())?;
    let seed = args.next().map_or(Ok(0), |s| s.parse())?;

    let (simple, complex) = training_corpora(2000, seed)?;
    let simple: Vec<EditExample> = simple.iter().map(EditExample::from).collect();
    let complex: Vec<EditExample> = complex.iter().map(EditExample::from).collect();
    let bench = generate_benchmark(bench_size, seed)?;
    let multi: Vec<_> = bench.iter().filter(|s| s.instruction.len() >= 2).cloned().collect();

    let mut reports = Vec::new();
    for variant in Variant::ALL {
        let mut model = EditorModel::new(EditorConfig { variant, ..EditorConfig::default() }, seed)?;
        let cfg = TrainConfig { steps1, steps2, seed, ..TrainConfig::default() };
        let run = train_two_phase(&mut model, &simple, &complex, &cfg, |_, _, _| {})?;
        eprintln!("{}: trained, final loss {:.4}", variant.name(), run.running_mean(run.losses.len(), 100));
        reports.push(aggregate_report(&evaluate_model(&model, &bench, 20, seed)?, variant.name())?);
        if variant == Variant::Full {
            let phase1 = EditorModel::from_checkpoint(&run.phase1)?;
            reports.push(aggregate_report(&evaluate_model(&model, &multi, 20, seed)?, "full (multi-edit)")?);
            reports.push(aggregate_report(&evaluate_model(&phase1, &multi, 20, seed)?, "phase 1 only (multi-edit)")?);
        }
    }
    print!("{}", render_table(&reports));
    Ok(())
}
