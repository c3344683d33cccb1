//! Two-phase training on a synthetic corpus, then editing an unseen scene
//! and dumping per-instruction attention heatmaps.
//!
//! cargo run --release --example train_and_edit -- [steps1] [steps2] [out_dir]

use std::path::PathBuf;

use mcie::bench::generate_benchmark;
use mcie::datapipe::training_corpora;
use mcie::editor::{euler_ancestral, train_two_phase, EditExample, EditorConfig, EditorModel, TrainConfig};
use mcie::image::Image;

fn heatmap(values: &[f64], h: usize, w: usize) -> anyhow::Result<Image> {
    let max = values.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    Ok(Image::from_data(h, w, values.iter().flat_map(|v| [v / max; 3]).collect())?)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps1 = args.next().map_or(Ok(400), |s| s.parse())?;
    let steps2 = args.next().map_or(Ok(200), |s| s.parse())?;
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("mcie-edit"));
    std::fs::create_dir_all(&out)?;

    let (simple, complex) = training_corpora(2000, 0)?;
    let simple: Vec<EditExample> = simple.iter().map(EditExample::from).collect();
    let complex: Vec<EditExample> = complex.iter().map(EditExample::from).collect();
    let mut model = EditorModel::new(EditorConfig::default(), 0)?;
    let cfg = TrainConfig { steps1, steps2, ..TrainConfig::default() };
    let report = train_two_phase(&mut model, &simple, &complex, &cfg, |phase, step, _| {
        if step % 100 == 0 {
            eprintln!("phase {} step {step}", phase.0);
        }
    })?;
    let last = report.losses.len();
    println!(
        "loss: first-100 mean {:.4}, last-100 mean {:.4}",
        report.running_mean(100.min(last), 100),
        report.running_mean(last, 100)
    );
    report.phase2.save(out.join("model.json"))?;

    let sample = generate_benchmark(1, 5)?.remove(0);
    println!("instruction: {}", sample.instruction.raw_text);
    let src = sample.src.render();
    let result = euler_ancestral(&model, &src, sample.instruction.subs(), 20, 1, true)?;
    std::fs::write(out.join("src.ppm"), src.to_ppm_bytes())?;
    std::fs::write(out.join("target.ppm"), sample.tgt.render().to_ppm_bytes())?;
    std::fs::write(out.join("edited.ppm"), result.image.to_ppm_bytes())?;
    let (h, w) = src.resolution();
    for (i, map) in result.trace.expect("trace requested").per_sub().iter().enumerate() {
        std::fs::write(out.join(format!("attention_sub{i}.ppm")), heatmap(map, h, w)?.to_ppm_bytes())?;
    }
    println!("images written to {}", out.display());
    Ok(())
}
