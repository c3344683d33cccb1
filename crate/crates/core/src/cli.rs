//! Command-line front end. Every failure maps to an exit code and one
//! machine-parsable line on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{
    aggregate_report, evaluate_examples, generate_benchmark, instruction_union, render_table, JudgeKind, Report,
};
use crate::config::Config;
use crate::datapipe::{
    detect_conflicts, expand_multiturn, generate_corpus_between, generate_multiturn_record, load_examples, select_bbox,
    write_manifest, write_synthetic_corpus, ConflictJudge, ManifestEntry, Scene,
};
use crate::editor::{euler_ancestral, train_two_phase, EditExample, EditorError, EditorModel, Phase, Variant};
use crate::encoders::{EdgeEmbedder, Embedder, PixelEmbedder};
use crate::image::Image;
use crate::instructions::{decompose_mllm, decompose_rules, BBox, ComplexInstruction};
use crate::mllm::MllmError;
use crate::numkernel::{Checkpoint, TensorError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_TRANSPORT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "mcie", version, about = "Complex-instruction image editing toolkit")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum JudgeArg {
    Procedural,
    Mllm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EmbedderArg {
    Pixel,
    Edge,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, and optionally expanded multi-turn records.
    GenData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        max_subs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        min_subs: usize,
        /// Multi-turn records to generate and expand next to the corpus.
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose an instruction and print the JSON decomposition.
    Decompose {
        instruction: String,
        /// Ask the configured multimodal model instead of the rules.
        #[arg(long)]
        mllm: bool,
        /// Scene JSON used to ground boxes (rules) or rendered for the model.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Source image for the model path.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Pick the candidate box that best explains a source/target pair.
    SelectBbox {
        src: PathBuf,
        tgt: PathBuf,
        /// JSON array of [x0, y0, x1, y1] boxes.
        candidates: PathBuf,
        #[arg(long, value_enum, default_value_t = EmbedderArg::Pixel)]
        embedder: EmbedderArg,
    },
    /// Two-phase training: single-edit corpus, then multi-edit corpus.
    Train {
        corpus1: PathBuf,
        corpus2: PathBuf,
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        steps1: Option<usize>,
        #[arg(long)]
        steps2: Option<usize>,
    },
    /// Edit a scene (JSON) or image (PPM) with a trained checkpoint.
    Edit {
        ckpt: PathBuf,
        scene: PathBuf,
        /// Instruction text, or a decomposition JSON file.
        instruction: String,
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        mllm: bool,
        /// Copy source pixels outside every edit box into the output.
        /// Post-processing only; off by default.
        #[arg(long)]
        composite: bool,
        /// Directory for per-sub attention heatmaps.
        #[arg(long)]
        dump_attention: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a benchmark manifest and write a report.
    Evaluate {
        ckpt: PathBuf,
        bench: PathBuf,
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = JudgeArg::Procedural)]
        judge: JudgeArg,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Render reports side by side with best and second-best marks.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Train and evaluate the full model and both single-pathway variants.
    Ablate {
        corpus: PathBuf,
        out: PathBuf,
        /// Benchmark manifest; generated from the seed when omitted.
        #[arg(long)]
        bench: Option<PathBuf>,
    },
}

/// An invalid combination of arguments.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit code and kind for an error chain.
pub fn classify(err: &anyhow::Error) -> (i32, &'static str) {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return (EXIT_USAGE, "usage");
        }
        if cause.is::<MllmError>() {
            return (EXIT_TRANSPORT, "transport");
        }
        if let Some(e) = cause.downcast_ref::<EditorError>() {
            if e.is_numeric() {
                return (EXIT_NUMERIC, "numeric");
            }
        }
        if let Some(TensorError::NonFinite(_)) = cause.downcast_ref::<TensorError>() {
            return (EXIT_NUMERIC, "numeric");
        }
    }
    (EXIT_DATA, "data")
}

/// `{"error": kind, "code": n, "reason": "..."}` on a single line.
pub fn error_line(err: &anyhow::Error) -> String {
    let (code, kind) = classify(err);
    let reason = err.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ");
    json!({"error": kind, "code": code, "reason": reason}).to_string()
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            classify(&e).0
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    match cli.command {
        Command::GenData { n, max_subs, min_subs, records, out } => gen_data(
            &cfg,
            n.unwrap_or(cfg.data.n_samples),
            min_subs,
            max_subs.unwrap_or(cfg.data.max_subs),
            records.unwrap_or(cfg.data.records),
            &out,
        ),
        Command::Decompose { instruction, mllm, scene, image } => {
            decompose(&cfg, &instruction, mllm, scene.as_deref(), image.as_deref())
        }
        Command::SelectBbox { src, tgt, candidates, embedder } => select(&src, &tgt, &candidates, embedder),
        Command::Train { corpus1, corpus2, out, variant, steps1, steps2 } => {
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            cfg.train.steps1 = steps1.unwrap_or(cfg.train.steps1);
            cfg.train.steps2 = steps2.unwrap_or(cfg.train.steps2);
            train(&cfg, &corpus1, &corpus2, &out)
        }
        Command::Edit { ckpt, scene, instruction, out, lambda, steps, mllm, composite, dump_attention } => {
            let opts = EditOptions {
                lambda,
                steps: steps.unwrap_or(cfg.sampler.steps),
                mllm,
                composite,
                dump: dump_attention,
            };
            edit(&cfg, &ckpt, &scene, &instruction, &out, &opts)
        }
        Command::Evaluate { ckpt, bench, out, judge, method, steps } => {
            let steps = steps.unwrap_or(cfg.sampler.steps);
            evaluate(&cfg, &ckpt, &bench, &out, judge, method, steps)
        }
        Command::Report { reports } => report(&reports),
        Command::Ablate { corpus, out, bench } => ablate(&cfg, &corpus, &out, bench.as_deref()),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Image::from_ppm_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scene {}", path.display()))
}

fn gen_data(cfg: &Config, n: usize, min_subs: usize, max_subs: usize, records: usize, out: &Path) -> Result<()> {
    let corpus = generate_corpus_between(n, min_subs, max_subs, cfg.seed)?;
    let manifest = write_synthetic_corpus(out, &corpus)?;
    let mut summary = json!({"samples": corpus.len(), "manifest": manifest.display().to_string()});
    if records > 0 {
        let dir = out.join("multiturn");
        fs::create_dir_all(dir.join("images")).with_context(|| format!("creating {}", dir.display()))?;
        let (mut kept, mut dropped, mut lines) = (Vec::new(), 0usize, String::new());
        for id in 0..records {
            let rec = generate_multiturn_record(id, cfg.data.turns, cfg.data.reedit_rate, cfg.seed)?;
            let mut record = rec.record.clone();
            for (k, scene) in rec.scenes.iter().enumerate() {
                let rel = format!("images/{}", record.images[k]);
                write_file(&dir.join(&rel), scene.render().to_ppm_bytes())?;
                record.images[k] = rel;
            }
            lines.push_str(&serde_json::to_string(&record)?);
            lines.push('\n');
            for s in expand_multiturn(&record)? {
                if detect_conflicts(&s, &ConflictJudge::Stub)?.conflict {
                    dropped += 1;
                } else {
                    kept.push(ManifestEntry::from(&s));
                }
            }
        }
        write_file(&dir.join("records.jsonl"), lines)?;
        write_manifest(&dir.join("manifest.jsonl"), &kept)?;
        summary["windows"] = json!(kept.len());
        summary["conflicts_dropped"] = json!(dropped);
    }
    println!("{summary}");
    Ok(())
}

fn decompose(cfg: &Config, raw: &str, mllm: bool, scene: Option<&Path>, image: Option<&Path>) -> Result<()> {
    let scene = scene.map(read_scene).transpose()?;
    let ci = if mllm {
        let img = match (image, &scene) {
            (Some(p), _) => read_image(p)?,
            (None, Some(s)) => s.render(),
            (None, None) => return Err(usage("--mllm needs --image or --scene")),
        };
        let client = cfg.mllm.client()?;
        decompose_mllm(raw, &img, &client)?
    } else {
        decompose_rules(raw, scene.as_ref())?
    };
    println!("{}", ci.to_json());
    Ok(())
}

fn select(src: &Path, tgt: &Path, candidates: &Path, embedder: EmbedderArg) -> Result<()> {
    let (a, b) = (read_image(src)?, read_image(tgt)?);
    let text = fs::read_to_string(candidates).with_context(|| format!("reading {}", candidates.display()))?;
    let raw: Vec<[f64; 4]> =
        serde_json::from_str(&text).context("candidates must be a JSON array of [x0, y0, x1, y1]")?;
    let boxes = raw.into_iter().map(BBox::try_from).collect::<Result<Vec<_>, _>>()?;
    let emb: &dyn Embedder = match embedder {
        EmbedderArg::Pixel => &PixelEmbedder,
        EmbedderArg::Edge => &EdgeEmbedder,
    };
    let (index, scores) = select_bbox(&a, &b, &boxes, emb)?;
    println!("{}", json!({"index": index, "scores": scores}));
    Ok(())
}

fn train_model(cfg: &Config, simple: &[EditExample], complex: &[EditExample]) -> Result<(Checkpoint, Checkpoint)> {
    let mut model = EditorModel::new(cfg.model.clone(), cfg.seed)?;
    let mut window = Vec::with_capacity(100);
    let report = train_two_phase(&mut model, simple, complex, &cfg.train, |Phase(p), step, loss| {
        window.push(loss);
        if step % 100 == 0 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            eprintln!("variant={} phase={p} step={step} loss={loss:.6} mean100={mean:.6}", cfg.model.variant.name());
            window.clear();
        }
    })?;
    Ok((report.phase1, report.phase2))
}

fn phase1_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.phase1.json"))
}

fn train(cfg: &Config, corpus1: &Path, corpus2: &Path, out: &Path) -> Result<()> {
    let simple = load_examples(corpus1)?;
    let complex = load_examples(corpus2)?;
    let (p1, p2) = train_model(cfg, &simple, &complex)?;
    write_file(&phase1_path(out), p1.to_json())?;
    write_file(out, p2.to_json())?;
    println!("{}", json!({"checkpoint": out.display().to_string(), "phase1": phase1_path(out).display().to_string()}));
    Ok(())
}

fn load_model(path: &Path) -> Result<EditorModel> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(EditorModel::from_checkpoint(&ckpt)?)
}

/// Grayscale map scaled so its largest value is white.
fn heatmap(values: &[f64], height: usize, width: usize) -> Result<Image> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let data = values.iter().flat_map(|v| [if max > 0.0 { v / max } else { 0.0 }; 3]).collect();
    Ok(Image::from_data(height, width, data)?)
}

struct EditOptions {
    lambda: Option<f64>,
    steps: usize,
    mllm: bool,
    composite: bool,
    dump: Option<PathBuf>,
}

fn edit(cfg: &Config, ckpt: &Path, scene: &Path, instruction: &str, out: &Path, opts: &EditOptions) -> Result<()> {
    let mut model = load_model(ckpt)?;
    if let Some(l) = opts.lambda {
        model.set_lambda(l)?;
    }
    let is_json = scene.extension().is_some_and(|e| e == "json");
    let (src, hint) = if is_json {
        let s = read_scene(scene)?;
        (s.render(), Some(s))
    } else {
        (read_image(scene)?, None)
    };
    let decomposition = Path::new(instruction);
    let ci: ComplexInstruction = if instruction.ends_with(".json") && decomposition.is_file() {
        let text = fs::read_to_string(decomposition).with_context(|| format!("reading {instruction}"))?;
        ComplexInstruction::from_json(&text)?
    } else if opts.mllm {
        decompose_mllm(instruction, &src, &cfg.mllm.client()?)?
    } else {
        decompose_rules(instruction, hint.as_ref())?
    };
    let dump = opts.dump.as_deref();
    let result = euler_ancestral(&model, &src, ci.subs(), opts.steps, cfg.seed, dump.is_some())?;
    let mut image = result.image;
    if opts.composite {
        let (h, w) = src.resolution();
        let union = instruction_union(&ci, h, w)?;
        for r in 0..h {
            for c in 0..w {
                if !union.get(r, c) {
                    image.set_pixel(r, c, src.pixel(r, c));
                }
            }
        }
    }
    write_file(out, image.to_ppm_bytes())?;
    let mut maps = Vec::new();
    if let (Some(dir), Some(trace)) = (dump, &result.trace) {
        let (h, w) = src.resolution();
        for (i, values) in trace.per_sub().iter().enumerate() {
            let path = dir.join(format!("attention_sub{i}.ppm"));
            write_file(&path, heatmap(values, h, w)?.to_ppm_bytes())?;
            maps.push(path.display().to_string());
        }
    }
    let subs: Vec<_> = ci.subs().iter().map(|s| json!({"text": s.text, "op": s.op, "bbox": s.bbox.coords()})).collect();
    println!("{}", json!({"output": out.display().to_string(), "subs": subs, "attention": maps}));
    Ok(())
}

fn evaluate_to_report(
    cfg: &Config,
    model: &EditorModel,
    examples: &[EditExample],
    judge: JudgeArg,
    method: &str,
    steps: usize,
) -> Result<Report> {
    let client = match judge {
        JudgeArg::Mllm => Some(cfg.mllm.client()?),
        JudgeArg::Procedural => None,
    };
    let kind = client.as_ref().map_or(JudgeKind::Procedural, JudgeKind::Mllm);
    let records = evaluate_examples(model, examples, steps, cfg.seed, kind)?;
    Ok(aggregate_report(&records, method)?)
}

fn evaluate(
    cfg: &Config,
    ckpt: &Path,
    bench: &Path,
    out: &Path,
    judge: JudgeArg,
    method: Option<String>,
    steps: usize,
) -> Result<()> {
    let model = load_model(ckpt)?;
    let examples = load_examples(bench)?;
    let method = method.unwrap_or_else(|| model.config().variant.name().to_string());
    let report = evaluate_to_report(cfg, &model, &examples, judge, &method, steps)?;
    write_file(out, report.to_json())?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}

fn report(paths: &[PathBuf]) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Report>(&text).with_context(|| format!("parsing report {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(render_table(&reports).as_bytes())?;
    Ok(())
}

fn ablate(cfg: &Config, corpus: &Path, out: &Path, bench: Option<&Path>) -> Result<()> {
    let examples = load_examples(corpus)?;
    let (simple, complex): (Vec<EditExample>, Vec<EditExample>) =
        examples.into_iter().partition(|e| e.instruction.len() == 1);
    if simple.is_empty() || complex.is_empty() {
        bail!("ablation corpus needs both single-edit and multi-edit samples");
    }
    let bench_examples = match bench {
        Some(p) => load_examples(p)?,
        None => generate_benchmark(cfg.data.bench_size, cfg.seed)?.iter().map(EditExample::from).collect(),
    };
    let mut reports = Vec::new();
    for variant in Variant::ALL {
        let mut vcfg = cfg.clone();
        vcfg.model.variant = variant;
        let (_, ckpt) = train_model(&vcfg, &simple, &complex)?;
        write_file(&out.join(format!("{}.ckpt.json", variant.name())), ckpt.to_json())?;
        let model = EditorModel::from_checkpoint(&ckpt)?;
        let report = evaluate_to_report(
            &vcfg,
            &model,
            &bench_examples,
            JudgeArg::Procedural,
            variant.name(),
            cfg.sampler.steps,
        )?;
        write_file(&out.join(format!("{}.report.json", variant.name())), report.to_json())?;
        reports.push(report);
    }
    let table = render_table(&reports);
    write_file(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
