//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any fails.
//!
//! Criteria 9–11 train nine models (three variants, three seeds) at the
//! default desk-scale size and take roughly half an hour on one core.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use mcie::bcca::{bcca_forward, BackgroundEncoder, BccaAttention, BccaConfig};
use mcie::bench::{
    aggregate_report, evaluate_model, generate_benchmark, instruction_union, judge_ic_bc, normalize, pixel_metrics,
    Judge, MetricRecord,
};
use mcie::datapipe::{
    expand_multiturn, postprocess_filter, select_bbox, training_corpora, ComplexEditSample, MultiTurnRecord,
    Provenance, QualityScores, SyntheticSample,
};
use mcie::editor::{
    ancestral_step, euler_ancestral, train_two_phase, EditExample, EditorConfig, EditorModel, TrainConfig, TrainReport,
    Variant,
};
use mcie::encoders::PixelEmbedder;
use mcie::image::Image;
use mcie::instructions::{
    decompose_mllm, rasterize, union_mask, BBox, ComplexInstruction, Mask, OpType, SubInstruction,
};
use mcie::mllm::{Fixtures, MllmClient, MllmError, Transport, ENV_ALLOW_NETWORK};
use mcie::numkernel::{finite_diff_check, ParamStore, Tensor};
use mcie::saca::{
    fourier_bands, fourier_features, saca_forward, timestep_mask, MaskMode, SacaAttention, SacaConfig, SacaContext,
    SpatialEncoder,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pinned tolerances.
const TRIG_TOL: f64 = 1e-12;
const DECAY_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const SIGMA_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const LOSS_RATIO: f64 = 0.6;
const ABLATION_GAP: f64 = 0.02;

const SEEDS: [u64; 3] = [0, 1, 2];
const CORPUS_SIZE: usize = 2000;
const BENCH_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

/// Random box whose corners lie on a `grid`-cell lattice.
fn lattice_box(rng: &mut ChaCha8Rng, grid: usize) -> BBox {
    let g = grid as f64;
    let (c0, c1) = loop {
        let a = rng.random_range(0..=grid);
        let b = rng.random_range(0..=grid);
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    let (r0, r1) = loop {
        let a = rng.random_range(0..=grid);
        let b = rng.random_range(0..=grid);
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    bb(c0 as f64 / g, r0 as f64 / g, c1 as f64 / g, r1 as f64 / g)
}

// 1 ---------------------------------------------------------------------

fn record(n: usize) -> MultiTurnRecord {
    MultiTurnRecord {
        id: format!("r{n}"),
        images: (0..=n).map(|i| format!("{i}.ppm")).collect(),
        turns: (0..n)
            .map(|i| SubInstruction { text: format!("edit {i}"), op: OpType::Change, bbox: BBox::FULL, index: i })
            .collect(),
    }
}

fn criterion_expansion() -> Outcome {
    let start = Instant::now();
    let four = expand_multiturn(&record(4)).unwrap();
    let mut hist = BTreeMap::new();
    for s in &four {
        *hist.entry(s.provenance.len).or_insert(0) += 1;
    }
    let expected: BTreeMap<usize, usize> = [(2, 3), (3, 2), (4, 1)].into();
    let mut oracle_ok = true;
    for n in 2..=8 {
        // brute force: every (start, end) pair with at least two turns between
        let mut want = Vec::new();
        for a in 0..=n {
            for b in a..=n {
                if b - a >= 2 {
                    want.push((a, b - a, format!("{a}.ppm"), format!("{b}.ppm")));
                }
            }
        }
        let mut got: Vec<_> = expand_multiturn(&record(n))
            .unwrap()
            .into_iter()
            .map(|s| (s.provenance.start, s.provenance.len, s.src, s.tgt))
            .collect();
        want.sort();
        got.sort();
        oracle_ok &= want == got;
    }
    let elapsed = start.elapsed();
    outcome(
        hist == expected && oracle_ok && elapsed < Duration::from_secs(1),
        format!("n=4 lengths {hist:?}; brute-force agreement n<=8: {oracle_ok}; {elapsed:.2?}"),
    )
}

// 2 ---------------------------------------------------------------------

fn criterion_selection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w) = (16, 16);
    let mut hits = 0;
    for _ in 0..200 {
        let src = Image::from_data(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let k = rng.random_range(2..=6);
        let candidates: Vec<BBox> = (0..k).map(|_| lattice_box(&mut rng, 16)).collect();
        let chosen = rng.random_range(0..k);
        // change only pixels inside the chosen box and outside every other one
        let masks: Vec<Mask> = candidates.iter().map(|b| rasterize(b, h, w)).collect();
        let mut tgt = src.clone();
        let mut changed = 0;
        for r in 0..h {
            for c in 0..w {
                let exclusive =
                    masks[chosen].get(r, c) && masks.iter().enumerate().all(|(j, m)| j == chosen || !m.get(r, c));
                if exclusive {
                    tgt.set_pixel(r, c, [rng.random(), rng.random(), rng.random()]);
                    changed += 1;
                }
            }
        }
        let (i, _) = select_bbox(&src, &tgt, &candidates, &PixelEmbedder).unwrap();
        // when the chosen box has no exclusive cells every candidate ties
        let expected = if changed == 0 { 0 } else { chosen };
        hits += usize::from(i == expected);
    }
    let mut ties_ok = true;
    for _ in 0..20 {
        let img = Image::from_data(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let candidates: Vec<BBox> = (0..4).map(|_| lattice_box(&mut rng, 16)).collect();
        ties_ok &= select_bbox(&img, &img, &candidates, &PixelEmbedder).unwrap().0 == 0;
    }
    let elapsed = start.elapsed();
    outcome(
        hits == 200 && ties_ok && elapsed < Duration::from_secs(10),
        format!("{hits}/200 known boxes recovered; ties -> index 0: {ties_ok}; {elapsed:.2?}"),
    )
}

// 3 ---------------------------------------------------------------------

fn criterion_fourier() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..1000 {
        let (x0, y0) = (rng.random::<f64>() * 0.9, rng.random::<f64>() * 0.9);
        let b = bb(x0, y0, rng.random_range(x0 + 0.01..=1.0), rng.random_range(y0 + 0.01..=1.0));
        for k in 1..=8 {
            let f = fourier_features(b.coords(), &fourier_bands(k));
            let d = f.data();
            for c in 0..4 {
                for j in 0..k {
                    let s = d[c * 2 * k + j];
                    let co = d[c * 2 * k + k + j];
                    worst = worst.max((s * s + co * co - 1.0).abs());
                    pairs += 1;
                }
            }
        }
    }
    outcome(worst <= TRIG_TOL, format!("{pairs} pairs, max |sin²+cos²−1| = {worst:.2e}"))
}

// 4 ---------------------------------------------------------------------

fn criterion_schedule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t_total = 1000.0;
    let mut exact0 = true;
    let mut worst_end: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..50 {
        let (h, w) = (rng.random_range(2..12), rng.random_range(2..12));
        let mask = rasterize(&lattice_box(&mut rng, 12), h, w);
        exact0 &= timestep_mask(&mask, 0.0, t_total) == mask.to_f64();
        for (v, &m) in timestep_mask(&mask, t_total, t_total).iter().zip(mask.cells()) {
            if m {
                worst_end = worst_end.max((v - (-1.0f64).exp()).abs());
            }
        }
        let mut ts: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * t_total).collect();
        ts.sort_by(f64::total_cmp);
        let maps: Vec<Vec<f64>> = ts.iter().map(|&t| timestep_mask(&mask, t, t_total)).collect();
        monotone &= maps.windows(2).all(|p| p[0].iter().zip(&p[1]).all(|(a, b)| b <= a));
    }
    outcome(
        exact0 && worst_end <= DECAY_TOL && monotone,
        format!("M'(0)=M: {exact0}; |M'(T)−e⁻¹| max {worst_end:.2e}; monotone over 100 t: {monotone}"),
    )
}

// 5 ---------------------------------------------------------------------

fn criterion_support() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0usize;
    let mut configs = 0;
    for mode in [MaskMode::Literal, MaskMode::Additive] {
        for _ in 0..250 {
            let (h, w) = (rng.random_range(2..7), rng.random_range(2..7));
            let d = rng.random_range(2..6);
            let m = rng.random_range(1..4);
            let mut store = ParamStore::new();
            let saca = SacaAttention::new(&mut store, "saca", d, mode, &mut rng).unwrap();
            let bcca = BccaAttention::new(&mut store, "bcca", d, mode, &mut rng).unwrap();
            let boxes: Vec<BBox> = (0..m).map(|_| lattice_box(&mut rng, 6)).collect();
            let masks: Vec<Mask> = boxes.iter().map(|b| rasterize(b, h, w)).collect();
            let union = union_mask(&masks).unwrap();
            let mut tape = mcie::numkernel::Tape::new();
            let q = tape.constant(Tensor::randn(&[h * w, d], 1.0, &mut rng));
            let contexts =
                (0..m).map(|_| tape.constant(Tensor::randn(&[rng.random_range(1..4), d], 1.0, &mut rng))).collect();
            let ctx = SacaContext::from_parts(contexts, masks).unwrap();
            let t = rng.random::<f64>() * 1000.0;
            let fg = saca_forward(&mut tape, &store, &saca, q, &ctx, t, 1000.0, None).unwrap();
            let f = tape.constant(Tensor::randn(&[rng.random_range(1..5), d], 1.0, &mut rng));
            let bg = bcca_forward(&mut tape, &store, &bcca, q, f, &union).unwrap();
            for (r, &inside) in union.cells().iter().enumerate() {
                let fg_row = &tape.value(fg).data()[r * d..(r + 1) * d];
                let bg_row = &tape.value(bg).data()[r * d..(r + 1) * d];
                if !inside && fg_row.iter().any(|&v| v != 0.0) {
                    violations += 1;
                }
                if inside && bg_row.iter().any(|&v| v != 0.0) {
                    violations += 1;
                }
            }
            configs += 1;
        }
    }
    outcome(violations == 0, format!("{configs} configurations (both mask modes), {violations} non-zero cells"))
}

// 6 ---------------------------------------------------------------------

fn tiny_editor(variant: Variant, lambda: f64) -> EditorConfig {
    EditorConfig {
        height: 2,
        width: 2,
        d: 4,
        n_layers: 1,
        lambda,
        variant,
        n_freq: 2,
        saca_blocks: 1,
        bcca_blocks: 1,
        bcca_queries: 2,
        ..EditorConfig::default()
    }
}

fn two_subs() -> Vec<SubInstruction> {
    vec![
        SubInstruction { text: "add a red square".into(), op: OpType::Add, bbox: bb(0.0, 0.0, 0.5, 0.5), index: 0 },
        SubInstruction {
            text: "remove the blue circle".into(),
            op: OpType::Remove,
            bbox: bb(0.5, 0.0, 1.0, 1.0),
            index: 1,
        },
    ]
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 4;
    let mut errors = Vec::new();
    for mode in [MaskMode::Literal, MaskMode::Additive] {
        let mut store = ParamStore::new();
        let cfg = SacaConfig { d, n_freq: 2, n_blocks: 1, mask_mode: mode, ..SacaConfig::default() };
        let spatial = SpatialEncoder::new(&mut store, "spatial", &cfg, &mut rng).unwrap();
        let attn = SacaAttention::new(&mut store, "saca", d, mode, &mut rng).unwrap();
        let qv = Tensor::randn(&[4, d], 1.0, &mut rng);
        let texts = [Tensor::randn(&[2, d], 1.0, &mut rng), Tensor::randn(&[3, d], 1.0, &mut rng)];
        let boxes = [bb(0.0, 0.0, 0.6, 1.0), bb(0.4, 0.0, 1.0, 0.5)];
        let err = finite_diff_check(&mut store, GRAD_EPS, |tape, s| {
            let q = tape.constant(qv.clone());
            let masks = boxes.iter().map(|b| rasterize(b, 2, 2)).collect();
            let ctx = SacaContext::build(tape, s, &spatial, &texts, &boxes, masks)?;
            let fg = saca_forward(tape, s, &attn, q, &ctx, 250.0, 1000.0, None)?;
            let sq = tape.mul(fg, fg)?;
            tape.mean(sq)
        })
        .unwrap();
        errors.push((format!("saca/{mode}"), err));

        let mut store = ParamStore::new();
        let bcfg = BccaConfig { d, n_blocks: 1, n_queries: 2, mask_mode: mode };
        let enc = BackgroundEncoder::new(&mut store, "bg", 3, &bcfg, &mut rng).unwrap();
        let attn = BccaAttention::new(&mut store, "bcca", d, mode, &mut rng).unwrap();
        let patches = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let qv = Tensor::randn(&[4, d], 1.0, &mut rng);
        let m = rasterize(&bb(0.0, 0.0, 0.5, 1.0), 2, 2);
        let err = finite_diff_check(&mut store, GRAD_EPS, |tape, s| {
            let f = enc.forward(tape, s, &patches)?;
            let q = tape.constant(qv.clone());
            let bg = bcca_forward(tape, s, &attn, q, f, &m)?;
            let sq = tape.mul(bg, bg)?;
            tape.mean(sq)
        })
        .unwrap();
        errors.push((format!("bcca/{mode}"), err));
    }
    let mut model = EditorModel::new(tiny_editor(Variant::Full, 0.5), 6).unwrap();
    let src = Image::from_data(2, 2, (0..12).map(|_| rng.random::<f64>()).collect()).unwrap();
    let cond = model.condition(&src, &two_subs()).unwrap();
    let z = Tensor::randn(&[4, 3], 1.0, &mut rng);
    let net = model.net.clone();
    let err = finite_diff_check(&mut model.store, GRAD_EPS, |tape, s| {
        let zv = tape.constant(z.clone());
        let out = net.forward(tape, s, zv, &cond, 300.0, None).map_err(|e| match e {
            mcie::editor::EditorError::Tensor(t) => t,
            other => panic!("{other}"),
        })?;
        let sq = tape.mul(out, out)?;
        tape.mean(sq)
    })
    .unwrap();
    errors.push(("denoiser block".into(), err));
    let elapsed = start.elapsed();
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let listing: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        worst < GRAD_TOL && elapsed < Duration::from_secs(60),
        format!("max rel error {worst:.2e} ({}); {elapsed:.2?}", listing.join(", ")),
    )
}

// 7 ---------------------------------------------------------------------

fn criterion_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identical = 0;
    for i in 0..50 {
        let lambda = if i % 2 == 0 { 1.0 } else { 0.0 };
        let single = if lambda == 1.0 { Variant::NoBcca } else { Variant::NoSaca };
        let seed = rng.random();
        let full = EditorModel::new(tiny_editor(Variant::Full, lambda), seed).unwrap();
        let one = EditorModel::new(tiny_editor(single, lambda), seed).unwrap();
        let src = Image::from_data(2, 2, (0..12).map(|_| rng.random::<f64>()).collect()).unwrap();
        let mut subs = two_subs();
        subs[0].bbox = lattice_box(&mut rng, 2);
        subs[1].bbox = lattice_box(&mut rng, 2);
        let cond = full.condition(&src, &subs).unwrap();
        let z = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let t = rng.random_range(1.0..1000.0);
        let a = full.predict_noise(&z, &cond, t, None).unwrap();
        let b = one.predict_noise(&z, &cond, t, None).unwrap();
        identical += usize::from(a.data() == b.data());
    }
    outcome(identical == 50, format!("{identical}/50 bit-identical (λ=1 vs no-BCCA, λ=0 vs no-SACA)"))
}

// 8 ---------------------------------------------------------------------

fn criterion_sampler() -> Outcome {
    let model = EditorModel::new(EditorConfig::default(), 8).unwrap();
    let sample = &generate_benchmark(1, 8).unwrap()[0];
    let src = sample.src.render();
    let a = euler_ancestral(&model, &src, sample.instruction.subs(), 20, 99, false).unwrap();
    let b = euler_ancestral(&model, &src, sample.instruction.subs(), 20, 99, false).unwrap();
    let worst = a
        .steps
        .iter()
        .map(|s| {
            (s.sigma_up.powi(2) + s.sigma_down.powi(2) - s.sigma_next.powi(2)).abs() / s.sigma_next.powi(2).max(1.0)
        })
        .fold(0.0, f64::max);
    // the schedule's own helper must agree with the recorded steps
    let consistent = a.steps.iter().all(|s| ancestral_step(s.sigma, s.sigma_next) == (s.sigma_up, s.sigma_down));
    let reproducible = a.image == b.image;
    outcome(
        a.steps.len() == 20 && worst <= SIGMA_TOL && consistent && reproducible,
        format!(
            "{} steps, max |σ_up²+σ_down²−σ_next²|/max(1,σ_next²) = {worst:.2e}; bit-reproducible: {reproducible}",
            a.steps.len()
        ),
    )
}

// 9–11 ------------------------------------------------------------------

struct SeedRun {
    loss_ratio: f64,
    train_time: Duration,
    ic: BTreeMap<&'static str, f64>,
    bc: BTreeMap<&'static str, f64>,
    multi_ic_phase2: f64,
    multi_ic_phase1: f64,
}

fn to_examples(samples: &[SyntheticSample]) -> Vec<EditExample> {
    samples.iter().map(EditExample::from).collect()
}

fn mean_of(records: &[MetricRecord], idx: &[usize], f: fn(&MetricRecord) -> f64) -> f64 {
    idx.iter().map(|&i| f(&records[i])).sum::<f64>() / idx.len() as f64
}

fn train_variant(
    variant: Variant,
    seed: u64,
    simple: &[EditExample],
    complex: &[EditExample],
) -> (EditorModel, TrainReport, Duration) {
    let mut model = EditorModel::new(EditorConfig { variant, ..EditorConfig::default() }, seed).unwrap();
    let cfg = TrainConfig { steps1: 2000, steps2: 1000, seed, ..TrainConfig::default() };
    let start = Instant::now();
    let report = train_two_phase(&mut model, simple, complex, &cfg, |_, _, _| {}).unwrap();
    (model, report, start.elapsed())
}

fn run_seed(seed: u64, bench: &[SyntheticSample]) -> SeedRun {
    let (simple, complex) = training_corpora(CORPUS_SIZE, seed).unwrap();
    let (simple, complex) = (to_examples(&simple), to_examples(&complex));
    let all: Vec<usize> = (0..bench.len()).collect();
    let multi: Vec<usize> = all.iter().copied().filter(|&i| bench[i].instruction.len() >= 2).collect();
    let mut run = SeedRun {
        loss_ratio: f64::NAN,
        train_time: Duration::ZERO,
        ic: BTreeMap::new(),
        bc: BTreeMap::new(),
        multi_ic_phase2: f64::NAN,
        multi_ic_phase1: f64::NAN,
    };
    for variant in Variant::ALL {
        let (model, report, elapsed) = train_variant(variant, seed, &simple, &complex);
        let records = evaluate_model(&model, bench, 20, seed).unwrap();
        let summary = aggregate_report(&records, variant.name()).unwrap();
        eprintln!(
            "  seed {seed} {:<8} trained in {elapsed:.0?}; ic {:.4} bc {:.4} l1 {:.4}",
            variant.name(),
            summary.metrics.ic,
            summary.metrics.bc,
            summary.metrics.l1
        );
        run.ic.insert(variant.name(), summary.metrics.ic);
        run.bc.insert(variant.name(), summary.metrics.bc);
        if variant == Variant::Full {
            run.loss_ratio = report.running_mean(report.losses.len(), 100) / report.running_mean(100, 100);
            run.train_time = elapsed;
            run.multi_ic_phase2 = mean_of(&records, &multi, |r| r.ic);
            let phase1 = EditorModel::from_checkpoint(&report.phase1).unwrap();
            let p1 = evaluate_model(&phase1, bench, 20, seed).unwrap();
            run.multi_ic_phase1 = mean_of(&p1, &multi, |r| r.ic);
        }
    }
    run
}

fn criteria_training(runs: &[SeedRun]) -> [Outcome; 3] {
    let ratio = median(runs.iter().map(|r| r.loss_ratio).collect());
    let slowest = runs.iter().map(|r| r.train_time).max().unwrap();
    let ratios: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.loss_ratio)).collect();
    let c9 = outcome(
        ratio < LOSS_RATIO && slowest < Duration::from_secs(30 * 60),
        format!("median final/step-100 loss ratio {ratio:.3} (seeds {}); slowest run {slowest:.0?}", ratios.join(", ")),
    );

    let med = |m: &dyn Fn(&SeedRun) -> f64| median(runs.iter().map(m).collect());
    let ic_full = med(&|r| r.ic["full"]);
    let ic_nosaca = med(&|r| r.ic["no-saca"]);
    let bc_full = med(&|r| r.bc["full"]);
    let bc_nobcca = med(&|r| r.bc["no-bcca"]);
    let c10 = outcome(
        ic_full - ic_nosaca > ABLATION_GAP && bc_full - bc_nobcca > ABLATION_GAP,
        format!(
            "median IC full {ic_full:.4} vs no-SACA {ic_nosaca:.4} (gap {:+.4}); median BC full {bc_full:.4} vs no-BCCA {bc_nobcca:.4} (gap {:+.4})",
            ic_full - ic_nosaca,
            bc_full - bc_nobcca
        ),
    );

    let p2 = med(&|r| r.multi_ic_phase2);
    let p1 = med(&|r| r.multi_ic_phase1);
    let c11 = outcome(p2 > p1, format!("multi-edit IC median: phase 2 {p2:.4} vs phase 1 only {p1:.4}"));
    [c9, c10, c11]
}

// 12 --------------------------------------------------------------------

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let a = Image::from_data(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let b = Image::from_data(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (l1, l2) = pixel_metrics(&a, &b).unwrap();
        // scalar loop over rows, columns and channels
        let (mut s1, mut s2, mut n) = (0.0, 0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                let (p, q) = (a.pixel(r, c), b.pixel(r, c));
                for ch in 0..3 {
                    s1 += (p[ch] - q[ch]).abs();
                    s2 += (p[ch] - q[ch]) * (p[ch] - q[ch]);
                    n += 1.0;
                }
            }
        }
        worst = worst.max((l1 - s1 / n).abs()).max((l2 - (s2 / n).sqrt()).abs());
    }
    let norm_ok = normalize(10, 5).unwrap() == (1.0, 1.0) && normalize(1, 1).unwrap() == (0.0, 0.0);
    let sample = |q: u8, c: u8| ComplexEditSample {
        src: "a".into(),
        tgt: "b".into(),
        instruction: ComplexInstruction::new("x", two_subs()).unwrap(),
        provenance: Provenance { record: format!("{q}{c}"), start: 0, len: 2 },
        scores: Some(QualityScores::new(true, q, c).unwrap()),
    };
    let kept = postprocess_filter(vec![sample(4, 4), sample(3, 5), sample(5, 3), sample(5, 5)]).unwrap();
    let kept: Vec<&str> = kept.iter().map(|s| s.provenance.record.as_str()).collect();
    let filter_ok = kept == ["44", "55"];
    outcome(
        worst <= METRIC_TOL && norm_ok && filter_ok,
        format!("pixel metrics max deviation {worst:.2e}; normalize endpoints exact: {norm_ok}; score-3 samples dropped: {filter_ok}"),
    )
}

// 13 --------------------------------------------------------------------

fn criterion_no_network() -> Outcome {
    let allowed = std::env::var(ENV_ALLOW_NETWORK).as_deref() == Ok("1");
    let live = MllmClient::new("https://api.example.com/v1/chat/completions", "gpt-4o", Transport::Live);
    let refused = matches!(live.send(&serde_json::json!({})), Err(MllmError::NetworkDisabled { .. }));
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mllm");
    let replay = MllmClient::replay(Fixtures::load(dir).unwrap());
    let raw = "add a red square at the top left; remove the blue circle; make the green triangle yellow";
    let replayed = decompose_mllm(raw, &Image::filled(4, 4, [0.5; 3]), &replay).map(|c| c.len()).unwrap_or(0);
    let mock = MllmClient::mock(vec![r#"{"ic": 10, "bc": 5, "rationale": "ok"}"#.into()]);
    let img = Image::filled(2, 2, [0.0; 3]);
    let ci = ComplexInstruction::new("x", two_subs()).unwrap();
    let union = instruction_union(&ci, 2, 2).unwrap();
    let judged = judge_ic_bc(&img, &img, &ci, &union, &Judge::Mllm(&mock)).is_ok();
    outcome(
        !allowed && refused && replayed == 3 && judged,
        format!("network opt-in unset: {}; non-loopback live call refused: {refused}; replay decomposition subs: {replayed}; mock judge: {judged}", !allowed),
    )
}

fn main() {
    let names = [
        "expansion combinatorics",
        "box selection",
        "fourier identities",
        "timestep mask schedule",
        "mask support",
        "gradient correctness",
        "fusion degeneracy",
        "euler-ancestral identity",
        "training viability",
        "ablation direction",
        "two-phase benefit",
        "metric exactness",
        "no-network profile",
    ];
    let mut results: Vec<Option<Outcome>> = (0..13).map(|_| None).collect();
    let quick: [(usize, fn() -> Outcome); 10] = [
        (0, criterion_expansion),
        (1, criterion_selection),
        (2, criterion_fourier),
        (3, criterion_schedule),
        (4, criterion_support),
        (5, criterion_gradients),
        (6, criterion_degeneracy),
        (7, criterion_sampler),
        (11, criterion_metrics),
        (12, criterion_no_network),
    ];
    for (i, f) in quick {
        let o = f();
        println!("[{}] {:>2}. {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, names[i], o.detail);
        results[i] = Some(o);
    }

    let start = Instant::now();
    let bench = generate_benchmark(400, BENCH_SEED).unwrap();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| run_seed(s, &bench)).collect();
    eprintln!("  training and evaluation took {:.0?}", start.elapsed());
    for (i, o) in (8..11).zip(criteria_training(&runs)) {
        println!("[{}] {:>2}. {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, names[i], o.detail);
        results[i] = Some(o);
    }

    let failed: Vec<usize> =
        results.iter().enumerate().filter(|(_, o)| !o.as_ref().unwrap().pass).map(|(i, _)| i + 1).collect();
    if failed.is_empty() {
        println!("acceptance: 13/13 criteria passed");
    } else {
        println!("acceptance: {}/13 criteria passed; failed: {failed:?}", 13 - failed.len());
        std::process::exit(1);
    }
}
