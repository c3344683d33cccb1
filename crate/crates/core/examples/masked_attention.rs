//! The two masked cross-attention pathways on a tiny grid: box encodings,
//! the timestep-decayed mask, and where each pathway is allowed to write.

use mcie::bcca::{bcca_forward, BccaAttention};
use mcie::instructions::{rasterize, union_mask, BBox};
use mcie::numkernel::{ParamStore, Tape, Tensor};
use mcie::saca::{fourier_bands, fourier_encode, saca_forward, timestep_mask, MaskMode, SacaAttention, SacaContext};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(title: &str, values: &[f64], w: usize) {
    println!("{title}");
    for row in values.chunks(w) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:6.3}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn main() -> anyhow::Result<()> {
    let (h, w, d) = (4, 4, 8);
    let boxes = [BBox::new(0.0, 0.0, 0.5, 0.5)?, BBox::new(0.5, 0.5, 1.0, 1.0)?];
    let bands = fourier_bands(2);
    println!("box {:?} -> {:.3?}", boxes[0].coords(), fourier_encode(&boxes[0], &bands).data());

    let mask = rasterize(&boxes[0], h, w);
    for t in [0.0, 500.0, 1000.0] {
        show(&format!("\nmask weight at t = {t}"), &timestep_mask(&mask, t, 1000.0), w);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let mode = MaskMode::Literal;
    let saca = SacaAttention::new(&mut store, "saca", d, mode, &mut rng)?;
    let bcca = BccaAttention::new(&mut store, "bcca", d, mode, &mut rng)?;
    let mut tape = Tape::new();
    let q = tape.constant(Tensor::randn(&[h * w, d], 1.0, &mut rng));
    let contexts = boxes.iter().map(|_| tape.constant(Tensor::randn(&[3, d], 1.0, &mut rng))).collect();
    let masks: Vec<_> = boxes.iter().map(|b| rasterize(b, h, w)).collect();
    let ctx = SacaContext::from_parts(contexts, masks.clone())?;
    let fg = saca_forward(&mut tape, &store, &saca, q, &ctx, 250.0, 1000.0, None)?;
    let summary = tape.constant(Tensor::randn(&[4, d], 1.0, &mut rng));
    let bg = bcca_forward(&mut tape, &store, &bcca, q, summary, &union_mask(&masks)?)?;

    let norms =
        |t: &Tensor| t.data().chunks(d).map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect::<Vec<_>>();
    show("\nforeground output norm per cell (non-zero only inside boxes)", &norms(tape.value(fg)), w);
    show("\nbackground output norm per cell (zero inside boxes)", &norms(tape.value(bg)), w);
    Ok(())
}
