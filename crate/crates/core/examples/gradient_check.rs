//! The tape autodiff against central finite differences on a small
//! transformer stack.

use mcie::numkernel::nn::TransformerBlock;
use mcie::numkernel::{finite_diff_check, Adam, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let block = TransformerBlock::new(&mut store, "block", 6, &mut rng)?;
    let x = Tensor::randn(&[5, 6], 1.0, &mut rng);
    let target = Tensor::randn(&[5, 6], 1.0, &mut rng);
    let loss = |tape: &mut Tape, s: &ParamStore| {
        let xv = tape.constant(x.clone());
        let y = block.forward(tape, s, xv)?;
        let tv = tape.constant(target.clone());
        tape.mse(y, tv)
    };
    let err = finite_diff_check(&mut store, 1e-5, loss)?;
    println!("max relative gradient error: {err:.2e}");

    let mut opt = Adam::new(&store, 1e-2);
    for step in 0..=200 {
        let mut tape = Tape::new();
        let l = loss(&mut tape, &store)?;
        let value = tape.value(l).data()[0];
        tape.backward(l, &mut store)?;
        opt.step(&mut store);
        if step % 50 == 0 {
            println!("step {step:3}  loss {value:.5}");
        }
    }
    Ok(())
}
