//! Deterministic stand-ins for pretrained text and image encoders, and the
//! image embedders used for similarity scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{Image, CHANNELS};
use crate::instructions::SubInstruction;
use crate::numkernel::Tensor;

/// Token cap per encoded text.
pub const MAX_TOKENS: usize = 16;
const TEXT_TABLE_ROWS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("image {height}x{width} is not divisible into {patch}x{patch} patches")]
    Divisibility { height: usize, width: usize, patch: usize },
}

pub trait TextEncoder {
    fn width(&self) -> usize;
    /// `[n_tokens, width]` with `1 ≤ n_tokens ≤ 16`.
    fn encode(&self, text: &str) -> Tensor;
}

pub trait VisualEncoder {
    fn width(&self) -> usize;
    /// `[n_patches, width]`, patches in row-major order.
    fn encode(&self, image: &Image) -> Result<Tensor, EncoderError>;
}

/// Maps an image to a unit-norm vector.
pub trait Embedder {
    fn name(&self) -> &str;
    fn embed(&self, image: &Image) -> Vec<f64>;
}

/// FNV-1a, for hashing tokens the same way on every platform.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Standard sinusoidal embedding of a scalar position.
pub fn sinusoidal(pos: f64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let i = (j / 2) as f64;
            let angle = pos / 10000f64.powf(2.0 * i / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Hashed token lookup into a fixed Gaussian table plus sinusoidal
/// position.
#[derive(Clone, Debug)]
pub struct ToyTextEncoder {
    d: usize,
    table: Tensor,
}

impl ToyTextEncoder {
    pub fn new(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { d, table: Tensor::randn(&[TEXT_TABLE_ROWS, d], 1.0, &mut rng) }
    }

    fn token_row(&self, token: &str) -> &[f64] {
        self.table.row((fnv1a(token.as_bytes()) % TEXT_TABLE_ROWS as u64) as usize)
    }
}

impl TextEncoder for ToyTextEncoder {
    fn width(&self) -> usize {
        self.d
    }

    fn encode(&self, text: &str) -> Tensor {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(String::new());
        }
        tokens.truncate(MAX_TOKENS);
        let mut data = Vec::with_capacity(tokens.len() * self.d);
        for (pos, tok) in tokens.iter().enumerate() {
            let pe = sinusoidal(pos as f64, self.d);
            data.extend(self.token_row(tok).iter().zip(&pe).map(|(e, p)| e + p));
        }
        Tensor::new(&[tokens.len(), self.d], data).expect("row count matches data")
    }
}

/// Sub-instruction encodings stacked row-wise, with the `(start, len)` row
/// span of each sub.
#[derive(Clone, Debug, PartialEq)]
pub struct InstructionEncoding {
    pub tokens: Tensor,
    pub spans: Vec<(usize, usize)>,
}

impl InstructionEncoding {
    pub fn block(&self, i: usize) -> Tensor {
        let (start, len) = self.spans[i];
        let d = self.tokens.cols();
        Tensor::new(&[len, d], self.tokens.data()[start * d..(start + len) * d].to_vec()).expect("span within tokens")
    }
}

/// Encodes each sub-instruction on its own and concatenates the results.
pub fn encode_instruction_set(encoder: &dyn TextEncoder, subs: &[SubInstruction]) -> InstructionEncoding {
    let d = encoder.width();
    let mut data = Vec::new();
    let mut spans = Vec::with_capacity(subs.len());
    let mut rows = 0;
    for sub in subs {
        let t = encoder.encode(&sub.text);
        spans.push((rows, t.rows()));
        rows += t.rows();
        data.extend_from_slice(t.data());
    }
    InstructionEncoding { tokens: Tensor::new(&[rows, d], data).expect("rows match data"), spans }
}

/// Fixed random linear projection of each `p×p` patch of raw pixels.
#[derive(Clone, Debug)]
pub struct ToyVisualEncoder {
    patch: usize,
    weight: Tensor,
    bias: Vec<f64>,
}

impl ToyVisualEncoder {
    pub fn new(d: usize, patch: usize, seed: u64) -> Self {
        assert!(patch >= 1, "patch size must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = patch * patch * CHANNELS;
        let weight = Tensor::randn(&[fan_in, d], 1.0 / (fan_in as f64).sqrt(), &mut rng);
        let bias = Tensor::randn(&[d], 0.1, &mut rng).into_data();
        Self { patch, weight, bias }
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl VisualEncoder for ToyVisualEncoder {
    fn width(&self) -> usize {
        self.bias.len()
    }

    fn encode(&self, image: &Image) -> Result<Tensor, EncoderError> {
        let (h, w) = image.resolution();
        let p = self.patch;
        if h % p != 0 || w % p != 0 {
            return Err(EncoderError::Divisibility { height: h, width: w, patch: p });
        }
        let fan_in = p * p * CHANNELS;
        let mut patches = Vec::with_capacity((h / p) * (w / p) * fan_in);
        for pr in 0..h / p {
            for pc in 0..w / p {
                for r in pr * p..(pr + 1) * p {
                    for c in pc * p..(pc + 1) * p {
                        patches.extend_from_slice(&image.pixel(r, c));
                    }
                }
            }
        }
        let n = (h / p) * (w / p);
        let x = Tensor::new(&[n, fan_in], patches).expect("patch data length");
        let mut y = x.matmul(&self.weight).expect("fan-in matches weight");
        let d = self.bias.len();
        for row in y.data_mut().chunks_mut(d) {
            row.iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        Ok(y)
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Cosine similarity; zero if either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Appearance embedder: centred pixel colours plus a constant component.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelEmbedder;

impl Embedder for PixelEmbedder {
    fn name(&self) -> &str {
        "pixel"
    }

    fn embed(&self, image: &Image) -> Vec<f64> {
        let mut v: Vec<f64> = image.data().iter().map(|x| x - 0.5).collect();
        v.push(1.0);
        normalized(v)
    }
}

/// Structure embedder: horizontal and vertical finite differences of each
/// channel plus a constant component, so flat colour shifts matter less
/// than edges.
#[derive(Clone, Copy, Debug, Default)]
pub struct EdgeEmbedder;

impl Embedder for EdgeEmbedder {
    fn name(&self) -> &str {
        "edge"
    }

    fn embed(&self, image: &Image) -> Vec<f64> {
        let (h, w) = image.resolution();
        let mut v = Vec::with_capacity(2 * h * w * CHANNELS + 1);
        for r in 0..h {
            for c in 0..w {
                let p = image.pixel(r, c);
                let right = if c + 1 < w { image.pixel(r, c + 1) } else { p };
                let down = if r + 1 < h { image.pixel(r + 1, c) } else { p };
                for ch in 0..CHANNELS {
                    v.push(right[ch] - p[ch]);
                    v.push(down[ch] - p[ch]);
                }
            }
        }
        v.push(1.0);
        normalized(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::{BBox, OpType};

    fn sub(text: &str) -> SubInstruction {
        SubInstruction { text: text.into(), op: OpType::Add, bbox: BBox::FULL, index: 0 }
    }

    #[test]
    fn text_is_deterministic_and_local() {
        let enc = ToyTextEncoder::new(8, 1);
        assert_eq!(enc.encode("red square"), ToyTextEncoder::new(8, 1).encode("red square"));
        let a = enc.encode("red square");
        let b = enc.encode("blue square");
        assert_ne!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
    }

    #[test]
    fn text_is_truncated() {
        let enc = ToyTextEncoder::new(4, 1);
        let long = (0..20).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(enc.encode(&long).rows(), MAX_TOKENS);
        assert_eq!(enc.encode("...").rows(), 1);
    }

    #[test]
    fn instruction_set_blocks_are_independent() {
        let enc = ToyTextEncoder::new(6, 3);
        let subs = [sub("add a red circle"), sub("remove the square"), sub("make the triangle blue")];
        let set = encode_instruction_set(&enc, &subs);
        let total: usize = subs.iter().map(|s| enc.encode(&s.text).rows()).sum();
        assert_eq!(set.tokens.rows(), total);
        for (i, s) in subs.iter().enumerate() {
            assert_eq!(set.block(i), enc.encode(&s.text));
        }
        let permuted = [subs[2].clone(), subs[0].clone(), subs[1].clone()];
        let p = encode_instruction_set(&enc, &permuted);
        assert_eq!(p.block(0), set.block(2));
        assert_eq!(p.block(1), set.block(0));
        assert_eq!(p.spans[0].1, set.spans[2].1);
    }

    #[test]
    fn visual_encoder_bias_and_locality() {
        let enc = ToyVisualEncoder::new(5, 1, 9);
        let zero = Image::filled(4, 4, [0.0; 3]);
        let z = enc.encode(&zero).unwrap();
        for r in 0..16 {
            assert_eq!(z.row(r), enc.bias());
        }
        let mut one = zero.clone();
        one.set_pixel(2, 1, [0.3, 0.6, 0.9]);
        let o = enc.encode(&one).unwrap();
        for r in 0..16 {
            assert_eq!(o.row(r) == z.row(r), r != 2 * 4 + 1, "row {r}");
        }
        assert_eq!(enc.encode(&one).unwrap(), o);
        let enc2 = ToyVisualEncoder::new(5, 3, 9);
        assert!(matches!(enc2.encode(&zero), Err(EncoderError::Divisibility { .. })));
    }

    #[test]
    fn embedders_are_unit_norm() {
        let mut img = Image::filled(8, 8, [0.2, 0.4, 0.6]);
        img.set_pixel(3, 3, [1.0, 0.0, 0.0]);
        for e in [&PixelEmbedder as &dyn Embedder, &EdgeEmbedder] {
            let v = e.embed(&img);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
            assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        }
    }
}
