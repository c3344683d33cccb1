use crate::encoders::{cosine, Embedder};
use crate::image::Image;
use crate::instructions::{rasterize, BBox};

use super::DatapipeError;

/// Scores within this distance of the best count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Similarity of `src` and `tgt` outside `bbox`: pixels inside the box are
/// zeroed in both images before embedding.
pub fn outside_similarity(src: &Image, tgt: &Image, bbox: &BBox, embedder: &dyn Embedder) -> f64 {
    let (h, w) = src.resolution();
    let mask = rasterize(bbox, h, w);
    let keep = |r, c| !mask.get(r, c);
    cosine(&embedder.embed(&src.masked(keep)), &embedder.embed(&tgt.masked(keep)))
}

/// Picks the candidate box that best explains the edit: the one whose
/// outside region is most similar between source and target. Ties go to the
/// lowest index. Returns the index and every candidate's score.
pub fn select_bbox(
    src: &Image,
    tgt: &Image,
    candidates: &[BBox],
    embedder: &dyn Embedder,
) -> Result<(usize, Vec<f64>), DatapipeError> {
    if candidates.is_empty() {
        return Err(DatapipeError::NoCandidates);
    }
    if src.resolution() != tgt.resolution() {
        return Err(DatapipeError::Resolution { src: src.resolution(), tgt: tgt.resolution() });
    }
    let scores: Vec<f64> = candidates.iter().map(|b| outside_similarity(src, tgt, b, embedder)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let index = scores.iter().position(|&s| s >= best - TIE_TOLERANCE).expect("non-empty");
    Ok((index, scores))
}
