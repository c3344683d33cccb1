use super::{BBox, InstructionError};

/// Binary mask on an `H×W` grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, cells: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, cells: vec![true; height * width] }
    }

    pub fn from_cells(height: usize, width: usize, cells: Vec<bool>) -> Result<Self, InstructionError> {
        if cells.len() != height * width {
            return Err(InstructionError::ResolutionMismatch { expected: (height, width), found: (cells.len(), 1) });
        }
        Ok(Self { height, width, cells })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.cells[r * self.width + c] = v;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn area(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    /// Mask values as 0.0 / 1.0, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }

    pub fn complement(&self) -> Mask {
        Mask { height: self.height, width: self.width, cells: self.cells.iter().map(|v| !v).collect() }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.cells.iter().zip(&other.cells).any(|(a, b)| *a && *b)
    }
}

/// Rasterizes `bbox` onto an `H×W` grid.
///
/// Cell `(r, c)` is set iff its center `((c+0.5)/W, (r+0.5)/H)` lies in the
/// half-open box. A box that contains no cell center marks the single cell
/// nearest to the box center, so the result is never empty.
pub fn rasterize(bbox: &BBox, height: usize, width: usize) -> Mask {
    assert!(height >= 1 && width >= 1, "resolution must be at least 1x1");
    let mut mask = Mask::empty(height, width);
    for r in 0..height {
        let cy = (r as f64 + 0.5) / height as f64;
        for c in 0..width {
            let cx = (c as f64 + 0.5) / width as f64;
            if bbox.contains(cx, cy) {
                mask.set(r, c, true);
            }
        }
    }
    if mask.area() == 0 {
        let (x, y) = bbox.center();
        let c = ((x * width as f64).floor() as usize).min(width - 1);
        let r = ((y * height as f64).floor() as usize).min(height - 1);
        mask.set(r, c, true);
    }
    mask
}

/// Cellwise OR of equally sized masks.
pub fn union_mask(masks: &[Mask]) -> Result<Mask, InstructionError> {
    let first = masks.first().ok_or(InstructionError::NoSubInstructions)?;
    let (h, w) = first.resolution();
    let mut out = Mask::empty(h, w);
    for m in masks {
        if m.resolution() != (h, w) {
            return Err(InstructionError::ResolutionMismatch { expected: (h, w), found: m.resolution() });
        }
        for (o, &v) in out.cells.iter_mut().zip(&m.cells) {
            *o |= v;
        }
    }
    Ok(out)
}
