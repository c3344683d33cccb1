use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::InstructionError;

/// Edit operation of one sub-instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpType {
    Add,
    Remove,
    Change,
}

impl OpType {
    pub const ALL: [OpType; 3] = [OpType::Add, OpType::Remove, OpType::Change];

    pub fn as_str(self) -> &'static str {
        match self {
            OpType::Add => "ADD",
            OpType::Remove => "REMOVE",
            OpType::Change => "CHANGE",
        }
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpType {
    type Err = InstructionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ADD" => Ok(OpType::Add),
            "REMOVE" => Ok(OpType::Remove),
            "CHANGE" => Ok(OpType::Change),
            _ => Err(InstructionError::UnknownOp(s.to_string())),
        }
    }
}

/// Axis-aligned box in normalized image coordinates, `x` to the right and
/// `y` downwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, InstructionError> {
        let ok = [x0, y0, x1, y1].iter().all(|v| v.is_finite())
            && 0.0 <= x0
            && x0 < x1
            && x1 <= 1.0
            && 0.0 <= y0
            && y0 < y1
            && y1 <= 1.0;
        if ok {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(InstructionError::InvalidBBox([x0, y0, x1, y1]))
        }
    }

    pub const FULL: BBox = BBox { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Half-open containment: `x0 ≤ x < x1`, `y0 ≤ y < y1`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        inter / (self.area() + other.area() - inter)
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Splits the box into `n` equal vertical strips, left to right.
    pub fn split_columns(&self, n: usize) -> Vec<BBox> {
        let w = self.width() / n as f64;
        (0..n)
            .map(|i| {
                let x0 = self.x0 + w * i as f64;
                let x1 = if i + 1 == n { self.x1 } else { self.x0 + w * (i + 1) as f64 };
                BBox { x0, y0: self.y0, x1, y1: self.y1 }
            })
            .collect()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = InstructionError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// One atomic edit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubInstruction {
    pub text: String,
    pub op: OpType,
    pub bbox: BBox,
    /// Position within the parent decomposition; implied by order on the wire.
    #[serde(skip)]
    pub index: usize,
}

/// Default bound on the number of sub-instructions.
pub const MAX_SUBS: usize = 8;

/// A complex instruction and its ordered decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComplexInstruction")]
pub struct ComplexInstruction {
    pub raw_text: String,
    subs: Vec<SubInstruction>,
}

#[derive(Deserialize)]
struct RawComplexInstruction {
    #[serde(default)]
    raw_text: String,
    subs: Vec<SubInstruction>,
}

impl TryFrom<RawComplexInstruction> for ComplexInstruction {
    type Error = InstructionError;

    fn try_from(raw: RawComplexInstruction) -> Result<Self, Self::Error> {
        ComplexInstruction::new(raw.raw_text, raw.subs)
    }
}

impl ComplexInstruction {
    /// Validates and re-indexes `subs` in order.
    pub fn new(raw_text: impl Into<String>, subs: Vec<SubInstruction>) -> Result<Self, InstructionError> {
        Self::with_limit(raw_text, subs, MAX_SUBS)
    }

    pub fn with_limit(
        raw_text: impl Into<String>,
        mut subs: Vec<SubInstruction>,
        max_subs: usize,
    ) -> Result<Self, InstructionError> {
        if subs.is_empty() {
            return Err(InstructionError::NoSubInstructions);
        }
        if subs.len() > max_subs {
            return Err(InstructionError::TooManySubs { count: subs.len(), max: max_subs });
        }
        for (i, s) in subs.iter_mut().enumerate() {
            if s.text.trim().is_empty() {
                return Err(InstructionError::EmptyText(i));
            }
            s.index = i;
        }
        Ok(Self { raw_text: raw_text.into(), subs })
    }

    pub fn subs(&self) -> &[SubInstruction] {
        &self.subs
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn bboxes(&self) -> Vec<BBox> {
        self.subs.iter().map(|s| s.bbox).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decomposition serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, InstructionError> {
        serde_json::from_str(s).map_err(|e| InstructionError::Schema(e.to_string()))
    }
}
