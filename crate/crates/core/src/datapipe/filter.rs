use serde::{Deserialize, Serialize};

use super::{ComplexEditSample, DatapipeError};

/// Post-hoc quality grades of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScores")]
pub struct QualityScores {
    pub instruction_consistent: bool,
    image_quality: u8,
    complexity: u8,
}

#[derive(Deserialize)]
struct RawScores {
    instruction_consistent: bool,
    image_quality: u8,
    complexity: u8,
}

impl TryFrom<RawScores> for QualityScores {
    type Error = DatapipeError;

    fn try_from(r: RawScores) -> Result<Self, Self::Error> {
        QualityScores::new(r.instruction_consistent, r.image_quality, r.complexity)
    }
}

impl QualityScores {
    /// Both grades must lie in `1..=5`.
    pub fn new(instruction_consistent: bool, image_quality: u8, complexity: u8) -> Result<Self, DatapipeError> {
        for (name, v) in [("image_quality", image_quality), ("complexity", complexity)] {
            if !(1..=5).contains(&v) {
                return Err(DatapipeError::ScoreRange { name, value: v });
            }
        }
        Ok(Self { instruction_consistent, image_quality, complexity })
    }

    pub fn image_quality(&self) -> u8 {
        self.image_quality
    }

    pub fn complexity(&self) -> u8 {
        self.complexity
    }

    /// Consistent, and both grades strictly above 3.
    pub fn passes(&self) -> bool {
        self.instruction_consistent && self.image_quality > 3 && self.complexity > 3
    }
}

/// Keeps the samples whose scores pass; unscored samples are an error.
pub fn postprocess_filter(samples: Vec<ComplexEditSample>) -> Result<Vec<ComplexEditSample>, DatapipeError> {
    let mut kept = Vec::new();
    for s in samples {
        let scores = s.scores.ok_or_else(|| DatapipeError::Unscored(s.provenance.record.clone()))?;
        if scores.passes() {
            kept.push(s);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundaries() {
        assert!(QualityScores::new(true, 4, 4).unwrap().passes());
        assert!(!QualityScores::new(true, 3, 5).unwrap().passes());
        assert!(!QualityScores::new(false, 5, 5).unwrap().passes());
        assert!(QualityScores::new(true, 0, 4).is_err());
        assert!(QualityScores::new(true, 4, 6).is_err());
        let bad: Result<QualityScores, _> =
            serde_json::from_str(r#"{"instruction_consistent":true,"image_quality":9,"complexity":4}"#);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn monotone(c in any::<bool>(), q in 1u8..=5, k in 1u8..=5, dq in 0u8..=4, dk in 0u8..=4) {
            let base = QualityScores::new(c, q, k).unwrap();
            let raised = QualityScores::new(c, (q + dq).min(5), (k + dk).min(5)).unwrap();
            prop_assert!(!base.passes() || raised.passes());
            let consistent = QualityScores::new(true, q, k).unwrap();
            prop_assert!(!base.passes() || consistent.passes());
        }
    }
}
