use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{BBox, InstructionError, OpType};

const DEFAULT_LEXICON: &str = include_str!("../../lexicon/decompose.toml");

#[derive(Clone, Debug, Deserialize)]
struct VerbTable {
    add: Vec<String>,
    remove: Vec<String>,
    change: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
struct RawLexicon {
    connectors: Vec<String>,
    fillers: Vec<String>,
    phrase_breaks: Vec<String>,
    max_quantity: usize,
    verbs: VerbTable,
    numbers: BTreeMap<String, usize>,
    regions: BTreeMap<String, [f64; 4]>,
}

/// Word lists driving [`decompose_rules`](super::decompose_rules).
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub connectors: Vec<String>,
    pub fillers: Vec<String>,
    pub phrase_breaks: Vec<String>,
    pub max_quantity: usize,
    verbs: Vec<(String, OpType)>,
    pub numbers: BTreeMap<String, usize>,
    /// Region names as word sequences, longest first.
    regions: Vec<(Vec<String>, BBox)>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_toml(s: &str) -> Result<Self, InstructionError> {
        let raw: RawLexicon = toml::from_str(s).map_err(|e| InstructionError::Lexicon(e.to_string()))?;
        let mut verbs = Vec::new();
        for (words, op) in
            [(&raw.verbs.add, OpType::Add), (&raw.verbs.remove, OpType::Remove), (&raw.verbs.change, OpType::Change)]
        {
            verbs.extend(words.iter().map(|w| (w.to_lowercase(), op)));
        }
        let mut regions = raw
            .regions
            .into_iter()
            .map(|(name, c)| {
                let words = name.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>();
                BBox::try_from(c).map(|b| (words, b))
            })
            .collect::<Result<Vec<_>, _>>()?;
        regions.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Self {
            connectors: raw.connectors,
            fillers: raw.fillers,
            phrase_breaks: raw.phrase_breaks,
            max_quantity: raw.max_quantity,
            verbs,
            numbers: raw.numbers,
            regions,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, InstructionError> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| InstructionError::Lexicon(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&s)
    }

    pub fn verb(&self, word: &str) -> Option<OpType> {
        self.verbs.iter().find(|(w, _)| w == word).map(|(_, op)| *op)
    }

    pub fn is_connector(&self, word: &str) -> bool {
        self.connectors.iter().any(|w| w == word)
    }

    pub fn is_filler(&self, word: &str) -> bool {
        self.fillers.iter().any(|w| w == word)
    }

    pub fn is_phrase_break(&self, word: &str) -> bool {
        self.phrase_breaks.iter().any(|w| w == word)
    }

    /// Numeric value of a number word or a decimal literal.
    pub fn quantity(&self, word: &str) -> Option<usize> {
        if !word.is_empty() && word.bytes().all(|b| b.is_ascii_digit()) {
            return word.parse().ok();
        }
        self.numbers.get(word).copied()
    }

    /// First region name (longest match wins) occurring in `words`.
    pub fn find_region(&self, words: &[String]) -> Option<BBox> {
        self.regions.iter().find(|(name, _)| words.windows(name.len()).any(|w| w == name.as_slice())).map(|(_, b)| *b)
    }
}
