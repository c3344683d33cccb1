use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::editor::EditExample;
use crate::image::Image;
use crate::instructions::{ComplexInstruction, SubInstruction};

use super::{ComplexEditSample, DatapipeError, Provenance, QualityScores, SyntheticSample};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One line of a corpus manifest. Image paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub src: String,
    pub tgt: String,
    pub instruction: String,
    pub subs: Vec<SubInstruction>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<QualityScores>,
}

impl ManifestEntry {
    pub fn complex_instruction(&self) -> Result<ComplexInstruction, DatapipeError> {
        Ok(ComplexInstruction::with_limit(self.instruction.clone(), self.subs.clone(), self.subs.len().max(1))?)
    }

    pub fn to_sample(&self) -> Result<ComplexEditSample, DatapipeError> {
        Ok(ComplexEditSample {
            src: self.src.clone(),
            tgt: self.tgt.clone(),
            instruction: self.complex_instruction()?,
            provenance: self.provenance.clone(),
            scores: self.scores,
        })
    }
}

impl From<&ComplexEditSample> for ManifestEntry {
    fn from(s: &ComplexEditSample) -> Self {
        ManifestEntry {
            src: s.src.clone(),
            tgt: s.tgt.clone(),
            instruction: s.instruction.raw_text.clone(),
            subs: s.instruction.subs().to_vec(),
            provenance: s.provenance.clone(),
            scores: s.scores,
        }
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), DatapipeError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| DatapipeError::io(path, e))?);
    for e in entries {
        let line = serde_json::to_string(e).expect("manifest entries serialize");
        writeln!(w, "{line}").map_err(|e| DatapipeError::io(path, e))?;
    }
    w.flush().map_err(|e| DatapipeError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatapipeError> {
    let f = fs::File::open(path).map_err(|e| DatapipeError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| DatapipeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry =
            serde_json::from_str(&line).map_err(|e| DatapipeError::Manifest { line: i + 1, reason: e.to_string() })?;
        out.push(entry);
    }
    Ok(out)
}

fn write_image(dir: &Path, name: &str, img: &Image) -> Result<(), DatapipeError> {
    let path = dir.join(name);
    fs::write(&path, img.to_ppm_bytes()).map_err(|e| DatapipeError::io(&path, e))
}

/// Writes PPM renders of every sample plus a manifest into `dir`; returns
/// the manifest path.
pub fn write_synthetic_corpus(dir: &Path, samples: &[SyntheticSample]) -> Result<PathBuf, DatapipeError> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| DatapipeError::io(&images, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let src = format!("images/{:05}_src.ppm", s.id);
        let tgt = format!("images/{:05}_tgt.ppm", s.id);
        write_image(dir, &src, &s.src.render())?;
        write_image(dir, &tgt, &s.tgt.render())?;
        entries.push(ManifestEntry {
            src,
            tgt,
            instruction: s.instruction.raw_text.clone(),
            subs: s.instruction.subs().to_vec(),
            provenance: Provenance { record: format!("syn{:05}", s.id), start: 0, len: s.instruction.len() },
            scores: None,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    write_manifest(&path, &entries)?;
    Ok(path)
}

/// Loads a manifest and its images as training examples.
pub fn load_examples(manifest: &Path) -> Result<Vec<EditExample>, DatapipeError> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let read = |rel: &str| -> Result<Image, DatapipeError> {
        let p = base.join(rel);
        let bytes = fs::read(&p).map_err(|e| DatapipeError::io(&p, e))?;
        Ok(Image::from_ppm_bytes(&bytes)?)
    };
    read_manifest(manifest)?
        .iter()
        .map(|e| Ok(EditExample { src: read(&e.src)?, tgt: read(&e.tgt)?, instruction: e.complex_instruction()? }))
        .collect()
}

impl From<&SyntheticSample> for EditExample {
    fn from(s: &SyntheticSample) -> Self {
        EditExample { src: s.src.render(), tgt: s.tgt.render(), instruction: s.instruction.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::generate_synthetic_corpus;

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_synthetic_corpus(5, 3, 2).unwrap();
        let path = write_synthetic_corpus(dir.path(), &corpus).unwrap();
        let loaded = load_examples(&path).unwrap();
        assert_eq!(loaded.len(), 5);
        for (s, e) in corpus.iter().zip(&loaded) {
            let direct = EditExample::from(s);
            // PPM stores bytes; renders use byte-exact palette colours
            assert_eq!(e.src, direct.src);
            assert_eq!(e.tgt, direct.tgt);
            assert_eq!(e.instruction, s.instruction);
        }
    }

    #[test]
    fn bad_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, "\n{}\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(DatapipeError::Manifest { line: 2, .. })));
    }
}
