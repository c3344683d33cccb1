//! Deterministic, lexicon-driven instruction decomposition.

use crate::datapipe::{Color, Scene, Shape};

use super::{BBox, ComplexInstruction, InstructionError, Lexicon, OpType, SubInstruction, MAX_SUBS};

/// One clause after splitting, before grounding.
#[derive(Clone, Debug, PartialEq)]
struct Clause {
    words: Vec<String>,
    op: OpType,
    copies: usize,
}

/// Decomposes `raw` with the bundled lexicon. See [`decompose_with`].
pub fn decompose_rules(raw: &str, scene_hint: Option<&Scene>) -> Result<ComplexInstruction, InstructionError> {
    decompose_with(&Lexicon::default(), raw, scene_hint, MAX_SUBS)
}

/// Splits `raw` into clauses, classifies each by its leading verb, expands
/// quantities 2..=9 into singular duplicates and assigns a box to every
/// sub-instruction.
///
/// With a scene, REMOVE/CHANGE clauses are grounded on a matching object
/// and any clause naming a region gets that region (shared by its
/// duplicates, split into columns). Everything else falls back to the
/// thirds-grid cell of its index.
pub fn decompose_with(
    lex: &Lexicon,
    raw: &str,
    scene_hint: Option<&Scene>,
    max_subs: usize,
) -> Result<ComplexInstruction, InstructionError> {
    if raw.trim().is_empty() {
        return Err(InstructionError::EmptyInstruction);
    }
    let clauses = split_clauses(lex, raw)?;
    let total: usize = clauses.iter().map(|c| c.copies).sum();
    if total > max_subs {
        return Err(InstructionError::TooManySubs { count: total, max: max_subs });
    }

    let mut subs = Vec::with_capacity(total);
    let mut used_objects: Vec<usize> = Vec::new();
    for clause in &clauses {
        let text = clause.words.join(" ");
        let grounded = scene_hint
            .and_then(|scene| ground_object(scene, clause, &mut used_objects))
            .or_else(|| lex.find_region(&clause.words).map(|region| region.split_columns(clause.copies)));
        for k in 0..clause.copies {
            let index = subs.len();
            let bbox = match &grounded {
                Some(boxes) => boxes[k],
                None => default_box(index),
            };
            subs.push(SubInstruction { text: text.clone(), op: clause.op, bbox, index });
        }
    }
    ComplexInstruction::with_limit(raw.trim(), subs, max_subs)
}

/// Cell `index` of the 3×3 grid, row-major.
pub fn default_box(index: usize) -> BBox {
    let slot = index % 9;
    let (r, c) = ((slot / 3) as f64, (slot % 3) as f64);
    BBox::new(c / 3.0, r / 3.0, (c + 1.0) / 3.0, (r + 1.0) / 3.0).expect("grid cells are valid boxes")
}

fn tokenize(raw: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(raw.len() + 8);
    for ch in raw.to_lowercase().chars() {
        match ch {
            ';' | ',' => {
                spaced.push(' ');
                spaced.push(ch);
                spaced.push(' ');
            }
            '.' | '!' | '?' | '"' | '(' | ')' => spaced.push(' '),
            _ => spaced.push(ch),
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

fn split_clauses(lex: &Lexicon, raw: &str) -> Result<Vec<Clause>, InstructionError> {
    let tokens = tokenize(raw);
    let mut pieces: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if tok == ";" {
            pieces.push(std::mem::take(&mut current));
            i += 1;
            continue;
        }
        if tok == "," || lex.is_connector(tok) {
            // a boundary only when the run of separators ends at a verb
            let mut j = i;
            while j < tokens.len() && (tokens[j] == "," || lex.is_connector(&tokens[j]) || lex.is_filler(&tokens[j])) {
                j += 1;
            }
            let at_verb = j < tokens.len() && lex.verb(&tokens[j]).is_some();
            if at_verb {
                if !current.is_empty() {
                    pieces.push(std::mem::take(&mut current));
                }
                i = j;
                continue;
            }
            if tok != "," {
                current.push(tok.clone());
            }
            i += 1;
            continue;
        }
        current.push(tok.clone());
        i += 1;
    }
    pieces.push(current);

    pieces.into_iter().filter(|p| !p.is_empty()).map(|words| classify(lex, words)).collect()
}

fn classify(lex: &Lexicon, mut words: Vec<String>) -> Result<Clause, InstructionError> {
    let start = words.iter().position(|w| !lex.is_filler(w)).unwrap_or(words.len());
    words.drain(..start);
    let op = words.first().and_then(|w| lex.verb(w)).ok_or_else(|| InstructionError::UnknownVerb(words.join(" ")))?;

    let mut copies = 1;
    if let Some((pos, n)) = words.iter().enumerate().skip(1).find_map(|(i, w)| lex.quantity(w).map(|n| (i, n))) {
        if n > lex.max_quantity {
            return Err(InstructionError::UnsupportedQuantity { quantity: n, clause: words.join(" ") });
        }
        if n >= 2 {
            copies = n;
            singularize_phrase(lex, &mut words, pos);
        }
    }
    Ok(Clause { words, op, copies })
}

/// Replaces the number at `pos` with an article and singularizes the head
/// noun of the phrase that follows it.
fn singularize_phrase(lex: &Lexicon, words: &mut [String], pos: usize) {
    let end = words[pos + 1..].iter().position(|w| lex.is_phrase_break(w)).map_or(words.len(), |p| pos + 1 + p);
    if end > pos + 1 {
        let head = &mut words[end - 1];
        *head = singular(head);
    }
    let next = words.get(pos + 1).map(String::as_str).unwrap_or("");
    let article = if next.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    words[pos] = article.to_string();
}

fn singular(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    for suffix in ["ches", "shes", "sses", "xes", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with('s') && !word.ends_with("ss") && word.len() > 1 {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Boxes of the scene objects a REMOVE or CHANGE clause names, one per
/// copy, or `None` when the scene has no unused match.
fn ground_object(scene: &Scene, clause: &Clause, used: &mut Vec<usize>) -> Option<Vec<BBox>> {
    if matches!(clause.op, OpType::Remove | OpType::Change) {
        let shape_pos = clause.words.iter().position(|w| Shape::from_word(w).is_some());
        if let Some(sp) = shape_pos {
            let shape = Shape::from_word(&clause.words[sp]);
            // the colour describing the object precedes its noun
            let color = clause.words[..sp].iter().rev().find_map(|w| Color::from_word(w));
            let found: Vec<usize> =
                scene.find(shape, color).map(|(i, _)| i).filter(|i| !used.contains(i)).take(clause.copies).collect();
            if found.len() == clause.copies {
                used.extend(&found);
                return Some(found.iter().map(|&i| scene.objects[i].bbox).collect());
            }
        }
    }
    None
}
