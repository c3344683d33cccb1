/// A three-part prompt: standing guideline, one worked example, and the
/// instance supplied per call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub version: u32,
    pub guideline: &'static str,
    pub example_input: &'static str,
    pub example_output: &'static str,
}

pub const DECOMPOSE: PromptTemplate = PromptTemplate {
    name: "decompose",
    version: 1,
    guideline: "You split an image-editing request into atomic edits. Each edit changes one object. \
Classify every edit as ADD, REMOVE or CHANGE. Rewrite counted requests (\"two cats\") as that many \
single-object edits. Give each edit a bounding box [x0, y0, x1, y1] in normalized image coordinates \
with the origin at the top left, x0 < x1 and y0 < y1, covering where the edit happens. Reply with JSON \
only: {\"subs\": [{\"text\": ..., \"op\": ..., \"bbox\": [...]}]}.",
    example_input: "Request: remove the lamp on the left and add two birds in the sky",
    example_output: "{\"subs\": [\
{\"text\": \"remove the lamp on the left\", \"op\": \"REMOVE\", \"bbox\": [0.05, 0.40, 0.30, 0.95]}, \
{\"text\": \"add a bird in the sky\", \"op\": \"ADD\", \"bbox\": [0.35, 0.05, 0.55, 0.25]}, \
{\"text\": \"add a bird in the sky\", \"op\": \"ADD\", \"bbox\": [0.60, 0.05, 0.80, 0.25]}]}",
};

pub const CONFLICT: PromptTemplate = PromptTemplate {
    name: "conflict",
    version: 1,
    guideline: "You review a sequence of image edits applied one after another. The images show the \
state before the first edit and after the last. A sequence conflicts when one object is modified more \
than once, or a later edit undoes or contradicts an earlier one. Reply with JSON only: \
{\"conflict\": true|false, \"rationale\": \"...\"}.",
    example_input: "Edits: 1. change the car to red 2. remove the car",
    example_output: "{\"conflict\": true, \"rationale\": \"the car is recoloured and then removed\"}",
};

pub const JUDGE: PromptTemplate = PromptTemplate {
    name: "judge",
    version: 1,
    guideline: "You grade an edited image against its source image and an editing request. \
Instruction compliance (ic) is an integer from 1 to 10: 10 when every requested edit is fully \
carried out, 1 when none is. Background consistency (bc) is an integer from 1 to 5: 5 when every \
region the request does not touch is unchanged, 1 when those regions are badly altered. Reply with \
JSON only: {\"ic\": n, \"bc\": n, \"rationale\": \"...\"}.",
    example_input: "Request: add a red square at the top left; remove the blue circle",
    example_output: "{\"ic\": 6, \"bc\": 5, \"rationale\": \"the square was added but the circle is still visible; \
the rest of the image is unchanged\"}",
};
