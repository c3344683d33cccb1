use serde_json::Value;

use crate::image::Image;
use crate::mllm::{MllmClient, DECOMPOSE};

use super::{BBox, ComplexInstruction, InstructionError, OpType, SubInstruction, MAX_SUBS};

/// Asks a multimodal model to decompose `raw` for `image`.
///
/// Never falls back to the rule-based decomposer: transport failures and
/// malformed replies are returned as errors, the latter with the raw reply.
pub fn decompose_mllm(raw: &str, image: &Image, client: &MllmClient) -> Result<ComplexInstruction, InstructionError> {
    if raw.trim().is_empty() {
        return Err(InstructionError::EmptyInstruction);
    }
    let reply = client.call(&DECOMPOSE, &format!("Request: {}", raw.trim()), &[image])?;
    let value =
        reply.json().map_err(|e| InstructionError::Response { reason: e.to_string(), raw: reply.content.clone() })?;
    parse_decomposition(raw.trim(), &value).map_err(|reason| InstructionError::Response { reason, raw: reply.content })
}

/// Validates a `{"subs": [{"text", "op", "bbox"}]}` reply.
pub fn parse_decomposition(raw: &str, value: &Value) -> Result<ComplexInstruction, String> {
    let subs = value.get("subs").and_then(Value::as_array).ok_or("missing subs array")?;
    let mut out = Vec::with_capacity(subs.len());
    for (i, s) in subs.iter().enumerate() {
        let text = s.get("text").and_then(Value::as_str).ok_or(format!("sub {i}: missing text"))?;
        let op: OpType = s
            .get("op")
            .and_then(Value::as_str)
            .ok_or(format!("sub {i}: missing op"))?
            .parse()
            .map_err(|e| format!("sub {i}: {e}"))?;
        let coords: Vec<f64> = s
            .get("bbox")
            .and_then(Value::as_array)
            .ok_or(format!("sub {i}: missing bbox"))?
            .iter()
            .map(Value::as_f64)
            .collect::<Option<_>>()
            .ok_or(format!("sub {i}: bbox must be numbers"))?;
        let coords: [f64; 4] = coords.try_into().map_err(|_| format!("sub {i}: bbox needs four numbers"))?;
        let bbox = BBox::try_from(coords).map_err(|e| format!("sub {i}: {e}"))?;
        out.push(SubInstruction { text: text.to_string(), op, bbox, index: i });
    }
    ComplexInstruction::with_limit(raw, out, MAX_SUBS).map_err(|e| e.to_string())
}
