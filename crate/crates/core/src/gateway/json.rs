//! Pulling the answer out of a model reply.
//!
//! Replies often carry reasoning before (or between) JSON blocks; the
//! answer is the last complete top-level JSON value.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JsonExtractError {
    #[error("no JSON value found in model output")]
    NoJsonFound,
    #[error("model output contains malformed JSON: {0}")]
    ParseError(String),
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // skip an info string such as `json`
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                out.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => break,
        }
    }
    out
}

/// Top-level JSON values found scanning left to right; a value nested in an
/// earlier value is never reported on its own.
fn scan_values(text: &str) -> (Vec<Value>, Option<String>) {
    let mut values = Vec::new();
    let mut first_error = None;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' || bytes[i] == b'[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(v)) => {
                    values.push(v);
                    i += stream.byte_offset();
                    continue;
                }
                Some(Err(e)) => {
                    if first_error.is_none() && bytes[i] == b'{' {
                        first_error = Some(e.to_string());
                    }
                }
                None => {}
            }
        }
        i += 1;
    }
    (values, first_error)
}

pub fn extract_json(raw: &str) -> Result<Value, JsonExtractError> {
    for block in fenced_blocks(raw).into_iter().rev() {
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            return Ok(v);
        }
        if let Some(v) = scan_values(block).0.pop() {
            return Ok(v);
        }
    }
    let (mut values, error) = scan_values(raw);
    if let Some(v) = values.pop() {
        return Ok(v);
    }
    if !raw.contains('{') && !raw.contains('[') {
        return Err(JsonExtractError::NoJsonFound);
    }
    Err(JsonExtractError::ParseError(
        error.unwrap_or_else(|| "unbalanced or invalid JSON".into()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn fenced_block() {
        let raw = "thoughts...\n```json\n{\"user_operations\": []}\n```";
        assert_eq!(extract_json(raw).unwrap(), json!({"user_operations": []}));
    }

    #[test]
    fn last_of_two_objects() {
        let raw = "TASK 1 output: {\"a\": 1}\nTASK 2 output: {\"a\": 2, \"b\": [1, {\"c\": 3}]} done";
        assert_eq!(extract_json(raw).unwrap(), json!({"a": 2, "b": [1, {"c": 3}]}));
    }

    #[test]
    fn bare_array() {
        let raw = "Here you go:\n[{\"app\": \"x\"}]";
        assert_eq!(extract_json(raw).unwrap(), json!([{"app": "x"}]));
    }

    #[test]
    fn last_fence_wins_over_earlier_fences() {
        let raw = "```json\n[1]\n```\nthen\n```\n{\"final\": true}\n```\ntrailing";
        assert_eq!(extract_json(raw).unwrap(), json!({"final": true}));
    }

    #[test]
    fn prose_without_braces() {
        assert_eq!(extract_json("I could not find anything."), Err(JsonExtractError::NoJsonFound));
    }

    #[test]
    fn broken_object_is_a_parse_error() {
        assert!(matches!(extract_json("{\"a\": 1,, }"), Err(JsonExtractError::ParseError(_))));
    }
}
