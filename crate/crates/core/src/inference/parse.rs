use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::Confidence;

/// Filler used when a record gives fewer than three signals.
pub const MISSING_SIGNAL: &str = "(no signal given)";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable inference output: {reason}")]
pub struct ParseError {
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRecord {
    pub estimate: i64,
    pub confidence: Confidence,
    pub key_signals: [String; 3],
    pub signals_adjusted: bool,
}

/// Extracts the first valid record embedded anywhere in `raw`. Candidates
/// are balanced `{...}` spans, tried in order of their opening brace.
pub fn parse_inference_output(raw: &str) -> Result<ParsedRecord, ParseError> {
    let mut first_reason: Option<String> = None;
    for candidate in brace_candidates(raw) {
        let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(candidate) else {
            continue;
        };
        match validate(&normalize_keys(obj)) {
            Ok(rec) => return Ok(rec),
            Err(reason) => {
                first_reason.get_or_insert(reason);
            }
        }
    }
    Err(ParseError {
        reason: first_reason.unwrap_or_else(|| "no structured record found".into()),
        raw: raw.to_string(),
    })
}

/// Balanced-brace spans, skipping braces inside JSON strings.
fn brace_candidates(raw: &str) -> impl Iterator<Item = &str> {
    raw.char_indices()
        .filter(|&(_, c)| c == '{')
        .filter_map(move |(start, _)| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (i, c) in raw[start..].char_indices() {
                if in_string {
                    match c {
                        _ if escaped => escaped = false,
                        '\\' => escaped = true,
                        '"' => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match c {
                    '"' => in_string = true,
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&raw[start..start + i + 1]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}

fn normalize_keys(obj: Map<String, Value>) -> Map<String, Value> {
    obj.into_iter()
        .map(|(k, v)| {
            let key: String = k
                .trim()
                .to_ascii_lowercase()
                .chars()
                .map(|c| if c == ' ' || c == '-' { '_' } else { c })
                .collect();
            (key, v)
        })
        .collect()
}

fn validate(obj: &Map<String, Value>) -> Result<ParsedRecord, String> {
    let estimate = match obj.get("estimate") {
        None => return Err("record has no estimate".into()),
        Some(v) => parse_estimate(v)?,
    };
    if estimate <= 0 {
        return Err(format!("estimate {estimate} is not positive"));
    }
    let confidence = obj
        .get("confidence")
        .and_then(Value::as_str)
        .ok_or("record has no confidence level")?
        .parse::<Confidence>()
        .map_err(|_| format!("unknown confidence {}", obj["confidence"]))?;
    let mut signals: Vec<String> = match obj.get("key_signals") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => s.trim().to_string(),
                other => other.to_string(),
            })
            .collect(),
        Some(Value::String(s)) => vec![s.trim().to_string()],
        _ => Vec::new(),
    };
    let signals_adjusted = signals.len() != 3;
    if signals_adjusted {
        tracing::warn!(count = signals.len(), "inference record does not have three signals");
    }
    signals.resize(3, MISSING_SIGNAL.to_string());
    let [a, b, c]: [String; 3] = signals.try_into().expect("resized to three");
    Ok(ParsedRecord {
        estimate,
        confidence,
        key_signals: [a, b, c],
        signals_adjusted,
    })
}

fn parse_estimate(v: &Value) -> Result<i64, String> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(i)
            } else {
                match n.as_f64() {
                    Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
                    _ => Err(format!("estimate {n} is not a whole number of dollars")),
                }
            }
        }
        Value::String(s) => {
            let cleaned: String = s
                .trim()
                .trim_start_matches('$')
                .chars()
                .filter(|&c| c != ',')
                .collect();
            cleaned
                .parse::<i64>()
                .map_err(|_| format!("estimate {s:?} is not an integer"))
        }
        other => Err(format!("estimate {other} is not an integer")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_inside_prose() {
        let raw = "Here is my answer:\n```json\n{\"estimate\": 150, \"confidence\": \"High\", \"key_signals\": [\"x\", \"y\", \"z\"]}\n```\nThanks.";
        let r = parse_inference_output(raw).unwrap();
        assert_eq!(r.estimate, 150);
        assert_eq!(r.confidence, Confidence::High);
        assert!(!r.signals_adjusted);
    }

    #[test]
    fn spelled_estimate_is_an_error() {
        let raw = r#"{"estimate": "one hundred", "confidence": "low", "key_signals": ["a","b","c"]}"#;
        let err = parse_inference_output(raw).unwrap_err();
        assert_eq!(err.raw, raw);
        assert!(err.reason.contains("one hundred"));
    }

    #[test]
    fn four_signals_truncated() {
        let raw = r#"{"estimate": 90, "confidence": "medium", "key_signals": ["a","b","c","d"]}"#;
        let r = parse_inference_output(raw).unwrap();
        assert_eq!(r.key_signals, ["a", "b", "c"]);
        assert!(r.signals_adjusted);
    }

    #[test]
    fn missing_signals_padded() {
        let raw = r#"{"estimate": "$1,200", "confidence": "LOW", "key_signals": ["a"]}"#;
        let r = parse_inference_output(raw).unwrap();
        assert_eq!(r.estimate, 1200);
        assert_eq!(r.key_signals[2], MISSING_SIGNAL);
        assert!(r.signals_adjusted);
    }

    #[test]
    fn first_valid_candidate_wins() {
        let raw = r#"Draft {"estimate": 0} then {"wrapper": {"estimate": 80.0, "confidence": "low", "key_signals": ["}", "b", "c"]}}"#;
        let r = parse_inference_output(raw).unwrap();
        assert_eq!(r.estimate, 80);
        assert_eq!(r.key_signals[0], "}");
    }

    #[test]
    fn rejects_non_positive_and_fractional() {
        assert!(parse_inference_output(r#"{"estimate": -5, "confidence": "low"}"#).is_err());
        assert!(parse_inference_output(r#"{"estimate": 12.5, "confidence": "low"}"#).is_err());
        assert!(parse_inference_output("").is_err());
        assert!(parse_inference_output("{{{").is_err());
    }

    #[test]
    fn key_spelling_is_normalized() {
        let raw = r#"{"Estimate": 75, "Confidence": "medium", "Key Signals": ["a","b","c"]}"#;
        assert_eq!(parse_inference_output(raw).unwrap().estimate, 75);
    }
}
