use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SuggestionKind {
    Pass,
    Unclear,
    Comment,
}

/// One proofreader verdict. `text` is empty for `Pass`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub segment_index: usize,
    pub kind: SuggestionKind,
    pub text: String,
}

impl Suggestion {
    pub fn pass(segment_index: usize) -> Self {
        Self {
            segment_index,
            kind: SuggestionKind::Pass,
            text: String::new(),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == SuggestionKind::Pass
    }

    fn from_body(segment_index: usize, body: &str) -> Self {
        let body = body.trim();
        let body = body
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .map(str::trim)
            .unwrap_or(body);
        let head = body.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
        if body.is_empty() || head.eq_ignore_ascii_case("pass") {
            return Self::pass(segment_index);
        }
        let kind = if body.get(..7).is_some_and(|h| h.eq_ignore_ascii_case("unclear")) {
            SuggestionKind::Unclear
        } else {
            SuggestionKind::Comment
        };
        Self {
            segment_index,
            kind,
            text: body.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProofreadParse {
    /// Exactly one per segment, in index order.
    pub suggestions: Vec<Suggestion>,
    pub warnings: Vec<String>,
}

static SEGMENT_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^\s*[*_]*\s*\[?\s*segment\s+(\d+)\s*\]?\s*[*_]*\s*[:：.\-]?\s*[*_]*\s*(.*)$")
        .expect("valid regex")
});

static JSON_KEY: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)^\s*(?:segment\s*)?(\d+)\s*$").expect("valid regex"));

fn resolve(k: usize, n: usize, base: usize) -> Option<usize> {
    if (base..base + n).contains(&k) {
        Some(k)
    } else if k < n {
        Some(base + k)
    } else {
        None
    }
}

/// Parses free-form proofreader output into one suggestion per segment of
/// `base..base + n`.
///
/// Accepts `Segment k: text` and `[Segment k] text` lines, with `k` either
/// absolute or relative to `base`. Following lines up to the next segment
/// line are continuation lines of the same comment. Segments missing from
/// the output default to `Pass` with a warning. Never fails.
pub fn parse_proofreader_output(text: &str, n: usize, base: usize) -> ProofreadParse {
    let mut warnings = Vec::new();
    let mut bodies: BTreeMap<usize, Vec<String>> = BTreeMap::new();

    if let Some(map) = parse_json_fallback(text) {
        warnings.push("proofreader returned JSON instead of segment lines".to_string());
        for (k, v) in map {
            match resolve(k, n, base) {
                Some(idx) => {
                    bodies.entry(idx).or_insert_with(|| vec![v]);
                }
                None => warnings.push(format!("proofreader segment {k} out of range")),
            }
        }
    } else {
        // None: before the first segment line or inside an ignored one.
        let mut current: Option<usize> = None;
        let mut preamble = false;
        for line in text.lines() {
            if let Some(cap) = SEGMENT_LINE.captures(line) {
                let k: usize = match cap[1].parse() {
                    Ok(k) => k,
                    Err(_) => {
                        current = None;
                        continue;
                    }
                };
                current = match resolve(k, n, base) {
                    Some(idx) if bodies.contains_key(&idx) => {
                        warnings.push(format!("proofreader repeated segment {idx}, kept the first"));
                        None
                    }
                    Some(idx) => {
                        bodies.insert(idx, vec![cap[2].trim().to_string()]);
                        Some(idx)
                    }
                    None => {
                        warnings.push(format!("proofreader segment {k} out of range"));
                        None
                    }
                };
                continue;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match current {
                Some(idx) => bodies.get_mut(&idx).expect("current is tracked").push(line.to_string()),
                None if bodies.is_empty() => preamble = true,
                None => {}
            }
        }
        if preamble {
            warnings.push("proofreader output has text outside segment lines".to_string());
        }
    }

    let suggestions = (base..base + n)
        .map(|idx| match bodies.get(&idx) {
            Some(lines) => {
                let first_is_pass = Suggestion::from_body(idx, &lines[0]).is_pass() && !lines[0].is_empty();
                if first_is_pass {
                    Suggestion::pass(idx)
                } else {
                    let body: Vec<&str> = lines.iter().map(String::as_str).filter(|l| !l.is_empty()).collect();
                    Suggestion::from_body(idx, &body.join("\n"))
                }
            }
            None => {
                warnings.push(format!("proofreader gave no verdict for segment {idx}, assumed PASS"));
                Suggestion::pass(idx)
            }
        })
        .collect();

    ProofreadParse { suggestions, warnings }
}

/// `{"Segment 3": "...", "4": "..."}` despite instructions.
fn parse_json_fallback(text: &str) -> Option<Vec<(usize, String)>> {
    let t = text.trim();
    let t = t
        .strip_prefix("```json")
        .or_else(|| t.strip_prefix("```"))
        .and_then(|r| r.trim_end().strip_suffix("```"))
        .unwrap_or(t)
        .trim();
    if !t.starts_with('{') {
        return None;
    }
    let value: serde_json::Map<String, serde_json::Value> = serde_json::from_str(t).ok()?;
    let out: Vec<(usize, String)> = value
        .into_iter()
        .filter_map(|(k, v)| {
            let k = JSON_KEY.captures(&k)?[1].parse().ok()?;
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            Some((k, v))
        })
        .collect();
    (!out.is_empty()).then_some(out)
}
