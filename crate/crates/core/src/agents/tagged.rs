//! Extraction of `<tag>...</tag>` sections, fenced code blocks and numbered
//! steps from model responses.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    One,
    Exactly(usize),
    AtLeastOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Text,
    Number,
    CodeBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSpec {
    pub tag_name: String,
    pub cardinality: Cardinality,
    pub value_kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaggedResponseSchema {
    pub expected_tags: Vec<TagSpec>,
}

impl TaggedResponseSchema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tag. Panics on a duplicate name: schemas are static.
    pub fn tag(mut self, name: &str, cardinality: Cardinality, value_kind: ValueKind) -> Self {
        assert!(
            self.expected_tags.iter().all(|t| t.tag_name != name),
            "duplicate tag {name} in schema"
        );
        self.expected_tags.push(TagSpec {
            tag_name: name.to_string(),
            cardinality,
            value_kind,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TagValue {
    Text(String),
    Number(f64),
    Code(String),
}

impl TagValue {
    pub fn as_text(&self) -> &str {
        match self {
            TagValue::Text(s) | TagValue::Code(s) => s,
            TagValue::Number(_) => "",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            TagValue::Number(n) => Some(*n),
            _ => None,
        }
    }
}

pub type TaggedValues = BTreeMap<String, Vec<TagValue>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("missing <{0}> section")]
    MissingTag(String),
    #[error("<{tag}> expected {expected}, found {found}")]
    CardinalityViolation {
        tag: String,
        expected: String,
        found: usize,
    },
    #[error("<{tag}> is not a number: {text:?}")]
    NumberParse { tag: String, text: String },
    #[error("no fenced code block in response")]
    NoCodeBlock,
    #[error("{0}")]
    Malformed(String),
}

/// Raw inner text of every complete `<tag>...</tag>` region, in order.
pub fn tag_regions<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(&open) {
        let after = &rest[start + open.len()..];
        let Some(end) = after.find(&close) else { break };
        out.push(&after[..end]);
        rest = &after[end + close.len()..];
    }
    out
}

fn parse_number(tag: &str, raw: &str) -> Result<f64, ParseError> {
    let t = raw.trim();
    let t = t.strip_suffix('%').unwrap_or(t).trim();
    // "85/100" style answers
    let t = t.split('/').next().unwrap_or(t).trim();
    match t.parse::<f64>() {
        Ok(n) if n.is_finite() => Ok(n),
        _ => Err(ParseError::NumberParse {
            tag: tag.to_string(),
            text: raw.trim().to_string(),
        }),
    }
}

/// Parses `text` against `schema`. Number values are returned as parsed;
/// range clamping is the caller's job.
pub fn parse_tagged(text: &str, schema: &TaggedResponseSchema) -> Result<TaggedValues, ParseError> {
    let mut out = TaggedValues::new();
    for spec in &schema.expected_tags {
        let regions = tag_regions(text, &spec.tag_name);
        let n = regions.len();
        if n == 0 {
            return Err(ParseError::MissingTag(spec.tag_name.clone()));
        }
        let expected = match spec.cardinality {
            Cardinality::One if n != 1 => Some("exactly 1".to_string()),
            Cardinality::Exactly(k) if n != k => Some(format!("exactly {k}")),
            _ => None,
        };
        if let Some(expected) = expected {
            return Err(ParseError::CardinalityViolation {
                tag: spec.tag_name.clone(),
                expected,
                found: n,
            });
        }
        let values = regions
            .into_iter()
            .map(|r| match spec.value_kind {
                ValueKind::Text => Ok(TagValue::Text(r.trim().to_string())),
                ValueKind::Number => parse_number(&spec.tag_name, r).map(TagValue::Number),
                ValueKind::CodeBlock => Ok(TagValue::Code(strip_fences(r))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(spec.tag_name.clone(), values);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    /// Info string after the opening fence, e.g. `python`.
    pub info: String,
    pub body: String,
}

/// All ``` fenced blocks in order. An unterminated final fence runs to the
/// end of the text.
pub fn code_blocks(text: &str) -> Vec<CodeBlock> {
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match current.as_mut() {
            None => {
                if let Some(info) = trimmed.strip_prefix("```") {
                    current = Some((info.trim().to_string(), Vec::new()));
                }
            }
            Some((_, body)) => {
                if trimmed.starts_with("```") && trimmed.trim_end() == "```" {
                    let (info, body) = current.take().unwrap();
                    out.push(CodeBlock {
                        info,
                        body: body.join("\n"),
                    });
                } else {
                    body.push(line);
                }
            }
        }
    }
    if let Some((info, body)) = current {
        if !body.is_empty() {
            out.push(CodeBlock {
                info,
                body: body.join("\n"),
            });
        }
    }
    out
}

/// The last fenced block's body, or the trimmed text when there is none.
pub fn strip_fences(text: &str) -> String {
    match code_blocks(text).pop() {
        Some(b) => b.body.trim_matches('\n').to_string(),
        None => text.trim().to_string(),
    }
}

/// The last fenced block with nonblank content.
pub fn last_code_block(text: &str) -> Result<String, ParseError> {
    code_blocks(text)
        .into_iter()
        .rev()
        .find(|b| !b.body.trim().is_empty())
        .map(|b| b.body.trim_matches('\n').to_string())
        .ok_or(ParseError::NoCodeBlock)
}

/// Strips a leading step marker: `1.`, `2)`, `3:`, `Step 4:`, `step 5 -`.
/// Returns the remaining text when a marker is present and text follows.
pub fn strip_step_marker(line: &str) -> Option<&str> {
    let s = line.trim();
    let mut rest = s;
    let had_word = rest.len() >= 4 && rest[..4].eq_ignore_ascii_case("step");
    if had_word {
        rest = rest[4..].trim_start();
    }
    let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    if digits == 0 {
        return None;
    }
    rest = &rest[digits..];
    let sep = rest.chars().next();
    let body = match sep {
        Some('.' | ')' | ':') => &rest[1..],
        Some(' ') if had_word => rest.trim_start().strip_prefix(['-', ':']).unwrap_or(rest),
        _ => return None,
    };
    // "1.5" is a number, not a step
    if !body.is_empty() && !body.starts_with(char::is_whitespace) && !had_word {
        return None;
    }
    let body = body.trim();
    (!body.is_empty()).then_some(body)
}

const COMMENT_PREFIXES: [&str; 6] = ["//", "#", "--", "/*", ";", "*"];

/// Plan steps recovered from step-by-step code: every comment line carrying
/// a numbered marker (`# Step 1: read n`, `// 2. sort`) becomes a step, in
/// order. Uncommented `Step N:` lines count too.
pub fn steps_from_code(code: &str) -> Vec<String> {
    code.lines()
        .filter_map(|line| {
            let t = line.trim();
            let comment = COMMENT_PREFIXES
                .iter()
                .find_map(|p| t.strip_prefix(p))
                .map(|c| c.trim_start_matches(['#', '/', '*', '-', ';']).trim());
            let candidate = match comment {
                Some(c) => c,
                None if t.len() >= 4 && t[..4].eq_ignore_ascii_case("step") => t,
                None => return None,
            };
            strip_step_marker(candidate)
                .map(|s| s.trim_end_matches("*/").trim().to_string())
                .filter(|s| !s.is_empty())
        })
        .collect()
}

/// Steps of a written plan: one per nonblank line, with numbering or bullet
/// markers removed.
pub fn steps_from_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let l = strip_step_marker(l).unwrap_or(l);
            l.strip_prefix(['-', '*', '•'])
                .map(str::trim_start)
                .unwrap_or(l)
                .to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}
