//! `{slot}` prompt templates.
//!
//! Slot names are `[A-Za-z0-9_]+` inside single braces. `{{` and `}}` are
//! literal braces. Any other brace is kept verbatim, so code snippets in a
//! template survive untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: missing binding for slot {{{slot}}}")]
    MissingSlot { template: String, slot: String },
    #[error("template {template}: binding {{{slot}}} matches no slot")]
    UnknownSlot { template: String, slot: String },
    #[error("template {template}: slot {{{slot}}} appears {count} times, expected once")]
    RepeatedSlot {
        template: String,
        slot: String,
        count: usize,
    },
    #[error("template {template}: expected slots {expected:?}, found {found:?}")]
    SlotSetMismatch {
        template: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Lit(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text_with_slots: String,
    pub required_slots: Vec<String>,
    pieces: Vec<Piece>,
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn tokenize(text: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") {
            lit.push('{');
            rest = &rest[2..];
            continue;
        }
        if rest.starts_with("}}") {
            lit.push('}');
            rest = &rest[2..];
            continue;
        }
        if c == '{' {
            let inner = &rest[1..];
            let len = inner.find(|ch: char| !is_slot_char(ch)).unwrap_or(inner.len());
            if len > 0 && inner[len..].starts_with('}') {
                if !lit.is_empty() {
                    pieces.push(Piece::Lit(std::mem::take(&mut lit)));
                }
                pieces.push(Piece::Slot(inner[..len].to_string()));
                rest = &inner[len + 1..];
                continue;
            }
        }
        lit.push(c);
        rest = &rest[c.len_utf8()..];
    }
    if !lit.is_empty() {
        pieces.push(Piece::Lit(lit));
    }
    pieces
}

impl PromptTemplate {
    /// Parses `text`; every slot it contains becomes required and must occur
    /// exactly once.
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Result<Self, TemplateError> {
        let name = name.into();
        let text = text.into();
        let pieces = tokenize(&text);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for p in &pieces {
            if let Piece::Slot(s) = p {
                let n = counts.entry(s).or_insert(0);
                if *n == 0 {
                    order.push(s.clone());
                }
                *n += 1;
            }
        }
        if let Some((slot, &count)) = counts.iter().find(|(_, &n)| n > 1) {
            return Err(TemplateError::RepeatedSlot {
                template: name,
                slot: slot.to_string(),
                count,
            });
        }
        Ok(PromptTemplate {
            name,
            text_with_slots: text,
            required_slots: order,
            pieces,
        })
    }

    /// Like [`PromptTemplate::new`] but also requires the slot set to equal
    /// `expected`.
    pub fn with_slots(
        name: impl Into<String>,
        text: impl Into<String>,
        expected: &[&str],
    ) -> Result<Self, TemplateError> {
        let t = Self::new(name, text)?;
        let found: BTreeSet<&str> = t.required_slots.iter().map(String::as_str).collect();
        let want: BTreeSet<&str> = expected.iter().copied().collect();
        if found != want {
            return Err(TemplateError::SlotSetMismatch {
                template: t.name.clone(),
                expected: want.into_iter().map(String::from).collect(),
                found: found.into_iter().map(String::from).collect(),
            });
        }
        Ok(t)
    }

    pub fn load(
        name: &str,
        path: &Path,
        expected: &[&str],
    ) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::with_slots(name, text, expected)
    }
}

/// Substitutes every slot of `template` from `bindings`. Binding values are
/// inserted verbatim.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<&str, String>,
) -> Result<String, TemplateError> {
    if let Some(slot) = template
        .required_slots
        .iter()
        .find(|s| !bindings.contains_key(s.as_str()))
    {
        return Err(TemplateError::MissingSlot {
            template: template.name.clone(),
            slot: slot.clone(),
        });
    }
    if let Some(extra) = bindings
        .keys()
        .find(|k| !template.required_slots.iter().any(|s| s == *k))
    {
        return Err(TemplateError::UnknownSlot {
            template: template.name.clone(),
            slot: extra.to_string(),
        });
    }
    let mut out = String::with_capacity(template.text_with_slots.len());
    for p in &template.pieces {
        match p {
            Piece::Lit(s) => out.push_str(s),
            Piece::Slot(s) => out.push_str(&bindings[s.as_str()]),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_slot() {
        let t = PromptTemplate::new("t", "solve: {problem}").unwrap();
        assert_eq!(t.required_slots, vec!["problem"]);
        assert_eq!(render_prompt(&t, &b(&[("problem", "X")])).unwrap(), "solve: X");
    }

    #[test]
    fn missing_binding() {
        let t = PromptTemplate::new("t", "solve: {problem}").unwrap();
        assert!(matches!(
            render_prompt(&t, &b(&[])),
            Err(TemplateError::MissingSlot { slot, .. }) if slot == "problem"
        ));
    }

    #[test]
    fn extra_binding() {
        let t = PromptTemplate::new("t", "solve: {problem}").unwrap();
        assert!(matches!(
            render_prompt(&t, &b(&[("problem", "X"), ("foo", "y")])),
            Err(TemplateError::UnknownSlot { slot, .. }) if slot == "foo"
        ));
    }

    #[test]
    fn repeated_slot_is_rejected() {
        assert!(matches!(
            PromptTemplate::new("t", "{a} and {a}"),
            Err(TemplateError::RepeatedSlot { count: 2, .. })
        ));
    }

    #[test]
    fn braces_that_are_not_slots_survive() {
        let t = PromptTemplate::new("t", "d = {{}}; f({x}) {not a slot} { } {y-z}").unwrap();
        assert_eq!(t.required_slots, vec!["x"]);
        assert_eq!(
            render_prompt(&t, &b(&[("x", "1")])).unwrap(),
            "d = {}; f(1) {not a slot} { } {y-z}"
        );
    }

    #[test]
    fn values_are_not_re_expanded() {
        let t = PromptTemplate::new("t", "{a}|{b}").unwrap();
        let out = render_prompt(&t, &b(&[("a", "{b}"), ("b", "é")])).unwrap();
        assert_eq!(out, "{b}|é");
    }

    #[test]
    fn slot_set_must_match() {
        assert!(PromptTemplate::with_slots("t", "{a}{b}", &["a", "b"]).is_ok());
        assert!(matches!(
            PromptTemplate::with_slots("t", "{a}", &["a", "b"]),
            Err(TemplateError::SlotSetMismatch { .. })
        ));
    }
}
