//! Text form of high-level plans.
//!
//! A plan is rendered on one line as `Action Object` pairs joined by `", "`,
//! e.g. `Navigation Fridge, OpenObject Fridge`. The parser also accepts the
//! `Action, Object` pair style, and [`parse_hlp_multiline`] accepts one
//! subgoal per line.

use std::ops::Range;

use thiserror::Error;

use crate::types::{HighLevelAction, HighLevelPlan, ObjectVocabulary, Subgoal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown action {token:?} at {span:?}")]
    UnknownAction { token: String, span: Range<usize> },
    #[error("unknown object {token:?} at {span:?}")]
    UnknownObject { token: String, span: Range<usize> },
    #[error("subgoal {fragment:?} at {span:?} is not an `Action Object` pair")]
    Malformed { fragment: String, span: Range<usize> },
    #[error("empty plan")]
    EmptyPlan,
}

impl ParseError {
    pub fn span(&self) -> Option<Range<usize>> {
        match self {
            ParseError::UnknownAction { span, .. }
            | ParseError::UnknownObject { span, .. }
            | ParseError::Malformed { span, .. } => Some(span.clone()),
            ParseError::EmptyPlan => None,
        }
    }
}

/// Renders a plan as `Action Object, Action Object`. The empty plan renders
/// as the empty string.
pub fn serialize_hlp(plan: &HighLevelPlan) -> String {
    plan.subgoals()
        .iter()
        .map(|s| format!("{} {}", s.action, s.object))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Parses a model continuation against the built-in object vocabulary.
pub fn parse_hlp(text: &str) -> Result<HighLevelPlan, ParseError> {
    parse_hlp_with(text, ObjectVocabulary::builtin())
}

/// Parses the first line of `text`. Anything after the first newline is
/// ignored.
pub fn parse_hlp_with(text: &str, vocab: &ObjectVocabulary) -> Result<HighLevelPlan, ParseError> {
    let line_end = text.find('\n').unwrap_or(text.len());
    let mut subgoals = Vec::new();
    parse_line(text, 0..line_end, vocab, &mut subgoals)?;
    if subgoals.is_empty() {
        return Err(ParseError::EmptyPlan);
    }
    Ok(HighLevelPlan::new(subgoals))
}

/// Parses a plan with one or more subgoals per line; blank lines are skipped.
pub fn parse_hlp_multiline(
    text: &str,
    vocab: &ObjectVocabulary,
) -> Result<HighLevelPlan, ParseError> {
    let mut subgoals = Vec::new();
    let mut start = 0;
    for line in text.split('\n') {
        let end = start + line.len();
        parse_line(text, start..end, vocab, &mut subgoals)?;
        start = end + 1;
    }
    if subgoals.is_empty() {
        return Err(ParseError::EmptyPlan);
    }
    Ok(HighLevelPlan::new(subgoals))
}

/// Byte ranges of the whitespace-separated words inside `range`.
fn words(text: &str, range: Range<usize>) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut word_start = None;
    for (i, ch) in text[range.clone()].char_indices() {
        let at = range.start + i;
        if ch.is_whitespace() {
            if let Some(s) = word_start.take() {
                out.push(s..at);
            }
        } else if word_start.is_none() {
            word_start = Some(at);
        }
    }
    if let Some(s) = word_start {
        out.push(s..range.end);
    }
    out
}

fn parse_line(
    text: &str,
    line: Range<usize>,
    vocab: &ObjectVocabulary,
    out: &mut Vec<Subgoal>,
) -> Result<(), ParseError> {
    // Drop a trailing period and carriage return.
    let mut end = line.end;
    let trimmed = text[line.start..end].trim_end();
    end = line.start + trimmed.len();
    if text[line.start..end].ends_with('.') {
        end -= 1;
    }

    let mut pieces = Vec::new();
    let mut piece_start = line.start;
    for (i, ch) in text[line.start..end].char_indices() {
        if ch == ',' {
            pieces.push(piece_start..line.start + i);
            piece_start = line.start + i + 1;
        }
    }
    pieces.push(piece_start..end);

    let mut pending_action: Option<(HighLevelAction, Range<usize>)> = None;
    for piece in pieces {
        let ws = words(text, piece.clone());
        match ws.len() {
            0 => continue,
            1 => {
                let w = ws[0].clone();
                match pending_action.take() {
                    Some((action, _)) => out.push(Subgoal::new(action, object(text, w, vocab)?)),
                    None => {
                        let action = action(text, w.clone())?;
                        pending_action = Some((action, w));
                    }
                }
            }
            2 => {
                if let Some((_, span)) = pending_action.take() {
                    return Err(malformed(text, span));
                }
                let action = action(text, ws[0].clone())?;
                out.push(Subgoal::new(action, object(text, ws[1].clone(), vocab)?));
            }
            _ => {
                let span = ws[0].start..ws[ws.len() - 1].end;
                // Report the most specific problem first.
                action(text, ws[0].clone())?;
                return Err(malformed(text, span));
            }
        }
    }
    if let Some((_, span)) = pending_action {
        return Err(malformed(text, span));
    }
    Ok(())
}

fn malformed(text: &str, span: Range<usize>) -> ParseError {
    ParseError::Malformed {
        fragment: text[span.clone()].to_string(),
        span,
    }
}

fn action(text: &str, span: Range<usize>) -> Result<HighLevelAction, ParseError> {
    HighLevelAction::parse(&text[span.clone()]).ok_or_else(|| ParseError::UnknownAction {
        token: text[span.clone()].to_string(),
        span,
    })
}

fn object(
    text: &str,
    span: Range<usize>,
    vocab: &ObjectVocabulary,
) -> Result<crate::types::ObjectClass, ParseError> {
    vocab
        .resolve(&text[span.clone()])
        .ok_or_else(|| ParseError::UnknownObject {
            token: text[span.clone()].to_string(),
            span,
        })
}
