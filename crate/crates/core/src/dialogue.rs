//! Multi-round dialogue matching.
//!
//! Every utterance is labelled complete (it names at least one dimension and
//! at least one column) or incomplete. An incomplete latest utterance is
//! resolved against the *recent window*: the history from the most recent
//! complete utterance up to now. The window goes to a [`QueryResolver`],
//! whose prediction is appended to the history as a new complete utterance.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{Lexicon, ValueTerm};
use crate::ir::ComparisonKind;
use crate::terms::{extract_terms, scan, Dimension, Term, TermSet};

pub const DEFAULT_HISTORY_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Incomplete,
    Complete,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Incomplete => 0,
            Label::Complete => 1,
        }
    }
}

/// Completeness classifier.
pub trait Classifier {
    fn classify(&self, text: &str) -> Label;
}

/// Labels an utterance complete iff its lexicon terms include a dimension
/// and a column.
#[derive(Debug, Clone, Copy)]
pub struct LexicalClassifier<'a> {
    pub lexicon: &'a Lexicon,
}

impl Classifier for LexicalClassifier<'_> {
    fn classify(&self, text: &str) -> Label {
        classify(text, self.lexicon)
    }
}

pub fn classify(text: &str, lexicon: &Lexicon) -> Label {
    if extract_terms(text, lexicon).is_complete() {
        Label::Complete
    } else {
        Label::Incomplete
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    /// Per-session logical sequence number.
    pub timestamp: u64,
    pub label: Label,
    pub terms: TermSet,
    /// True for utterances produced by resolution rather than typed by the user.
    #[serde(default)]
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub history: Vec<Utterance>,
    #[serde(default)]
    pub resolved: Option<String>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_HISTORY_CAP
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            history: Vec::new(),
            resolved: None,
            cap: DEFAULT_HISTORY_CAP,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap.max(1);
        self
    }

    fn next_timestamp(&self) -> u64 {
        self.history.last().map_or(1, |u| u.timestamp + 1)
    }

    fn append(&mut self, utterance: Utterance) {
        self.history.push(utterance);
        if self.history.len() > self.cap {
            let excess = self.history.len() - self.cap;
            self.history.drain(..excess);
        }
    }

    /// Labels `text` and appends it as the latest user utterance.
    pub fn push(
        &mut self,
        text: &str,
        lexicon: &Lexicon,
        classifier: &dyn Classifier,
    ) -> &Utterance {
        let utterance = Utterance {
            text: text.into(),
            timestamp: self.next_timestamp(),
            label: classifier.classify(text),
            terms: extract_terms(text, lexicon),
            predicted: false,
        };
        self.append(utterance);
        self.history.last().expect("just pushed")
    }

    /// Index of the most recent complete utterance.
    pub fn latest_complete(&self) -> Option<usize> {
        self.history
            .iter()
            .rposition(|u| u.label == Label::Complete)
    }
}

/// Predicts a complete query from the recent window.
pub trait QueryResolver {
    /// `window[0]` is complete; the rest are the follow-ups after it.
    fn predict(&self, window: &[Utterance]) -> Result<String, ResolveError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Direct,
    Predicted,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedQuery {
    pub text: Option<String>,
    pub source: Source,
    /// History index of the anchor used for prediction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("session history is empty")]
    EmptyHistory,
    #[error("resolver produced an incomplete query: {0}")]
    IncompletePrediction(String),
    #[error("resolver failed: {0}")]
    Backend(String),
}

/// Resolves the latest utterance of `session` into a self-contained query.
///
/// The history is left untouched for [`Source::Direct`] and
/// [`Source::None`]. A successful prediction is appended with the next
/// timestamp. A prediction that does not classify as complete is an error and
/// the session is left unchanged.
pub fn resolve(
    session: &mut SessionState,
    classifier: &dyn Classifier,
    resolver: &dyn QueryResolver,
    lexicon: &Lexicon,
) -> Result<ResolvedQuery, ResolveError> {
    let latest = session.history.last().ok_or(ResolveError::EmptyHistory)?;
    if latest.label == Label::Complete {
        let text = latest.text.clone();
        session.resolved = Some(text.clone());
        return Ok(ResolvedQuery {
            text: Some(text),
            source: Source::Direct,
            anchor: Some(session.history.len() - 1),
        });
    }
    let Some(anchor) = session.latest_complete() else {
        return Ok(ResolvedQuery {
            text: None,
            source: Source::None,
            anchor: None,
        });
    };
    let predicted = resolver.predict(&session.history[anchor..])?;
    if classifier.classify(&predicted) != Label::Complete {
        return Err(ResolveError::IncompletePrediction(predicted));
    }
    let utterance = Utterance {
        terms: extract_terms(&predicted, lexicon),
        text: predicted.clone(),
        timestamp: session.next_timestamp(),
        label: Label::Complete,
        predicted: true,
    };
    session.append(utterance);
    session.resolved = Some(predicted.clone());
    Ok(ResolvedQuery {
        text: Some(predicted),
        source: Source::Predicted,
        anchor: Some(anchor),
    })
}

/// Deterministic resolver that merges slots across the window and renders
/// them through a fixed template.
///
/// Starting from the anchor's slots, each follow-up:
/// - replaces the column list when it names any column;
/// - replaces the relative time when it names one, and adds grouping dimensions;
/// - replaces the values of every column it gives values for;
/// - adds comparison markers.
#[derive(Debug, Clone, Copy)]
pub struct SlotMergeResolver<'a> {
    pub lexicon: &'a Lexicon,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
struct Slots {
    /// (canonical, phrase)
    columns: Vec<(String, String)>,
    /// (dimension, phrase)
    dimensions: Vec<(Dimension, String)>,
    values: Vec<ValueTerm>,
    comparisons: Vec<ComparisonKind>,
}

impl Slots {
    fn of(text: &str, lexicon: &Lexicon) -> Self {
        let mut s = Slots::default();
        for m in scan(text, lexicon) {
            match m.term {
                Term::Column {
                    canonical, phrase, ..
                } => {
                    if !s.columns.iter().any(|(c, _)| *c == canonical) {
                        s.columns.push((canonical, phrase));
                    }
                }
                Term::Dimension { dimension, phrase } => {
                    if matches!(dimension, Dimension::Relative(_)) {
                        s.dimensions
                            .retain(|(d, _)| !matches!(d, Dimension::Relative(_)));
                    }
                    if !s.dimensions.iter().any(|(d, _)| *d == dimension) {
                        s.dimensions.push((dimension, phrase));
                    }
                }
                Term::Value(v) => {
                    if !s.values.contains(&v) {
                        s.values.push(v);
                    }
                }
                Term::Comparison { kind, .. } => {
                    if !s.comparisons.contains(&kind) {
                        s.comparisons.push(kind);
                    }
                }
            }
        }
        s
    }

    fn merge(&mut self, later: Slots) {
        if !later.columns.is_empty() {
            self.columns = later.columns;
        }
        for (dim, phrase) in later.dimensions {
            match dim {
                Dimension::Relative(_) => {
                    self.dimensions
                        .retain(|(d, _)| !matches!(d, Dimension::Relative(_)));
                    self.dimensions.push((dim, phrase));
                }
                Dimension::Column(_) => {
                    if !self.dimensions.iter().any(|(d, _)| *d == dim) {
                        self.dimensions.push((dim, phrase));
                    }
                }
            }
        }
        let mut replaced: Vec<&str> = Vec::new();
        for v in &later.values {
            if !replaced.contains(&v.column.as_str()) {
                self.values.retain(|old| old.column != v.column);
                replaced.push(&v.column);
            }
        }
        for v in later.values {
            if !self.values.contains(&v) {
                self.values.push(v);
            }
        }
        for c in later.comparisons {
            if !self.comparisons.contains(&c) {
                self.comparisons.push(c);
            }
        }
    }

    /// `<columns> <grouping> in <values> for [the] <time> with <comparisons> comparison`
    fn render(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        parts.push(join_and(self.columns.iter().map(|(_, p)| p.as_str())));
        for (d, phrase) in &self.dimensions {
            if matches!(d, Dimension::Column(_)) {
                parts.push(phrase.clone());
            }
        }
        if !self.values.is_empty() {
            parts.push(String::from("in"));
            parts.push(join_and(self.values.iter().map(|v| v.value.as_str())));
        }
        for (d, phrase) in &self.dimensions {
            if matches!(d, Dimension::Relative(_)) {
                let lead = phrase.split(' ').next().unwrap_or("");
                parts.push(String::from(match lead {
                    "past" | "recent" => "for the",
                    _ => "for",
                }));
                parts.push(phrase.clone());
            }
        }
        if !self.comparisons.is_empty() {
            parts.push(String::from("with"));
            parts.push(join_and(self.comparisons.iter().map(|c| c.phrase())));
            parts.push(String::from("comparison"));
        }
        parts.join(" ")
    }
}

fn join_and<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items.collect::<Vec<_>>().join(" and ")
}

impl QueryResolver for SlotMergeResolver<'_> {
    fn predict(&self, window: &[Utterance]) -> Result<String, ResolveError> {
        let (first, rest) = window.split_first().ok_or(ResolveError::EmptyHistory)?;
        let mut slots = Slots::of(&first.text, self.lexicon);
        for u in rest {
            slots.merge(Slots::of(&u.text, self.lexicon));
        }
        Ok(slots.render())
    }
}

impl<T: QueryResolver + ?Sized> QueryResolver for Box<T> {
    fn predict(&self, window: &[Utterance]) -> Result<String, ResolveError> {
        (**self).predict(window)
    }
}
