//! Term extraction: finds dimensions, columns, filter values and comparison
//! markers in an utterance.
//!
//! Matching is case-insensitive over word tokens, longest match first. When
//! two candidates cover the same number of words the earlier one wins, in
//! this order: lexicon entries (by position), value dictionaries, built-in
//! relative time phrases, built-in comparison phrases.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{Lexicon, TermKind, ValueTerm};
use crate::ir::ComparisonKind;
use crate::time::RelativeTime;

/// Lowercased word tokens. Anything that is not a letter or digit separates
/// words, so "week-on-week" and "week on week" normalize identically.
pub fn normalize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Column(String),
    Relative(RelativeTime),
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Column(c) => f.write_str(c),
            Dimension::Relative(t) => write!(f, "relative:{t}"),
        }
    }
}

impl Serialize for Dimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        match s.strip_prefix("relative:") {
            Some(tok) => tok
                .parse()
                .map(Dimension::Relative)
                .map_err(serde::de::Error::custom),
            None => Ok(Dimension::Column(s)),
        }
    }
}

/// Slots found in one utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSet {
    pub dimensions: Vec<Dimension>,
    pub columns: Vec<String>,
    pub values: Vec<ValueTerm>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonKind>,
}

impl TermSet {
    /// Holds at least one dimension and at least one column.
    pub fn is_complete(&self) -> bool {
        !self.dimensions.is_empty() && !self.columns.is_empty()
    }

    /// The last relative time phrase mentioned, if any.
    pub fn relative_time(&self) -> Option<RelativeTime> {
        self.dimensions.iter().rev().find_map(|d| match d {
            Dimension::Relative(t) => Some(*t),
            Dimension::Column(_) => None,
        })
    }

    /// Canonical columns a view must expose to answer this query.
    pub fn required_columns(&self, time_column: &str) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.columns.iter().cloned().collect();
        for d in &self.dimensions {
            match d {
                Dimension::Column(c) => {
                    out.insert(c.clone());
                }
                Dimension::Relative(_) => {
                    out.insert(time_column.to_owned());
                }
            }
        }
        out.extend(self.values.iter().map(|v| v.column.clone()));
        out
    }

    fn from_matches(matches: &[TermMatch]) -> Self {
        let mut set = TermSet::default();
        for m in matches {
            match &m.term {
                Term::Dimension { dimension, .. } => push_unique(&mut set.dimensions, dimension),
                Term::Column {
                    canonical, implies, ..
                } => {
                    push_unique(&mut set.columns, canonical);
                    for v in implies {
                        push_unique(&mut set.values, v);
                    }
                }
                Term::Value(v) => push_unique(&mut set.values, v),
                Term::Comparison { kind, .. } => push_unique(&mut set.comparisons, kind),
            }
        }
        set
    }
}

fn push_unique<T: PartialEq + Clone>(list: &mut Vec<T>, item: &T) {
    if !list.contains(item) {
        list.push(item.clone());
    }
}

/// One recognised span. `phrase` is the lexicon (or built-in) phrase that
/// matched, suitable for re-rendering into text that extracts identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Dimension {
        dimension: Dimension,
        phrase: String,
    },
    Column {
        canonical: String,
        phrase: String,
        implies: Vec<ValueTerm>,
    },
    Value(ValueTerm),
    Comparison {
        kind: ComparisonKind,
        phrase: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermMatch {
    pub term: Term,
    /// Index of the first word token.
    pub start: usize,
    /// Number of word tokens covered.
    pub len: usize,
}

/// Extracts the [`TermSet`] of `utterance`. Pure and deterministic.
pub fn extract_terms(utterance: &str, lexicon: &Lexicon) -> TermSet {
    TermSet::from_matches(&scan(utterance, lexicon))
}

/// Left-to-right longest-match scan, returning every recognised span.
pub fn scan(utterance: &str, lexicon: &Lexicon) -> Vec<TermMatch> {
    let words = normalize(utterance);
    if words.is_empty() {
        return Vec::new();
    }
    let entry_words: Vec<Vec<String>> = lexicon
        .entries
        .iter()
        .map(|e| normalize(&e.phrase))
        .collect();
    let value_words: Vec<(usize, usize, Vec<String>)> = lexicon
        .values
        .iter()
        .enumerate()
        .flat_map(|(d, dict)| {
            dict.values
                .iter()
                .enumerate()
                .map(move |(v, value)| (d, v, normalize(value)))
        })
        .collect();

    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let rest = &words[i..];
        let mut best: Option<(usize, Term)> = None;
        let mut offer = |len: usize, make: &dyn Fn() -> Term| {
            if len > 0 && best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, make()));
            }
        };

        for (entry, ws) in lexicon.entries.iter().zip(&entry_words) {
            if !ws.is_empty() && rest.starts_with(ws) {
                offer(ws.len(), &|| entry_term(entry));
            }
        }
        for (d, v, ws) in &value_words {
            if !ws.is_empty() && rest.starts_with(ws) {
                let dict = &lexicon.values[*d];
                offer(ws.len(), &|| {
                    Term::Value(ValueTerm::new(dict.column.clone(), dict.values[*v].clone()))
                });
            }
        }
        if let Some((len, t)) = match_relative_time(rest) {
            offer(len, &|| Term::Dimension {
                dimension: Dimension::Relative(t),
                phrase: rest[..len].join(" "),
            });
        }
        if let Some((len, kind)) = match_comparison(rest) {
            offer(len, &|| Term::Comparison {
                kind,
                phrase: kind.phrase().into(),
            });
        }

        match best {
            Some((len, term)) => {
                out.push(TermMatch {
                    term,
                    start: i,
                    len,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

fn entry_term(entry: &crate::catalog::LexiconEntry) -> Term {
    match entry.kind {
        TermKind::Column => Term::Column {
            canonical: entry.canonical.clone(),
            phrase: entry.phrase.clone(),
            implies: entry.implies.clone(),
        },
        TermKind::Dimension => {
            let dimension = match entry.canonical.parse::<RelativeTime>() {
                Ok(t) => Dimension::Relative(t),
                Err(_) => Dimension::Column(entry.canonical.clone()),
            };
            Term::Dimension {
                dimension,
                phrase: entry.phrase.clone(),
            }
        }
    }
}

fn number_word(w: &str) -> Option<u32> {
    const WORDS: &[&str] = &[
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
        "twenty",
    ];
    if let Some(pos) = WORDS.iter().position(|x| *x == w) {
        return Some(pos as u32);
    }
    match w {
        "thirty" => Some(30),
        "sixty" => Some(60),
        "ninety" => Some(90),
        _ => w.parse().ok().filter(|n| *n <= 3660),
    }
}

fn match_relative_time(words: &[String]) -> Option<(usize, RelativeTime)> {
    let w = |i: usize| words.get(i).map(String::as_str);
    if w(0) == Some("yesterday") {
        return Some((1, RelativeTime::Yesterday));
    }
    match (w(0)?, w(1)) {
        ("past" | "last" | "recent" | "previous", Some(n)) if number_word(n).is_some() => {
            let n = number_word(n)?;
            if n == 0 {
                return None;
            }
            let t = match w(2)? {
                "day" | "days" => RelativeTime::LastDays(n),
                "week" | "weeks" => RelativeTime::LastWeeks(n),
                "month" | "months" => RelativeTime::LastMonths(n),
                _ => return None,
            };
            Some((3, t))
        }
        ("past", Some("week")) => Some((2, RelativeTime::LastWeeks(1))),
        ("past", Some("month")) => Some((2, RelativeTime::LastMonths(1))),
        ("this", Some("week")) => Some((2, RelativeTime::ThisWeek)),
        ("this", Some("month")) => Some((2, RelativeTime::ThisMonth)),
        ("this", Some("year")) => Some((2, RelativeTime::ThisYear)),
        ("last" | "previous", Some("week")) => Some((2, RelativeTime::PreviousWeek)),
        ("last" | "previous", Some("month")) => Some((2, RelativeTime::PreviousMonth)),
        ("last" | "previous", Some("year")) => Some((2, RelativeTime::PreviousYear)),
        _ => None,
    }
}

fn match_comparison(words: &[String]) -> Option<(usize, ComparisonKind)> {
    let unit = |w: &str| match w {
        "day" => Some(ComparisonKind::DayOverDay),
        "week" => Some(ComparisonKind::WeekOverWeek),
        "month" => Some(ComparisonKind::MonthOverMonth),
        "year" => Some(ComparisonKind::YearOverYear),
        _ => None,
    };
    match words {
        [a, link, b, ..] if a == b && (link == "on" || link == "over") => unit(a).map(|k| (3, k)),
        [w, ..] if w == "yoy" => Some((1, ComparisonKind::YearOverYear)),
        [w, ..] if w == "wow" => Some((1, ComparisonKind::WeekOverWeek)),
        [w, ..] if w == "dod" => Some((1, ComparisonKind::DayOverDay)),
        [w, ..] if w == "mom" => Some((1, ComparisonKind::MonthOverMonth)),
        _ => None,
    }
}
