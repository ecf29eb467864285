//! Single view selection and the view advisor.
//!
//! The selected view must expose every required column, physical or virtual.
//! Among covering views the one with the fewest physical columns wins, since
//! narrower views are cheaper to scan; ties go to the smallest `view_id`.
//! Every selection is recorded: a hit for the chosen view, or a failure
//! record that lets administrators decide which view to build next.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ViewDef};

/// Cap on the join candidate pairs kept per failure.
pub const MAX_JOIN_CANDIDATES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRequest {
    required_columns: BTreeSet<String>,
    query_text: String,
}

impl SelectionRequest {
    pub fn new(
        required_columns: BTreeSet<String>,
        query_text: impl Into<String>,
    ) -> Result<Self, SelectionError> {
        if required_columns.is_empty() {
            return Err(SelectionError::EmptyRequest);
        }
        Ok(Self {
            required_columns,
            query_text: query_text.into(),
        })
    }

    pub fn required_columns(&self) -> &BTreeSet<String> {
        &self.required_columns
    }

    pub fn query_text(&self) -> &str {
        &self.query_text
    }
}

pub trait ViewSelector {
    fn select<'c>(&self, catalog: &'c Catalog, request: &SelectionRequest) -> Option<&'c ViewDef>;
}

/// Covering view with the fewest physical columns, ties by `view_id`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MinColumnSelector;

impl ViewSelector for MinColumnSelector {
    fn select<'c>(&self, catalog: &'c Catalog, request: &SelectionRequest) -> Option<&'c ViewDef> {
        catalog
            .views()
            .iter()
            .filter(|v| covers_all(v, &request.required_columns))
            .min_by(|a, b| {
                a.physical_count()
                    .cmp(&b.physical_count())
                    .then_with(|| a.view_id.cmp(&b.view_id))
            })
    }
}

pub fn covers_all(view: &ViewDef, columns: &BTreeSet<String>) -> bool {
    columns.iter().all(|c| view.covers(c))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub query_text: String,
    pub required_columns: Vec<String>,
    pub timestamp: u64,
    /// Pairs of views whose union covers the request.
    #[serde(default)]
    pub join_candidates: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounts {
    pub useful: u64,
    pub not_useful: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AdvisorEvent {
    Hit { view_id: String },
    Failure(FailureRecord),
    Feedback { view_id: String, useful: bool },
    Reset,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisorState {
    pub hits: BTreeMap<String, u64>,
    pub failures: Vec<FailureRecord>,
    /// User ratings. Kept apart from `hits` so hit counts stay equal to the
    /// number of successful selections.
    #[serde(default)]
    pub feedback: BTreeMap<String, FeedbackCounts>,
}

impl AdvisorState {
    pub fn apply(&mut self, event: &AdvisorEvent) {
        match event {
            AdvisorEvent::Hit { view_id } => *self.hits.entry(view_id.clone()).or_default() += 1,
            AdvisorEvent::Failure(rec) => self.failures.push(rec.clone()),
            AdvisorEvent::Feedback { view_id, useful } => {
                let counts = self.feedback.entry(view_id.clone()).or_default();
                if *useful {
                    counts.useful += 1;
                } else {
                    counts.not_useful += 1;
                }
            }
            AdvisorEvent::Reset => *self = AdvisorState::default(),
        }
    }

    pub fn reset(&mut self) {
        self.apply(&AdvisorEvent::Reset);
    }

    pub fn total_hits(&self) -> u64 {
        self.hits.values().sum()
    }

    pub fn report(&self, catalog: &Catalog) -> AdvisorReport {
        let mut hits: BTreeMap<String, u64> = catalog
            .views()
            .iter()
            .map(|v| (v.view_id.clone(), 0))
            .collect();
        for (k, n) in &self.hits {
            *hits.entry(k.clone()).or_default() += n;
        }
        let never_hit = catalog
            .views()
            .iter()
            .filter(|v| self.hits.get(&v.view_id).copied().unwrap_or(0) == 0)
            .map(|v| v.view_id.clone())
            .collect();
        AdvisorReport {
            hits,
            total_hits: self.total_hits(),
            failures: self.failures.clone(),
            never_hit,
            feedback: self.feedback.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisorReport {
    /// Every catalog view, zero when never chosen.
    pub hits: BTreeMap<String, u64>,
    pub total_hits: u64,
    pub failures: Vec<FailureRecord>,
    /// Candidates for retirement.
    pub never_hit: Vec<String>,
    pub feedback: BTreeMap<String, FeedbackCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("no required columns")]
    EmptyRequest,
    #[error("no view covers columns {}", .0.required_columns.join(", "))]
    NoCoveringView(FailureRecord),
}

/// Runs `selector` and records the outcome in `advisor`.
///
/// A view returned by a custom selector that does not cover the request is
/// treated as a failure.
pub fn select_view<'c>(
    catalog: &'c Catalog,
    selector: &dyn ViewSelector,
    request: &SelectionRequest,
    advisor: &mut AdvisorState,
    timestamp: u64,
) -> Result<&'c ViewDef, SelectionError> {
    match selector.select(catalog, request) {
        Some(view) if covers_all(view, &request.required_columns) => {
            advisor.apply(&AdvisorEvent::Hit {
                view_id: view.view_id.clone(),
            });
            Ok(view)
        }
        _ => {
            let rec = FailureRecord {
                query_text: request.query_text.clone(),
                required_columns: request.required_columns.iter().cloned().collect(),
                timestamp,
                join_candidates: join_candidates(catalog, &request.required_columns),
            };
            advisor.apply(&AdvisorEvent::Failure(rec.clone()));
            Err(SelectionError::NoCoveringView(rec))
        }
    }
}

/// View pairs whose combined columns cover `columns`, in id order.
pub fn join_candidates(catalog: &Catalog, columns: &BTreeSet<String>) -> Vec<(String, String)> {
    let mut views: Vec<&ViewDef> = catalog.views().iter().collect();
    views.sort_by(|a, b| a.view_id.cmp(&b.view_id));
    let mut out = Vec::new();
    for (i, a) in views.iter().enumerate() {
        for b in &views[i + 1..] {
            if columns.iter().all(|c| a.covers(c) || b.covers(c)) {
                out.push((a.view_id.clone(), b.view_id.clone()));
                if out.len() == MAX_JOIN_CANDIDATES {
                    return out;
                }
            }
        }
    }
    out
}
