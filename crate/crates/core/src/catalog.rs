//! View catalog: views with physical and virtual columns, plus the term
//! lexicon used to spot dimensions, columns and values in utterances.
//!
//! A [`Catalog`] is always validated. The only ways to obtain one are
//! [`Catalog::new`], [`Catalog::from_json`] and the copy-on-write mutators,
//! all of which run the full invariant check.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::Aggregation;
use crate::sql_lex;
use crate::terms::normalize;
use crate::time::RelativeTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dimension,
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    String,
    Integer,
    Float,
    Date,
    Datetime,
    Boolean,
}

impl DataType {
    pub fn is_temporal(self) -> bool {
        matches!(self, DataType::Date | DataType::Datetime)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDef {
    pub name: String,
    pub role: Role,
    pub data_type: DataType,
    #[serde(default)]
    pub description: String,
    /// Aggregation used when the column is asked for as a metric. Count-like
    /// columns such as user ids declare `count_distinct`; unset means `sum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_agg: Option<Aggregation>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, role: Role, data_type: DataType) -> Self {
        Self {
            name: name.into(),
            role,
            data_type,
            description: String::new(),
            default_agg: None,
        }
    }

    pub fn with_default_agg(mut self, agg: Aggregation) -> Self {
        self.default_agg = Some(agg);
        self
    }
}

/// A named SQL computation rule stored in view metadata instead of a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualColumn {
    pub name: String,
    pub rule: String,
    #[serde(default)]
    pub description: String,
}

impl VirtualColumn {
    pub fn new(name: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rule: rule.into(),
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDef {
    pub view_id: String,
    /// Fully-qualified physical source, e.g. `test.chatbi_demo_dataset`.
    pub source_table: String,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub virtual_columns: Vec<VirtualColumn>,
}

impl ViewDef {
    pub fn physical(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn virtual_column(&self, name: &str) -> Option<&VirtualColumn> {
        self.virtual_columns.iter().find(|c| c.name == name)
    }

    /// True if `name` is a physical or virtual column of this view.
    pub fn covers(&self, name: &str) -> bool {
        self.physical(name).is_some() || self.virtual_column(name).is_some()
    }

    /// Number of physical columns. Virtual columns are rules, not storage,
    /// and are not counted.
    pub fn physical_count(&self) -> usize {
        self.columns.len()
    }

    /// Looks up the computation rule of a virtual column, returned verbatim.
    pub fn resolve_virtual(&self, name: &str) -> Result<&str, CatalogError> {
        self.virtual_column(name)
            .map(|v| v.rule.as_str())
            .ok_or_else(|| CatalogError::NotVirtual {
                view: self.view_id.clone(),
                name: name.into(),
            })
    }

    /// The date column used for time windows: `preferred` when the view has
    /// it as a temporal dimension, otherwise the first temporal dimension.
    pub fn time_column(&self, preferred: &str) -> Option<&ColumnDef> {
        let temporal = |c: &&ColumnDef| c.role == Role::Dimension && c.data_type.is_temporal();
        self.physical(preferred)
            .filter(temporal)
            .or_else(|| self.columns.iter().find(temporal))
    }

    fn validate(&self, path: &str, issues: &mut Vec<Issue>) {
        if self.view_id.trim().is_empty() {
            issues.push(Issue::new(
                format!("{path}.view_id"),
                "view_id must be non-empty",
            ));
        }
        if self.source_table.trim().is_empty() {
            issues.push(Issue::new(
                format!("{path}.source_table"),
                "source_table must be non-empty",
            ));
        }
        if !self.columns.iter().any(|c| c.role == Role::Dimension) {
            issues.push(Issue::new(
                format!("{path}.columns"),
                "view needs at least one dimension column",
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, c) in self.columns.iter().enumerate() {
            let cpath = format!("{path}.columns[{i}]");
            if c.name.trim().is_empty() {
                issues.push(Issue::new(
                    format!("{cpath}.name"),
                    "column name must be non-empty",
                ));
            } else if !seen.insert(c.name.as_str()) {
                issues.push(Issue::new(
                    format!("{cpath}.name"),
                    format!("duplicate column {}", c.name),
                ));
            }
            if matches!(c.default_agg, Some(Aggregation::None)) {
                issues.push(Issue::new(
                    format!("{cpath}.default_agg"),
                    "physical columns cannot default to agg none",
                ));
            }
        }
        for (i, v) in self.virtual_columns.iter().enumerate() {
            let vpath = format!("{path}.virtual_columns[{i}]");
            if v.name.trim().is_empty() {
                issues.push(Issue::new(
                    format!("{vpath}.name"),
                    "column name must be non-empty",
                ));
            } else if self.physical(&v.name).is_some() {
                issues.push(Issue::new(
                    format!("{vpath}.name"),
                    format!("virtual column {} collides with a physical column", v.name),
                ));
            } else if !seen.insert(v.name.as_str()) {
                issues.push(Issue::new(
                    format!("{vpath}.name"),
                    format!("duplicate column {}", v.name),
                ));
            }
            if v.rule.trim().is_empty() {
                issues.push(Issue::new(
                    format!("{vpath}.rule"),
                    "rule must be non-empty",
                ));
                continue;
            }
            match sql_lex::tokenize(&v.rule) {
                Err(e) => issues.push(Issue::new(format!("{vpath}.rule"), e.to_string())),
                Ok(tokens) => {
                    for ident in sql_lex::referenced_identifiers(&tokens) {
                        if self.physical(ident).is_none() {
                            issues.push(Issue::new(
                                format!("{vpath}.rule"),
                                format!("rule references unknown column {ident}"),
                            ));
                        }
                    }
                    if tokens
                        .iter()
                        .any(|t| matches!(t.token, sql_lex::Token::Quoted(_)))
                    {
                        issues.push(Issue::new(
                            format!("{vpath}.rule"),
                            "rules must use bare column names",
                        ));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Dimension,
    Column,
}

/// A (column, literal) pair: a filter value mentioned in an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueTerm {
    pub column: String,
    pub value: String,
}

impl ValueTerm {
    pub fn new(column: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub phrase: String,
    pub kind: TermKind,
    /// Column name, or a relative time token such as `last_14_days` for
    /// dimension entries.
    pub canonical: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_scope: Option<Vec<String>>,
    /// Filter values implied by the phrase, e.g. "new users" implies
    /// `is_video_new = 1`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub implies: Vec<ValueTerm>,
}

impl LexiconEntry {
    pub fn new(phrase: impl Into<String>, kind: TermKind, canonical: impl Into<String>) -> Self {
        Self {
            phrase: phrase.into(),
            kind,
            canonical: canonical.into(),
            view_scope: None,
            implies: Vec::new(),
        }
    }
}

/// Known literal values of one column, matched verbatim (case-insensitively)
/// in utterances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueDictionary {
    pub column: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    #[serde(default)]
    pub entries: Vec<LexiconEntry>,
    #[serde(default)]
    pub values: Vec<ValueDictionary>,
}

impl Lexicon {
    /// First entry whose canonical is `canonical`, by lexicon position.
    pub fn phrase_for(&self, canonical: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.canonical == canonical)
    }
}

pub const DEFAULT_TIME_COLUMN: &str = "event_day";

fn default_time_column() -> String {
    DEFAULT_TIME_COLUMN.into()
}

/// Serialized form of a catalog file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogDoc {
    pub views: Vec<ViewDef>,
    #[serde(default)]
    pub lexicon: Lexicon,
    /// Date column that relative time phrases ("past seven days") bind to.
    #[serde(default = "default_time_column")]
    pub time_column: String,
}

/// A validated set of views and lexicon. Immutable; mutation returns a new
/// catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    doc: CatalogDoc,
}

impl Serialize for Catalog {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.doc.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Catalog {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = CatalogDoc::deserialize(deserializer)?;
        Catalog::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

/// One invariant violation, located by a path into the catalog document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("malformed catalog at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid catalog: {}", join_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("view {0} already exists")]
    DuplicateView(String),
    #[error("view {0} not found")]
    UnknownView(String),
    #[error("{name} is not a virtual column of view {view}")]
    NotVirtual { view: String, name: String },
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Catalog {
    pub fn new(views: Vec<ViewDef>, lexicon: Lexicon) -> Result<Self, CatalogError> {
        Self::from_doc(CatalogDoc {
            views,
            lexicon,
            time_column: default_time_column(),
        })
    }

    pub fn from_doc(doc: CatalogDoc) -> Result<Self, CatalogError> {
        let issues = validate_doc(&doc);
        if issues.is_empty() {
            Ok(Self { doc })
        } else {
            Err(CatalogError::Invalid(issues))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDoc = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_doc(doc)
    }

    pub fn to_json_pretty(&self) -> String {
        // Serializing plain data with string keys cannot fail.
        serde_json::to_string_pretty(&self.doc).unwrap_or_default()
    }

    pub fn doc(&self) -> &CatalogDoc {
        &self.doc
    }

    pub fn views(&self) -> &[ViewDef] {
        &self.doc.views
    }

    pub fn view(&self, view_id: &str) -> Option<&ViewDef> {
        self.doc.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.doc.lexicon
    }

    pub fn time_column(&self) -> &str {
        &self.doc.time_column
    }

    /// Returns a new catalog with `view` added.
    pub fn with_view(&self, view: ViewDef) -> Result<Catalog, CatalogError> {
        if self.view(&view.view_id).is_some() {
            return Err(CatalogError::DuplicateView(view.view_id));
        }
        let mut doc = self.doc.clone();
        doc.views.push(view);
        Self::from_doc(doc)
    }

    /// Returns a new catalog without `view_id`. Fails if the lexicon still
    /// needs a column only that view provides.
    pub fn without_view(&self, view_id: &str) -> Result<Catalog, CatalogError> {
        if self.view(view_id).is_none() {
            return Err(CatalogError::UnknownView(view_id.into()));
        }
        let mut doc = self.doc.clone();
        doc.views.retain(|v| v.view_id != view_id);
        Self::from_doc(doc)
    }
}

fn validate_doc(doc: &CatalogDoc) -> Vec<Issue> {
    let mut issues = Vec::new();
    if doc.views.is_empty() {
        issues.push(Issue::new("views", "catalog must define at least one view"));
    }
    let mut ids = BTreeSet::new();
    for (i, view) in doc.views.iter().enumerate() {
        let path = format!("views[{i}]");
        if !ids.insert(view.view_id.as_str()) {
            issues.push(Issue::new(
                format!("{path}.view_id"),
                format!("duplicate view_id {}", view.view_id),
            ));
        }
        view.validate(&path, &mut issues);
    }
    validate_lexicon(doc, &mut issues);
    issues
}

fn validate_lexicon(doc: &CatalogDoc, issues: &mut Vec<Issue>) {
    let views_in_scope = |scope: &Option<Vec<String>>| -> Vec<&ViewDef> {
        match scope {
            None => doc.views.iter().collect(),
            Some(ids) => doc
                .views
                .iter()
                .filter(|v| ids.contains(&v.view_id))
                .collect(),
        }
    };

    // (normalized phrase) -> [(scope, canonical, entry index)] for ambiguity detection
    type Claim<'a> = (&'a Option<Vec<String>>, &'a str, usize);
    let mut by_phrase: BTreeMap<Vec<String>, Vec<Claim<'_>>> = BTreeMap::new();

    for (i, e) in doc.lexicon.entries.iter().enumerate() {
        let path = format!("lexicon.entries[{i}]");
        let tokens = normalize(&e.phrase);
        if tokens.is_empty() {
            issues.push(Issue::new(format!("{path}.phrase"), "phrase has no words"));
            continue;
        }
        if let Some(scope) = &e.view_scope {
            for id in scope {
                if !doc.views.iter().any(|v| &v.view_id == id) {
                    issues.push(Issue::new(
                        format!("{path}.view_scope"),
                        format!("unknown view {id}"),
                    ));
                }
            }
        }
        let in_scope = views_in_scope(&e.view_scope);
        let is_time_token = e.canonical.parse::<RelativeTime>().is_ok();
        if is_time_token && e.kind == TermKind::Column {
            issues.push(Issue::new(
                format!("{path}.canonical"),
                "relative time tokens must be dimension entries",
            ));
        } else if !is_time_token && !in_scope.iter().any(|v| v.covers(&e.canonical)) {
            issues.push(Issue::new(
                format!("{path}.canonical"),
                format!("{} does not resolve to a column of any view", e.canonical),
            ));
        }
        if e.kind == TermKind::Dimension && !is_time_token {
            let physical = in_scope.iter().any(|v| v.physical(&e.canonical).is_some());
            if !physical {
                issues.push(Issue::new(
                    format!("{path}.canonical"),
                    "dimension entries must name a physical column",
                ));
            }
        }
        for (j, imp) in e.implies.iter().enumerate() {
            if !in_scope.iter().any(|v| v.physical(&imp.column).is_some()) {
                issues.push(Issue::new(
                    format!("{path}.implies[{j}].column"),
                    format!("{} is not a physical column of any view", imp.column),
                ));
            }
        }
        by_phrase
            .entry(tokens)
            .or_default()
            .push((&e.view_scope, e.canonical.as_str(), i));
    }

    for entries in by_phrase.values() {
        for (a, (scope_a, canon_a, idx_a)) in entries.iter().enumerate() {
            for (scope_b, canon_b, idx_b) in entries.iter().skip(a + 1) {
                if canon_a != canon_b && scopes_overlap(scope_a, scope_b) {
                    issues.push(Issue::new(
                        format!("lexicon.entries[{idx_b}].phrase"),
                        format!(
                            "phrase is ambiguous: maps to {canon_b} here and to {canon_a} at entries[{idx_a}]"
                        ),
                    ));
                }
            }
        }
    }

    for (i, dict) in doc.lexicon.values.iter().enumerate() {
        let path = format!("lexicon.values[{i}]");
        if !doc.views.iter().any(|v| v.physical(&dict.column).is_some()) {
            issues.push(Issue::new(
                format!("{path}.column"),
                format!("{} is not a physical column of any view", dict.column),
            ));
        }
        for (j, value) in dict.values.iter().enumerate() {
            if normalize(value).is_empty() {
                issues.push(Issue::new(
                    format!("{path}.values[{j}]"),
                    "value has no words",
                ));
            }
        }
    }
}

fn scopes_overlap(a: &Option<Vec<String>>, b: &Option<Vec<String>>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.iter().any(|x| b.contains(x)),
        _ => true,
    }
}
