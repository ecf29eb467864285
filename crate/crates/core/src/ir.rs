//! The JSON intermediate representation between planning and SQL generation.
//!
//! [`AnalyticIr`] is the in-memory form. On the wire it travels as a JnM
//! document: the IR fields plus a nested `virtual_rules` map from each
//! referenced virtual column to its computation rule. Parsing is strict:
//! unknown keys are rejected so malformed model output fails early.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ViewDef};
use crate::time::{shift_window, DateRange, Offset, RelativeTime, TimeUnit};

pub const DEFAULT_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Count,
    CountDistinct,
    Avg,
    Min,
    Max,
    /// The column is virtual and its rule already aggregates.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRef {
    pub column: String,
    pub agg: Aggregation,
    /// Output alias. Empty means "assign the positional default `mt_<k>`".
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub alias: String,
}

impl MetricRef {
    pub fn new(column: impl Into<String>, agg: Aggregation) -> Self {
        Self {
            column: column.into(),
            agg,
            alias: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOp {
    Eq,
    Neq,
    In,
    NotIn,
    Lt,
    Lte,
    Gt,
    Gte,
    Between,
}

impl FilterOp {
    fn arity_ok(self, n: usize) -> bool {
        match self {
            FilterOp::Between => n == 2,
            FilterOp::In | FilterOp::NotIn => n >= 1,
            _ => n == 1,
        }
    }

    fn arity_text(self) -> &'static str {
        match self {
            FilterOp::Between => "exactly 2 values",
            FilterOp::In | FilterOp::NotIn => "at least 1 value",
            _ => "exactly 1 value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    pub values: Vec<Literal>,
}

impl Filter {
    pub fn new(column: impl Into<String>, op: FilterOp, values: Vec<Literal>) -> Self {
        Self {
            column: column.into(),
            op,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeRange {
    Relative(RelativeTime),
    /// Inclusive on both ends, serialized as `YYYY-MM-DD`.
    Absolute {
        start: NaiveDate,
        end: NaiveDate,
    },
}

impl TimeRange {
    pub fn resolve(&self, today: NaiveDate) -> Option<DateRange> {
        match *self {
            TimeRange::Relative(t) => t.resolve(today),
            TimeRange::Absolute { start, end } => Some(DateRange::new(start, end)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub column: String,
    pub range: TimeRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    DayOverDay,
    WeekOverWeek,
    MonthOverMonth,
    YearOverYear,
    Custom,
}

impl ComparisonKind {
    /// The fixed offset of a named comparison; `None` for custom.
    pub fn canonical_offset(self) -> Option<Offset> {
        let unit = match self {
            ComparisonKind::DayOverDay => TimeUnit::Day,
            ComparisonKind::WeekOverWeek => TimeUnit::Week,
            ComparisonKind::MonthOverMonth => TimeUnit::Month,
            ComparisonKind::YearOverYear => TimeUnit::Year,
            ComparisonKind::Custom => return None,
        };
        Some(Offset::new(unit, 1))
    }

    pub fn phrase(self) -> &'static str {
        match self {
            ComparisonKind::DayOverDay => "day-over-day",
            ComparisonKind::WeekOverWeek => "week-on-week",
            ComparisonKind::MonthOverMonth => "month-on-month",
            ComparisonKind::YearOverYear => "year-on-year",
            ComparisonKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub kind: ComparisonKind,
    pub offset: Offset,
    /// When set, ratio columns are named `<metric alias>_<suffix>`; otherwise
    /// they continue the positional `mt_<k>` numbering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias_suffix: Option<String>,
}

impl Comparison {
    /// A named comparison with its canonical offset. Panics on `Custom`.
    pub fn named(kind: ComparisonKind) -> Self {
        Self {
            kind,
            offset: kind
                .canonical_offset()
                .expect("custom comparisons need an explicit offset"),
            alias_suffix: None,
        }
    }

    pub fn custom(offset: Offset) -> Self {
        Self {
            kind: ComparisonKind::Custom,
            offset,
            alias_suffix: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderKey {
    pub alias: String,
    pub direction: Direction,
}

impl OrderKey {
    pub fn new(alias: impl Into<String>, direction: Direction) -> Self {
        Self {
            alias: alias.into(),
            direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticIr {
    pub view_id: String,
    #[serde(default)]
    pub dimensions: Vec<String>,
    pub metrics: Vec<MetricRef>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub time: Option<TimeWindow>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub order_by: Vec<OrderKey>,
    #[serde(default = "default_limit")]
    pub limit: u64,
}

fn default_limit() -> u64 {
    DEFAULT_LIMIT
}

impl AnalyticIr {
    pub fn new(view_id: impl Into<String>) -> Self {
        Self {
            view_id: view_id.into(),
            dimensions: Vec::new(),
            metrics: Vec::new(),
            filters: Vec::new(),
            time: None,
            comparisons: Vec::new(),
            order_by: Vec::new(),
            limit: DEFAULT_LIMIT,
        }
    }

    /// Fills empty metric aliases with their positional default.
    pub fn with_default_aliases(mut self) -> Self {
        let d = self.dimensions.len();
        for (i, m) in self.metrics.iter_mut().enumerate() {
            if m.alias.is_empty() {
                m.alias = format!("mt_{}", d + i + 1);
            }
        }
        self
    }

    /// Output alias of dimension `idx`: `xc_1`, `xc_2`, ...
    pub fn dimension_alias(&self, idx: usize) -> String {
        format!("xc_{}", idx + 1)
    }

    /// Output alias of the ratio column for comparison `cmp` on metric `metric`.
    pub fn ratio_alias(&self, cmp: usize, metric: usize) -> String {
        let c = &self.comparisons[cmp];
        match &c.alias_suffix {
            Some(suffix) => format!("{}_{}", self.metrics[metric].alias, suffix),
            None => {
                let base = self.dimensions.len() + self.metrics.len();
                format!("mt_{}", base + cmp * self.metrics.len() + metric + 1)
            }
        }
    }

    /// Every column name of the final result, in select order.
    pub fn output_aliases(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.dimensions.len())
            .map(|i| self.dimension_alias(i))
            .collect();
        out.extend(self.metrics.iter().map(|m| m.alias.clone()));
        for c in 0..self.comparisons.len() {
            for m in 0..self.metrics.len() {
                out.push(self.ratio_alias(c, m));
            }
        }
        out
    }

    /// Virtual columns referenced by metrics or filters, sorted.
    pub fn virtual_columns<'v>(&self, view: &'v ViewDef) -> BTreeSet<&'v str> {
        self.metrics
            .iter()
            .map(|m| m.column.as_str())
            .chain(self.filters.iter().map(|f| f.column.as_str()))
            .filter_map(|c| view.virtual_column(c).map(|v| v.name.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Violation {
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("unknown column {column} in view {view}")]
    UnknownColumn { column: String, view: String },
    #[error("at least one metric is required")]
    NoMetrics,
    #[error("limit must be at least 1")]
    ZeroLimit,
    #[error("dimension {0} must be a physical column")]
    VirtualDimension(String),
    #[error("dimension {0} listed twice")]
    DuplicateDimension(String),
    #[error("metric {column}: {reason}")]
    BadAggregation { column: String, reason: String },
    #[error("filter on {column}: {op:?} takes {expected}, got {got}")]
    Arity {
        column: String,
        op: FilterOp,
        expected: String,
        got: usize,
    },
    #[error("time column {0} must be a date-typed dimension")]
    BadTimeColumn(String),
    #[error("time window starts {start} after it ends {end}")]
    InvertedWindow { start: NaiveDate, end: NaiveDate },
    #[error("comparisons need a time window")]
    ComparisonWithoutWindow,
    #[error("{kind:?} comparison must use its canonical offset")]
    NonCanonicalOffset { kind: ComparisonKind },
    #[error("comparison offset count must be at least 1")]
    ZeroOffset,
    #[error("two comparisons share offset {0}")]
    DuplicateComparison(String),
    #[error("shifted window for offset {0} is out of range")]
    ShiftOutOfRange(String),
    #[error("invalid alias {0}")]
    BadAlias(String),
    #[error("alias {0} used twice")]
    DuplicateAlias(String),
    #[error("order_by references unknown alias {0}")]
    UnknownOrderAlias(String),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks `ir` against `catalog`, returning every violation found.
pub fn validate(ir: &AnalyticIr, catalog: &Catalog) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if ir.metrics.is_empty() {
        out.push(Violation::NoMetrics);
    }
    if ir.limit == 0 {
        out.push(Violation::ZeroLimit);
    }
    let Some(view) = catalog.view(&ir.view_id) else {
        out.push(Violation::UnknownView(ir.view_id.clone()));
        return Err(out);
    };
    let unknown = |column: &str| Violation::UnknownColumn {
        column: column.into(),
        view: view.view_id.clone(),
    };

    let mut seen_dims = BTreeSet::new();
    for d in &ir.dimensions {
        if view.physical(d).is_none() {
            if view.virtual_column(d).is_some() {
                out.push(Violation::VirtualDimension(d.clone()));
            } else {
                out.push(unknown(d));
            }
        }
        if !seen_dims.insert(d.as_str()) {
            out.push(Violation::DuplicateDimension(d.clone()));
        }
    }

    for m in &ir.metrics {
        let is_virtual = view.virtual_column(&m.column).is_some();
        if !is_virtual && view.physical(&m.column).is_none() {
            out.push(unknown(&m.column));
        } else if is_virtual && m.agg != Aggregation::None {
            out.push(Violation::BadAggregation {
                column: m.column.clone(),
                reason: "virtual columns already aggregate; use agg none".into(),
            });
        } else if !is_virtual && m.agg == Aggregation::None {
            out.push(Violation::BadAggregation {
                column: m.column.clone(),
                reason: "agg none is only allowed on virtual columns".into(),
            });
        }
    }

    for f in &ir.filters {
        if !view.covers(&f.column) {
            out.push(unknown(&f.column));
        }
        if !f.op.arity_ok(f.values.len()) {
            out.push(Violation::Arity {
                column: f.column.clone(),
                op: f.op,
                expected: f.op.arity_text().into(),
                got: f.values.len(),
            });
        }
    }

    let mut absolute = None;
    if let Some(t) = &ir.time {
        match view.physical(&t.column) {
            None => out.push(unknown(&t.column)),
            Some(c) if !c.data_type.is_temporal() => {
                out.push(Violation::BadTimeColumn(t.column.clone()))
            }
            Some(_) => {}
        }
        if let TimeRange::Absolute { start, end } = t.range {
            if start > end {
                out.push(Violation::InvertedWindow { start, end });
            } else {
                absolute = Some(DateRange::new(start, end));
            }
        }
    }

    if !ir.comparisons.is_empty() && ir.time.is_none() {
        out.push(Violation::ComparisonWithoutWindow);
    }
    let mut offsets = BTreeSet::new();
    for c in &ir.comparisons {
        if c.offset.count == 0 {
            out.push(Violation::ZeroOffset);
        }
        if let Some(canonical) = c.kind.canonical_offset() {
            if canonical != c.offset {
                out.push(Violation::NonCanonicalOffset { kind: c.kind });
            }
        }
        if !offsets.insert(c.offset) {
            out.push(Violation::DuplicateComparison(c.offset.tag()));
        }
        if let Some(w) = absolute {
            if shift_window(w, c.offset).is_none() {
                out.push(Violation::ShiftOutOfRange(c.offset.tag()));
            }
        }
        if let Some(s) = &c.alias_suffix {
            if !is_identifier(s) {
                out.push(Violation::BadAlias(s.clone()));
            }
        }
    }

    for m in &ir.metrics {
        if !m.alias.is_empty() && !is_identifier(&m.alias) {
            out.push(Violation::BadAlias(m.alias.clone()));
        }
    }
    if !ir.metrics.is_empty() {
        let aliases = ir.output_aliases();
        let mut seen = BTreeSet::new();
        for a in &aliases {
            if a.is_empty() {
                continue;
            }
            if !seen.insert(a.as_str()) {
                out.push(Violation::DuplicateAlias(a.clone()));
            }
        }
        for k in &ir.order_by {
            if !aliases.contains(&k.alias) {
                out.push(Violation::UnknownOrderAlias(k.alias.clone()));
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Wire form of a JnM document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JnmDoc {
    view_id: String,
    #[serde(default)]
    dimensions: Vec<String>,
    metrics: Vec<MetricRef>,
    #[serde(default)]
    filters: Vec<Filter>,
    #[serde(default)]
    time: Option<TimeWindow>,
    #[serde(default)]
    comparisons: Vec<Comparison>,
    #[serde(default)]
    order_by: Vec<OrderKey>,
    #[serde(default = "default_limit")]
    limit: u64,
    #[serde(default)]
    virtual_rules: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JnmError {
    #[error("JnM parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("JnM schema error at line {line}, column {column}: {message}")]
    UnknownField {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("IR is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Parses a JnM document. Missing metric aliases get their positional
/// defaults; `virtual_rules` is accepted and dropped, because the catalog
/// stays the source of truth for rules.
pub fn parse_jnm(text: &str) -> Result<AnalyticIr, JnmError> {
    let doc: JnmDoc = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        if message.contains("unknown field") || message.contains("unknown variant") {
            JnmError::UnknownField {
                line: e.line(),
                column: e.column(),
                message,
            }
        } else {
            JnmError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        }
    })?;
    let ir = AnalyticIr {
        view_id: doc.view_id,
        dimensions: doc.dimensions,
        metrics: doc.metrics,
        filters: doc.filters,
        time: doc.time,
        comparisons: doc.comparisons,
        order_by: doc.order_by,
        limit: doc.limit,
    };
    Ok(ir.with_default_aliases())
}

/// Serializes a valid IR as JnM, copying the rule of every referenced
/// virtual column from the catalog into `virtual_rules`.
pub fn to_jnm_value(ir: &AnalyticIr, catalog: &Catalog) -> Result<serde_json::Value, JnmError> {
    validate(ir, catalog).map_err(JnmError::Invalid)?;
    let view = catalog.view(&ir.view_id).ok_or_else(|| {
        JnmError::Invalid(alloc::vec![Violation::UnknownView(ir.view_id.clone())])
    })?;
    let virtual_rules: BTreeMap<String, String> = ir
        .virtual_columns(view)
        .into_iter()
        .filter_map(|name| view.virtual_column(name))
        .map(|v| (v.name.clone(), v.rule.clone()))
        .collect();
    let doc = JnmDoc {
        view_id: ir.view_id.clone(),
        dimensions: ir.dimensions.clone(),
        metrics: ir.metrics.clone(),
        filters: ir.filters.clone(),
        time: ir.time.clone(),
        comparisons: ir.comparisons.clone(),
        order_by: ir.order_by.clone(),
        limit: ir.limit,
        virtual_rules,
    };
    serde_json::to_value(&doc).map_err(|e| JnmError::Parse {
        line: 0,
        column: 0,
        message: e.to_string(),
    })
}

pub fn serialize_jnm(ir: &AnalyticIr, catalog: &Catalog) -> Result<String, JnmError> {
    let value = to_jnm_value(ir, catalog)?;
    Ok(value.to_string())
}
