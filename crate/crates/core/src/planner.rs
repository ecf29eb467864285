//! Translation of a resolved query into an [`AnalyticIr`].
//!
//! Two translators ship: [`RuleTranslator`], a deterministic mapping from
//! extracted terms, and [`ModelTranslator`], which prompts a language model
//! for JnM and repairs, parses and validates its answer with one retry.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use chrono::NaiveDate;

use crate::catalog::{Catalog, DataType, Role, ViewDef};
use crate::ir::{
    parse_jnm, validate, Aggregation, AnalyticIr, Comparison, Filter, FilterOp, JnmError, Literal,
    MetricRef, TimeRange, TimeWindow, Violation,
};
use crate::terms::{Dimension, TermSet};

pub struct TranslationContext<'a> {
    pub resolved_text: &'a str,
    pub terms: &'a TermSet,
    pub view: &'a ViewDef,
    /// Date used to resolve relative time. Windows end the day before.
    pub today: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("unsupported intent: {0}")]
    UnsupportedIntent(String),
    #[error("model backend failed: {0}")]
    Backend(String),
    #[error("translation failed after retry: {message}")]
    Translation {
        message: String,
        violations: Vec<Violation>,
    },
    #[error("IR is invalid")]
    Invalid(Vec<Violation>),
}

pub trait Translator {
    fn translate(
        &self,
        ctx: &TranslationContext<'_>,
        catalog: &Catalog,
    ) -> Result<AnalyticIr, PlanError>;
}

/// Translates and then validates, so every returned IR passes [`validate`].
pub fn plan(
    translator: &dyn Translator,
    ctx: &TranslationContext<'_>,
    catalog: &Catalog,
) -> Result<AnalyticIr, PlanError> {
    let ir = translator.translate(ctx, catalog)?;
    validate(&ir, catalog).map_err(PlanError::Invalid)?;
    Ok(ir)
}

/// Deterministic translation from extracted terms.
///
/// - A relative time becomes a window on the view's time column, and that
///   column leads the dimensions when the window spans several days.
/// - Grouping terms follow as dimensions.
/// - Columns become metrics: virtual ones with `none`, physical ones with
///   their default aggregation (sum for metrics, count distinct for
///   dimension columns).
/// - Values become `eq` or `in` filters typed by the column.
/// - Comparison markers become named comparisons.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTranslator;

impl Translator for RuleTranslator {
    fn translate(
        &self,
        ctx: &TranslationContext<'_>,
        catalog: &Catalog,
    ) -> Result<AnalyticIr, PlanError> {
        let view = ctx.view;
        let mut ir = AnalyticIr::new(view.view_id.clone());

        if let Some(rel) = ctx.terms.relative_time() {
            let column = view
                .time_column(catalog.time_column())
                .ok_or_else(|| {
                    PlanError::UnsupportedIntent(format!(
                        "view {} has no date column",
                        view.view_id
                    ))
                })?
                .name
                .clone();
            let window = rel.resolve(ctx.today).ok_or_else(|| {
                PlanError::UnsupportedIntent(format!("time window {rel} is out of range"))
            })?;
            if window.days() > 1 {
                ir.dimensions.push(column.clone());
            }
            ir.time = Some(TimeWindow {
                column,
                range: TimeRange::Relative(rel),
            });
        }
        for d in &ctx.terms.dimensions {
            if let Dimension::Column(c) = d {
                if !ir.dimensions.contains(c) {
                    ir.dimensions.push(c.clone());
                }
            }
        }

        for c in &ctx.terms.columns {
            let agg = if view.virtual_column(c).is_some() {
                Aggregation::None
            } else {
                let def = view.physical(c).ok_or_else(|| {
                    PlanError::UnsupportedIntent(format!(
                        "column {c} is not in view {}",
                        view.view_id
                    ))
                })?;
                def.default_agg.unwrap_or(match def.role {
                    Role::Metric => Aggregation::Sum,
                    Role::Dimension => Aggregation::CountDistinct,
                })
            };
            ir.metrics.push(MetricRef::new(c.clone(), agg));
        }
        if ir.metrics.is_empty() {
            return Err(PlanError::UnsupportedIntent(
                "the query names no metric".into(),
            ));
        }

        let mut columns: Vec<&str> = Vec::new();
        for v in &ctx.terms.values {
            if !columns.contains(&v.column.as_str()) {
                columns.push(&v.column);
            }
        }
        for column in columns {
            let data_type = view.physical(column).map(|c| c.data_type);
            let values: Vec<Literal> = ctx
                .terms
                .values
                .iter()
                .filter(|v| v.column == column)
                .map(|v| typed_literal(&v.value, data_type))
                .collect();
            let op = if values.len() == 1 {
                FilterOp::Eq
            } else {
                FilterOp::In
            };
            ir.filters.push(Filter::new(column, op, values));
        }

        if !ctx.terms.comparisons.is_empty() && ir.time.is_none() {
            return Err(PlanError::UnsupportedIntent(
                "a comparison needs a time window".into(),
            ));
        }
        ir.comparisons = ctx
            .terms
            .comparisons
            .iter()
            .filter_map(|k| k.canonical_offset().map(|_| Comparison::named(*k)))
            .collect();

        Ok(ir.with_default_aliases())
    }
}

fn typed_literal(value: &str, data_type: Option<DataType>) -> Literal {
    match data_type {
        Some(DataType::Integer) => value.parse().map(Literal::Int).ok(),
        Some(DataType::Float) => value.parse().map(Literal::Float).ok(),
        Some(DataType::Boolean) => match value {
            "true" | "1" => Some(Literal::Bool(true)),
            "false" | "0" => Some(Literal::Bool(false)),
            _ => None,
        },
        _ => None,
    }
    .unwrap_or_else(|| Literal::Str(value.into()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// A text completion endpoint.
pub trait ModelBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

/// Model-backed translation with a single corrective retry.
pub struct ModelTranslator<B> {
    pub backend: B,
}

impl<B: ModelBackend> ModelTranslator<B> {
    pub fn new(backend: B) -> Self {
        Self { backend }
    }

    fn attempt(
        &self,
        prompt: &str,
        ctx: &TranslationContext<'_>,
        catalog: &Catalog,
    ) -> Result<Result<AnalyticIr, (String, Vec<Violation>)>, PlanError> {
        let raw = self
            .backend
            .complete(prompt)
            .map_err(|e| PlanError::Backend(e.0))?;
        Ok(check_answer(&raw, ctx, catalog))
    }
}

fn check_answer(
    raw: &str,
    ctx: &TranslationContext<'_>,
    catalog: &Catalog,
) -> Result<AnalyticIr, (String, Vec<Violation>)> {
    {
        let json = repair_json(raw).map_err(|e| (e.to_string(), Vec::new()))?;
        let ir = parse_jnm(json).map_err(|e| match e {
            JnmError::Invalid(v) => ("invalid IR".into(), v),
            other => (other.to_string(), Vec::new()),
        })?;
        if ir.view_id != ctx.view.view_id {
            return Err((
                format!("view_id must be {}, got {}", ctx.view.view_id, ir.view_id),
                Vec::new(),
            ));
        }
        validate(&ir, catalog).map_err(|v| ("invalid IR".to_string(), v))?;
        Ok(ir)
    }
}

impl<B: ModelBackend> Translator for ModelTranslator<B> {
    fn translate(
        &self,
        ctx: &TranslationContext<'_>,
        catalog: &Catalog,
    ) -> Result<AnalyticIr, PlanError> {
        let prompt = render_prompt(ctx, catalog);
        let (message, violations) = match self.attempt(&prompt, ctx, catalog)? {
            Ok(ir) => return Ok(ir),
            Err(e) => e,
        };
        let mut retry = prompt;
        retry.push_str("\nYour previous answer was rejected:\n");
        let _ = writeln!(retry, "- {message}");
        for v in &violations {
            let _ = writeln!(retry, "- {v}");
        }
        retry.push_str("Answer again with corrected JSON only.\n");
        self.attempt(&retry, ctx, catalog)?
            .map_err(|(message, violations)| PlanError::Translation {
                message,
                violations,
            })
    }
}

/// The prompt sent to the model: the view schema, the clock and the query.
pub fn render_prompt(ctx: &TranslationContext<'_>, catalog: &Catalog) -> String {
    let view = ctx.view;
    let mut p = String::new();
    p.push_str("Translate the question into one JSON query object.\n");
    let _ = writeln!(p, "view_id: {}", view.view_id);
    p.push_str("Columns:\n");
    for c in &view.columns {
        let role = match c.role {
            Role::Dimension => "dimension",
            Role::Metric => "metric",
        };
        let _ = write!(p, "- {} ({role}, {:?})", c.name, c.data_type);
        if !c.description.is_empty() {
            let _ = write!(p, ": {}", c.description);
        }
        p.push('\n');
    }
    if !view.virtual_columns.is_empty() {
        p.push_str("Virtual columns (metrics only, agg \"none\"):\n");
        for v in &view.virtual_columns {
            let _ = write!(p, "- {}", v.name);
            if !v.description.is_empty() {
                let _ = write!(p, ": {}", v.description);
            }
            p.push('\n');
        }
    }
    let _ = writeln!(
        p,
        "Today is {}. Relative windows end yesterday. Time column: {}.",
        ctx.today,
        view.time_column(catalog.time_column())
            .map_or("none", |c| c.name.as_str())
    );
    p.push_str(
        "Keys: view_id, dimensions [column], metrics [{column, agg}], \
         filters [{column, op, values}], time {column, range: {\"relative\": \"last_7_days\"} or {\"absolute\": {start, end}}}, \
         comparisons [{kind, offset: {unit, count}}], order_by [{alias, direction}], limit.\n",
    );
    let _ = writeln!(p, "Question: {}", ctx.resolved_text);
    p
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepairError {
    #[error("no JSON object in model output")]
    NoObject,
    #[error("unbalanced JSON object in model output")]
    Unbalanced,
}

/// Cuts the outermost JSON object out of model output, dropping code fences
/// and prose around it. Idempotent.
pub fn repair_json(raw: &str) -> Result<&str, RepairError> {
    let start = raw.find('{').ok_or(RepairError::NoObject)?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    Err(RepairError::Unbalanced)
}
