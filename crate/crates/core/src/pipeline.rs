//! One query turn end to end: classify, resolve, extract, select, plan,
//! generate and check. Pure apart from the session and advisor it mutates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::Serialize;

use crate::catalog::Catalog;
use crate::dialogue::{resolve, Classifier, QueryResolver, ResolveError, SessionState, Source};
use crate::ir::to_jnm_value;
use crate::planner::{plan, PlanError, TranslationContext, Translator};
use crate::selector::{select_view, AdvisorState, SelectionError, SelectionRequest, ViewSelector};
use crate::sqlgen::{
    generate, structural_check, Dialect, GenerateError, GenerateOptions, Template,
};
use crate::terms::extract_terms;

pub struct Pipeline<'a> {
    pub catalog: &'a Catalog,
    pub classifier: &'a dyn Classifier,
    pub resolver: &'a dyn QueryResolver,
    pub selector: &'a dyn ViewSelector,
    pub translator: &'a dyn Translator,
    pub options: GenerateOptions,
    pub today: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSummary {
    pub text: Option<String>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqlBlock {
    pub text: String,
    pub dialect: Dialect,
    pub template: Template,
    pub referenced_columns: Vec<String>,
    pub subquery_count: usize,
    pub join_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub ok: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResponse {
    pub session_id: String,
    pub utterance: String,
    pub resolved: ResolvedSummary,
    pub required_columns: Vec<String>,
    pub view_id: String,
    /// The JnM document.
    pub ir: serde_json::Value,
    pub sql: SqlBlock,
    pub structural_check: CheckOutcome,
    pub advisor_hit: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("the question is incomplete and there is no earlier question to complete it from; please restate it in full")]
    ResolutionNone,
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("{error}")]
    Selection {
        resolved: String,
        error: SelectionError,
    },
    #[error("{error}")]
    Plan { resolved: String, error: PlanError },
    #[error("{error}")]
    Generate {
        resolved: String,
        error: GenerateError,
    },
}

impl Pipeline<'_> {
    /// Runs one turn. The utterance stays in the session history whatever
    /// the outcome. `now` stamps advisor failure records.
    pub fn run(
        &self,
        session: &mut SessionState,
        advisor: &mut AdvisorState,
        utterance: &str,
        now: u64,
    ) -> Result<QueryResponse, PipelineError> {
        let lexicon = self.catalog.lexicon();
        session.push(utterance, lexicon, self.classifier);
        let resolved = resolve(session, self.classifier, self.resolver, lexicon)?;
        let Some(text) = resolved.text.clone() else {
            return Err(PipelineError::ResolutionNone);
        };

        let terms = extract_terms(&text, lexicon);
        let required = terms.required_columns(self.catalog.time_column());
        let selection = SelectionRequest::new(required.clone(), text.clone())
            .and_then(|req| select_view(self.catalog, self.selector, &req, advisor, now));
        let view = selection.map_err(|error| PipelineError::Selection {
            resolved: text.clone(),
            error,
        })?;

        let ctx = TranslationContext {
            resolved_text: &text,
            terms: &terms,
            view,
            today: self.today,
        };
        let plan_err = |error| PipelineError::Plan {
            resolved: text.clone(),
            error,
        };
        let ir = plan(self.translator, &ctx, self.catalog).map_err(plan_err)?;
        let jnm = to_jnm_value(&ir, self.catalog)
            .map_err(|e| plan_err(PlanError::UnsupportedIntent(e.to_string())))?;
        let artifact = generate(&ir, self.catalog, self.today, self.options).map_err(|error| {
            PipelineError::Generate {
                resolved: text.clone(),
                error,
            }
        })?;
        let check = structural_check(&artifact, &ir, self.catalog);

        Ok(QueryResponse {
            session_id: session.session_id.clone(),
            utterance: utterance.into(),
            resolved: ResolvedSummary {
                text: Some(text),
                source: resolved.source,
            },
            required_columns: required.into_iter().collect(),
            view_id: view.view_id.clone(),
            ir: jnm,
            sql: SqlBlock {
                text: artifact.sql,
                dialect: artifact.dialect,
                template: artifact.template,
                referenced_columns: artifact.referenced_columns.into_iter().collect(),
                subquery_count: artifact.subquery_count,
                join_count: artifact.join_count,
            },
            structural_check: match check {
                Ok(()) => CheckOutcome {
                    ok: true,
                    violations: Vec::new(),
                },
                Err(v) => CheckOutcome {
                    ok: false,
                    violations: v.iter().map(|x| x.to_string()).collect(),
                },
            },
            advisor_hit: true,
        })
    }
}
