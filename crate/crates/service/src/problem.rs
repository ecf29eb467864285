//! Error bodies: `{code, message, details}` with an HTTP status and a CLI
//! exit code.

use nl2bi_core::dialogue::ResolveError;
use nl2bi_core::pipeline::PipelineError;
use nl2bi_core::planner::PlanError;
use nl2bi_core::selector::SelectionError;
use nl2bi_core::sqlgen::GenerateError;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl Problem {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.code {
            "catalog_unavailable" => 2,
            "resolution_none" | "resolution_failed" => 3,
            "no_covering_view" => 4,
            "unsupported_intent" | "invalid_ir" | "generation_failed" | "translation_failed" => 5,
            _ => 1,
        }
    }
}

impl From<&PipelineError> for Problem {
    fn from(e: &PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::ResolutionNone => Problem::new(422, "resolution_none", msg),
            PipelineError::Resolve(ResolveError::Backend(_)) => {
                Problem::new(502, "resolver_unavailable", msg)
            }
            PipelineError::Resolve(_) => Problem::new(422, "resolution_failed", msg),
            PipelineError::Selection { resolved, error } => {
                match error {
                    // The failure timestamp is wall-clock and stays out of
                    // the body so that responses are reproducible.
                    SelectionError::NoCoveringView(rec) => {
                        Problem::new(422, "no_covering_view", msg).with_details(json!({
                            "resolved": resolved,
                            "required_columns": rec.required_columns,
                            "join_candidates": rec.join_candidates,
                        }))
                    }
                    SelectionError::EmptyRequest => Problem::new(422, "no_required_columns", msg)
                        .with_details(json!({ "resolved": resolved })),
                }
            }
            PipelineError::Plan { resolved, error } => {
                let (status, code, violations) = match error {
                    PlanError::UnsupportedIntent(_) => (422, "unsupported_intent", json!([])),
                    PlanError::Backend(_) => (502, "model_unavailable", json!([])),
                    PlanError::Translation { violations, .. } => {
                        (502, "translation_failed", json!(violations))
                    }
                    PlanError::Invalid(v) => (422, "invalid_ir", json!(v)),
                };
                Problem::new(status, code, msg).with_details(json!({
                    "resolved": resolved,
                    "violations": violations,
                }))
            }
            PipelineError::Generate { resolved, error } => {
                let violations = match error {
                    GenerateError::Invalid(v) => json!(v),
                    GenerateError::WindowOutOfRange => json!([]),
                };
                Problem::new(422, "generation_failed", msg).with_details(json!({
                    "resolved": resolved,
                    "violations": violations,
                }))
            }
        }
    }
}
