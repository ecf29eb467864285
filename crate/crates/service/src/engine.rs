//! Runs one query turn for the HTTP service and the CLI alike.

use chrono::NaiveDate;
use nl2bi_core::catalog::Catalog;
use nl2bi_core::dialogue::{LexicalClassifier, SessionState, SlotMergeResolver};
use nl2bi_core::pipeline::{Pipeline, PipelineError, QueryResponse};
use nl2bi_core::planner::{ModelTranslator, RuleTranslator, Translator};
use nl2bi_core::selector::{AdvisorEvent, AdvisorState, MinColumnSelector};
use nl2bi_core::sqlgen::GenerateOptions;

use crate::backend::HttpModelBackend;
use crate::config::{ServiceConfig, TranslatorMode};

pub enum TranslatorKind {
    Rule,
    Model(ModelTranslator<HttpModelBackend>),
}

impl TranslatorKind {
    fn get(&self) -> &dyn Translator {
        match self {
            TranslatorKind::Rule => &RuleTranslator,
            TranslatorKind::Model(m) => m,
        }
    }
}

pub struct Engine {
    pub options: GenerateOptions,
    pub translator: TranslatorKind,
    /// Fixed date for relative windows; the local date when unset.
    pub today: Option<NaiveDate>,
}

/// Outcome of one turn plus the advisor events it produced.
pub struct Turn {
    pub result: Result<QueryResponse, PipelineError>,
    pub events: Vec<AdvisorEvent>,
}

impl Engine {
    pub fn rule(options: GenerateOptions, today: Option<NaiveDate>) -> Self {
        Self {
            options,
            translator: TranslatorKind::Rule,
            today,
        }
    }

    /// Builds the engine described by `cfg`. In model mode the backend
    /// blocks on `handle`, so turns must run off the async worker threads.
    pub fn from_config(
        cfg: &ServiceConfig,
        handle: Option<tokio::runtime::Handle>,
    ) -> Result<Self, String> {
        let translator = match cfg.translator {
            TranslatorMode::Rule => TranslatorKind::Rule,
            TranslatorMode::Model => {
                let handle = handle.ok_or("model mode needs an async runtime")?;
                let backend = HttpModelBackend::new(&cfg.model, handle)?;
                TranslatorKind::Model(ModelTranslator::new(backend))
            }
        };
        Ok(Self {
            options: GenerateOptions {
                dialect: cfg.dialect,
                null_guard: cfg.null_guard,
            },
            translator,
            today: cfg.today,
        })
    }

    pub fn today(&self) -> NaiveDate {
        self.today
            .unwrap_or_else(|| chrono::Local::now().date_naive())
    }

    /// Runs `utterance` against `session`. Advisor outcomes are returned as
    /// events rather than applied, so the caller owns the single writer.
    pub fn run_turn(
        &self,
        catalog: &Catalog,
        session: &mut SessionState,
        utterance: &str,
        now: u64,
    ) -> Turn {
        let classifier = LexicalClassifier {
            lexicon: catalog.lexicon(),
        };
        let resolver = SlotMergeResolver {
            lexicon: catalog.lexicon(),
        };
        let pipeline = Pipeline {
            catalog,
            classifier: &classifier,
            resolver: &resolver,
            selector: &MinColumnSelector,
            translator: self.translator.get(),
            options: self.options,
            today: self.today(),
        };
        let mut scratch = AdvisorState::default();
        let result = pipeline.run(session, &mut scratch, utterance, now);
        let mut events = Vec::new();
        for (view_id, n) in &scratch.hits {
            for _ in 0..*n {
                events.push(AdvisorEvent::Hit {
                    view_id: view_id.clone(),
                });
            }
        }
        events.extend(scratch.failures.into_iter().map(AdvisorEvent::Failure));
        Turn { result, events }
    }
}

/// Seconds since the Unix epoch, for advisor failure records.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
