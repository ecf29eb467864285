use chrono::NaiveDate;
use nl2bi_core::catalog::Catalog;
use nl2bi_core::dialogue::{LexicalClassifier, SessionState, SlotMergeResolver, Source};
use nl2bi_core::pipeline::{Pipeline, PipelineError};
use nl2bi_core::planner::RuleTranslator;
use nl2bi_core::selector::{AdvisorState, MinColumnSelector, SelectionError};
use nl2bi_core::sqlgen::{Dialect, GenerateOptions};

fn catalog() -> Catalog {
    Catalog::from_json(include_str!("../../../docs/catalog.json")).unwrap()
}

fn run(
    cat: &Catalog,
    turns: &[&str],
) -> Vec<Result<nl2bi_core::pipeline::QueryResponse, PipelineError>> {
    let classifier = LexicalClassifier {
        lexicon: cat.lexicon(),
    };
    let resolver = SlotMergeResolver {
        lexicon: cat.lexicon(),
    };
    let pipeline = Pipeline {
        catalog: cat,
        classifier: &classifier,
        resolver: &resolver,
        selector: &MinColumnSelector,
        translator: &RuleTranslator,
        options: GenerateOptions::default(),
        today: NaiveDate::from_ymd_opt(2024, 1, 26).unwrap(),
    };
    let mut session = SessionState::new("s-1");
    let mut advisor = AdvisorState::default();
    turns
        .iter()
        .map(|t| pipeline.run(&mut session, &mut advisor, t, 0))
        .collect()
}

#[test]
fn three_turn_playback_dialogue() {
    let cat = catalog();
    let out = run(
        &cat,
        &[
            "The short video playback volume for the past seven days",
            "What about the week-on-week comparison?",
            "What about the playback duration?",
        ],
    );
    let r: Vec<_> = out.into_iter().map(Result::unwrap).collect();
    assert_eq!(r[0].resolved.source, Source::Direct);
    assert_eq!(r[0].view_id, "chatbi_demo_dataset");
    assert!(r[0].sql.text.contains("toDate(event_day) >= '2024-01-19'"));
    assert!(r[0].sql.text.contains("toDate(event_day) <= '2024-01-25'"));

    assert_eq!(r[1].resolved.source, Source::Predicted);
    assert_eq!(r[1].sql.join_count, 1);
    assert!(r[1].sql.text.contains("toDate(event_day) >= '2024-01-12'"));

    assert_eq!(r[2].resolved.source, Source::Predicted);
    assert_eq!(r[2].view_id, "t6847");
    assert!(r[2].sql.text.contains("(sum(staytime) / 60)"));
    assert_eq!(r[2].sql.join_count, 1);
    for x in &r {
        assert!(x.structural_check.ok, "{:?}", x.structural_check);
        assert_eq!(x.ir["view_id"], x.view_id.as_str());
    }
    assert_eq!(
        r[2].ir["virtual_rules"]["stay_time_min"],
        "sum(staytime) / 60"
    );
}

#[test]
fn share_count_dialogue_reaches_two_comparisons() {
    let cat = catalog();
    let out = run(
        &cat,
        &[
            "The short video share count by city in Beijing and Tianjin for the past seven days",
            "What about the week-on-week comparison?",
            "And day-over-day?",
        ],
    );
    let last = out.into_iter().last().unwrap().unwrap();
    assert_eq!(
        last.resolved.text.as_deref(),
        Some(
            "short video share count by city in Beijing and Tianjin for the past seven days \
             with week-on-week and day-over-day comparison"
        )
    );
    assert_eq!(last.sql.subquery_count, 3);
    assert_eq!(last.sql.join_count, 2);
    assert!(last.sql.text.contains("AS `mt_4`"));
    assert!(last.sql.text.contains("AS `mt_5`"));
    assert!(last.structural_check.ok);
}

#[test]
fn follow_up_without_anchor() {
    let cat = catalog();
    let out = run(&cat, &["What about Tianjin?"]);
    assert_eq!(out[0], Err(PipelineError::ResolutionNone));
}

#[test]
fn uncoverable_question_is_a_selection_failure() {
    let cat = catalog();
    let out = run(&cat, &["unique visitors by city yesterday"]);
    match &out[0] {
        Err(PipelineError::Selection {
            error: SelectionError::NoCoveringView(rec),
            ..
        }) => {
            assert_eq!(rec.required_columns, ["city", "event_day", "uv"]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn generic_dialect_per_day_new_users() {
    let cat = catalog();
    let classifier = LexicalClassifier {
        lexicon: cat.lexicon(),
    };
    let resolver = SlotMergeResolver {
        lexicon: cat.lexicon(),
    };
    let pipeline = Pipeline {
        catalog: &cat,
        classifier: &classifier,
        resolver: &resolver,
        selector: &MinColumnSelector,
        translator: &RuleTranslator,
        options: GenerateOptions {
            dialect: Dialect::Generic,
            null_guard: false,
        },
        today: NaiveDate::from_ymd_opt(2024, 1, 26).unwrap(),
    };
    let mut session = SessionState::new("s");
    let mut advisor = AdvisorState::default();
    let r = pipeline
        .run(
            &mut session,
            &mut advisor,
            "How many new users were added per day in the past three days?",
            0,
        )
        .unwrap();
    assert_eq!(r.view_id, "t6628");
    assert_eq!(
        r.sql.text,
        "SELECT event_day, COUNT(DISTINCT uid)\nFROM t6628\nWHERE is_video_new = 1\n\
         AND event_day BETWEEN '2024-01-23' AND '2024-01-25'\nGROUP BY event_day\n\
         ORDER BY event_day ASC, COUNT(DISTINCT uid) DESC\nLIMIT 10000"
    );
    assert_eq!(advisor.hits["t6628"], 1);
}
