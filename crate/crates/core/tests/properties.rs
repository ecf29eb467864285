use std::collections::BTreeSet;

use chrono::{Datelike, Days, NaiveDate};
use nl2bi_core::dialogue::{classify, Label};
use nl2bi_core::ir::{parse_jnm, serialize_jnm, to_jnm_value, validate};
use nl2bi_core::planner::repair_json;
use nl2bi_core::selector::{select_view, AdvisorState, MinColumnSelector, SelectionRequest};
use nl2bi_core::sqlgen::{build_query, generate, structural_check, Dialect, GenerateOptions};
use nl2bi_core::terms::extract_terms;
use nl2bi_core::time::{shift_window, DateRange, Offset, RelativeTime, TimeUnit};
use nl2bi_testkit::demo_catalog;
use nl2bi_testkit::dialogue::check_dialogue;
use nl2bi_testkit::eval::{arb_semantic_case, canonical, direct, eval_select, EvalError};
use nl2bi_testkit::gen::{
    arb_date, arb_dialect, arb_ir, arb_relative, arb_selection_case, arb_turns,
};
use nl2bi_testkit::selection::{brute_force_pairs, brute_force_select};
use proptest::prelude::*;

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        _ => 28,
    }
}

/// Calendar subtraction done by hand on (year, month, day).
fn minus(d: NaiveDate, unit: TimeUnit, n: u32) -> NaiveDate {
    let months = match unit {
        TimeUnit::Day => return d - Days::new(n.into()),
        TimeUnit::Week => return d - Days::new(7 * u64::from(n)),
        TimeUnit::Month => n as i32,
        TimeUnit::Year => 12 * n as i32,
    };
    let total = d.year() * 12 + d.month0() as i32 - months;
    let (y, m) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    NaiveDate::from_ymd_opt(y, m, d.day().min(days_in_month(y, m))).unwrap()
}

fn arb_unit() -> impl Strategy<Value = TimeUnit> {
    prop_oneof![
        Just(TimeUnit::Day),
        Just(TimeUnit::Week),
        Just(TimeUnit::Month),
        Just(TimeUnit::Year)
    ]
}

proptest! {
    #[test]
    fn shift_window_matches_calendar(start in arb_date(1990, 2060), len in 0u64..400,
                                     unit in arb_unit(), n in 1u32..30) {
        let w = DateRange::new(start, start + Days::new(len));
        let s = shift_window(w, Offset::new(unit, n)).unwrap();
        prop_assert_eq!(s.start, minus(w.start, unit, n));
        prop_assert_eq!(s.end, minus(w.end, unit, n));
        prop_assert!(s.start <= s.end);
    }

    #[test]
    fn relative_windows_end_before_today(today in arb_date(1990, 2060), t in arb_relative()) {
        let w = t.resolve(today).unwrap();
        prop_assert!(w.start <= w.end);
        prop_assert!(w.end < today);
        let yesterday = today.pred_opt().unwrap();
        match t {
            RelativeTime::PreviousWeek | RelativeTime::PreviousMonth | RelativeTime::PreviousYear => {}
            _ => prop_assert_eq!(w.end, yesterday),
        }
        if let RelativeTime::LastDays(n) = t {
            prop_assert_eq!(w.days(), i64::from(n));
        }
        if let RelativeTime::LastWeeks(n) = t {
            prop_assert_eq!(w.days(), 7 * i64::from(n));
        }
    }

    #[test]
    fn completeness_is_dimension_and_column(words in prop::collection::vec(prop::sample::select(vec![
        "playback volume", "share count", "by city", "per day", "yesterday", "past 3 days",
        "in Beijing", "what about", "week-on-week", "dau", "hello", "and", "the", "new users",
    ]), 0..8)) {
        let cat = demo_catalog();
        let text = words.join(" ");
        let terms = extract_terms(&text, cat.lexicon());
        let want = if !terms.dimensions.is_empty() && !terms.columns.is_empty() {
            Label::Complete
        } else {
            Label::Incomplete
        };
        prop_assert_eq!(classify(&text, cat.lexicon()), want);
        prop_assert_eq!(classify(&text, cat.lexicon()), classify(&text, cat.lexicon()));
        prop_assert_eq!(extract_terms(&text, cat.lexicon()), terms);
    }

    #[test]
    fn dialogue_resolution_follows_the_latest_complete_turn(turns in arb_turns(30)) {
        let cat = demo_catalog();
        if let Err(e) = check_dialogue(&cat, &turns) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn selection_matches_brute_force((cat, required) in arb_selection_case()) {
        let mut advisor = AdvisorState::default();
        let req = SelectionRequest::new(required.clone(), "q").unwrap();
        let got = select_view(&cat, &MinColumnSelector, &req, &mut advisor, 7);
        match (got, brute_force_select(&cat, &required)) {
            (Ok(v), Some(id)) => {
                prop_assert_eq!(&v.view_id, &id);
                prop_assert_eq!(advisor.hits.get(&id).copied(), Some(1));
                prop_assert!(advisor.failures.is_empty());
            }
            (Err(_), None) => {
                prop_assert_eq!(advisor.total_hits(), 0);
                prop_assert_eq!(advisor.failures.len(), 1);
                let rec = &advisor.failures[0];
                prop_assert_eq!(&rec.required_columns, &required.iter().cloned().collect::<Vec<_>>());
                let pairs = brute_force_pairs(&cat, &required);
                let expected: Vec<_> = pairs.into_iter().take(10).collect();
                prop_assert_eq!(&rec.join_candidates, &expected);
            }
            (got, want) => prop_assert!(false, "selector {:?} vs oracle {:?}", got.map(|v| &v.view_id), want),
        }
    }

    #[test]
    fn jnm_round_trips_and_sql_checks(ir in arb_ir(), dialect in arb_dialect(),
                                      null_guard in any::<bool>(), today in arb_date(2000, 2040)) {
        let cat = demo_catalog();
        prop_assert_eq!(validate(&ir, &cat), Ok(()));
        let text = serialize_jnm(&ir, &cat).unwrap();
        prop_assert_eq!(&parse_jnm(&text).unwrap(), &ir);

        let options = GenerateOptions { dialect, null_guard };
        let a = generate(&ir, &cat, today, options).unwrap();
        if let Err(v) = structural_check(&a, &ir, &cat) {
            prop_assert!(false, "{:?}\n{}", v, a.sql);
        }
        prop_assert_eq!(generate(&ir, &cat, today, options).unwrap(), a);
    }

    #[test]
    fn jnm_carries_exact_virtual_rules(ir in arb_ir()) {
        let cat = demo_catalog();
        let view = cat.view(&ir.view_id).unwrap();
        let v = to_jnm_value(&ir, &cat).unwrap();
        let rules = v["virtual_rules"].as_object().unwrap();
        let names: BTreeSet<&str> = rules.keys().map(String::as_str).collect();
        prop_assert_eq!(&names, &ir.virtual_columns(view));
        for (k, r) in rules {
            prop_assert_eq!(r.as_str().unwrap(), view.virtual_column(k).unwrap().rule.as_str());
        }
    }

    #[test]
    fn repair_json_is_idempotent(ir in arb_ir(), pre in "[^{}]{0,20}", post in "[^{}]{0,20}") {
        let cat = demo_catalog();
        let body = serialize_jnm(&ir, &cat).unwrap();
        let raw = format!("{pre}{body}{post}");
        let once = repair_json(&raw).unwrap();
        prop_assert_eq!(once, body.as_str());
        prop_assert_eq!(repair_json(once).unwrap(), once);
    }

    #[test]
    fn comparison_sql_computes_the_ratios(case in arb_semantic_case(), dialect in arb_dialect(),
                                          null_guard in any::<bool>()) {
        let cat = demo_catalog();
        let today = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        let options = GenerateOptions { dialect, null_guard };
        let query = build_query(&case.ir, &cat, today, options).unwrap();
        match direct(&case.ir, &case.facts, null_guard) {
            Ok(want) => {
                let got = eval_select(&query, &case.facts).unwrap();
                prop_assert_eq!(canonical(got.rows), canonical(want));
            }
            Err(EvalError::DivisionByZero) => {
                prop_assert!(!null_guard);
                let sql = generate(&case.ir, &cat, today, options).unwrap().sql;
                let guard = if dialect == Dialect::Generic { "NULLIF(" } else { "nullIf(" };
                prop_assert!(!sql.contains(guard));
                prop_assert_eq!(eval_select(&query, &case.facts).err(), Some(EvalError::DivisionByZero));
            }
            Err(e) => prop_assert!(false, "oracle failed: {:?}", e),
        }
    }
}
