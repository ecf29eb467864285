//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use chrono::NaiveDate;
use http_body_util::BodyExt;
use nl2bi::config::ServiceConfig;
use nl2bi::engine::Engine;
use nl2bi::http::{router, AppState};
use nl2bi_core::dialogue::{SessionState, Source};
use nl2bi_core::ir::{
    parse_jnm, serialize_jnm, to_jnm_value, Aggregation, AnalyticIr, Direction, Filter, FilterOp,
    Literal, MetricRef, OrderKey, TimeRange, TimeWindow,
};
use nl2bi_core::selector::{select_view, AdvisorState, MinColumnSelector, SelectionRequest};
use nl2bi_core::sqlgen::ast::{Expr, Select, TableRef};
use nl2bi_core::sqlgen::{build_query, generate, structural_check, Dialect, GenerateOptions};
use nl2bi_core::time::RelativeTime;
use nl2bi_testkit::demo_catalog;
use nl2bi_testkit::dialogue::check_dialogue;
use nl2bi_testkit::eval::{arb_semantic_case, canonical, direct, eval_select, EvalError};
use nl2bi_testkit::gen::{arb_date, arb_dialect, arb_ir, arb_selection_case, arb_turns};
use nl2bi_testkit::selection::brute_force_select;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use serde_json::{json, Value};
use tower::ServiceExt;

type Check = Result<String, String>;

fn today() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 26).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sample<S: Strategy>(strategy: &S, runner: &mut TestRunner) -> S::Value {
    strategy
        .new_tree(runner)
        .expect("strategy generates")
        .current()
}

/// Derived tables of a query, outermost first.
fn derived(sel: &Select, out: &mut Vec<String>) {
    let visit = |t: &TableRef, out: &mut Vec<String>| {
        if let TableRef::Derived { query, alias } = t {
            out.push(alias.clone());
            derived(query, out);
        }
    };
    visit(&sel.from, out);
    for j in &sel.joins {
        visit(&j.right, out);
    }
}

fn count_ratios(sel: &Select) -> usize {
    let mut n = 0;
    for i in &sel.items {
        i.expr
            .walk(&mut |e| n += matches!(e, Expr::Ratio { .. }) as usize);
    }
    n
}

fn golden_comparison_dialogue() -> Check {
    let cat = demo_catalog();
    let engine = Engine::rule(GenerateOptions::default(), Some(today()));
    let mut session = SessionState::new("acceptance");
    let turns = [
        "The short video share count by city in Beijing and Tianjin for the past seven days",
        "What about the week-on-week comparison?",
        "And day-over-day?",
    ];
    let started = Instant::now();
    let mut last = None;
    for t in turns {
        let r = engine.run_turn(&cat, &mut session, t, 0).result;
        last = Some(r.map_err(|e| format!("turn {t:?} failed: {e}"))?);
    }
    let elapsed = started.elapsed();
    let r = last.unwrap();
    ensure(r.resolved.source == Source::Predicted, || {
        "last turn was not predicted".into()
    })?;
    let sql = &r.sql.text;
    ensure(r.sql.subquery_count == 3, || {
        format!("{} subqueries", r.sql.subquery_count)
    })?;
    ensure(sql.matches("LEFT OUTER JOIN").count() == 2, || {
        "expected 2 LEFT OUTER JOINs".into()
    })?;
    for (lo, hi) in [
        ("2024-01-19", "2024-01-25"),
        ("2024-01-12", "2024-01-18"),
        ("2024-01-18", "2024-01-24"),
    ] {
        let pair = format!("toDate(event_day) >= '{lo}'\n");
        ensure(
            sql.contains(&pair) && sql.contains(&format!("<= '{hi}'")),
            || format!("window {lo}..{hi} missing"),
        )?;
    }
    ensure(
        sql.ends_with("ORDER BY `xc_1` ASC,\n         `mt_3` DESC\nLIMIT 10000"),
        || "ORDER BY / LIMIT tail differs".into(),
    )?;
    ensure(r.structural_check.ok, || {
        format!("{:?}", r.structural_check.violations)
    })?;

    let ir = parse_jnm(&r.ir.to_string()).map_err(|e| e.to_string())?;
    let q =
        build_query(&ir, &cat, today(), GenerateOptions::default()).map_err(|e| e.to_string())?;
    ensure(count_ratios(&q) == 2, || {
        format!("{} ratio expressions", count_ratios(&q))
    })?;
    let mut tables = Vec::new();
    derived(&q, &mut tables);
    ensure(
        tables == ["table_1Week_l", "table_origin", "table_1Week", "table_1Day"],
        || format!("nesting {tables:?}"),
    )?;
    let mut joins = q.joins.clone();
    if let TableRef::Derived { query, .. } = &q.from {
        joins.extend(query.joins.clone());
    }
    for j in &joins {
        let cols: Vec<String> =
            j.on.iter()
                .map(|(l, _)| match l {
                    Expr::Qualified { column, .. } => column.clone(),
                    other => format!("{other:?}"),
                })
                .collect();
        ensure(cols == ["xc_1", "xc_2"], || format!("join on {cols:?}"))?;
    }
    for e in [&q.items[3].expr, &q.items[4].expr] {
        let ok = matches!(e, Expr::Ratio { current, previous, null_guard: false }
            if matches!(**current, Expr::Qualified { .. }) && matches!(**previous, Expr::Qualified { .. }));
        ensure(ok, || format!("ratio shape {e:?}"))?;
    }
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "3 subqueries, 2 joins on (xc_1, xc_2), 3 windows, 2 ratios, {elapsed:.1?}"
    ))
}

fn new_users_ir() -> AnalyticIr {
    let mut ir = AnalyticIr::new("t6628");
    ir.dimensions = vec!["event_day".into()];
    ir.metrics = vec![MetricRef::new("uid", Aggregation::CountDistinct)];
    ir.filters = vec![Filter::new(
        "is_video_new",
        FilterOp::Eq,
        vec![Literal::Int(1)],
    )];
    ir.time = Some(TimeWindow {
        column: "event_day".into(),
        range: TimeRange::Relative(RelativeTime::LastDays(3)),
    });
    let ir = ir.with_default_aliases();
    AnalyticIr {
        order_by: vec![OrderKey::new("xc_1", Direction::Asc)],
        ..ir
    }
}

fn golden_generic_new_users() -> Check {
    let cat = demo_catalog();
    let ir = new_users_ir();
    let options = GenerateOptions {
        dialect: Dialect::Generic,
        null_guard: false,
    };
    let expected = |a: &str, b: &str| {
        format!(
            "SELECT event_day, COUNT(DISTINCT uid)\nFROM t6628\nWHERE is_video_new = 1\n\
             AND event_day BETWEEN '{a}' AND '{b}'\nGROUP BY event_day\n\
             ORDER BY event_day ASC\nLIMIT 10000"
        )
    };
    let started = Instant::now();
    for (clock, a, b) in [
        (today(), "2024-01-23", "2024-01-25"),
        (
            NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(),
            "2024-02-27",
            "2024-02-29",
        ),
        (
            NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
            "2024-12-29",
            "2024-12-31",
        ),
    ] {
        let art = generate(&ir, &cat, clock, options).map_err(|e| e.to_string())?;
        ensure(art.sql == expected(a, b), || {
            format!("clock {clock}:\n{}", art.sql)
        })?;
        structural_check(&art, &ir, &cat).map_err(|v| format!("{v:?}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("exact match under 3 clocks, {elapsed:.1?}"))
}

fn dialogue_resolution_properties() -> Check {
    let cat = demo_catalog();
    let mut runner = TestRunner::deterministic();
    let strategy = arb_turns(30);
    let mut turns_total = 0;
    for i in 0..1000 {
        let turns = sample(&strategy, &mut runner);
        turns_total += turns.len();
        check_dialogue(&cat, &turns).map_err(|e| format!("sequence {i}: {e}"))?;
    }
    Ok(format!("1000/1000 sequences ({turns_total} turns)"))
}

fn view_selection_oracle() -> Check {
    let mut runner = TestRunner::deterministic();
    let strategy = arb_selection_case();
    let (mut covered, mut uncovered) = (0, 0);
    for i in 0..500 {
        let (cat, required) = sample(&strategy, &mut runner);
        let req = SelectionRequest::new(required.clone(), "q").map_err(|e| e.to_string())?;
        let got = select_view(
            &cat,
            &MinColumnSelector,
            &req,
            &mut AdvisorState::default(),
            0,
        )
        .ok()
        .map(|v| v.view_id.clone());
        let want = brute_force_select(&cat, &required);
        ensure(got == want, || {
            format!("catalog {i}: selector {got:?}, oracle {want:?}")
        })?;
        if want.is_some() {
            covered += 1;
        } else {
            uncovered += 1;
        }
    }
    Ok(format!(
        "500/500 agree ({covered} covered, {uncovered} uncovered)"
    ))
}

fn virtual_column_fidelity() -> Check {
    let cat = demo_catalog();
    let rules = [
        ("dau", "count( distinct if(uid is not null, uid, null) )"),
        ("stay_time_min", "sum(staytime) / 60"),
        ("stay_time_per", "sum(staytime)/60/count(uid)"),
    ];
    let mut checked = 0;
    for (name, rule) in rules {
        let mut ir = AnalyticIr::new("t6847");
        ir.dimensions = vec!["app_id".into()];
        ir.metrics = vec![MetricRef::new(name, Aggregation::None)];
        ir.filters = vec![Filter::new(name, FilterOp::Gt, vec![Literal::Int(0)])];
        let ir = ir.with_default_aliases();
        let jnm = to_jnm_value(&ir, &cat).map_err(|e| e.to_string())?;
        ensure(jnm["virtual_rules"] == json!({ name: rule }), || {
            format!("virtual_rules {}", jnm["virtual_rules"])
        })?;
        for dialect in [Dialect::ClickhouseLike, Dialect::Generic] {
            let options = GenerateOptions {
                dialect,
                null_guard: false,
            };
            let art = generate(&ir, &cat, today(), options).map_err(|e| e.to_string())?;
            let inlined = format!("({rule})");
            let select = art.sql.split("\nFROM").next().unwrap_or_default();
            let having = art
                .sql
                .lines()
                .find(|l| l.starts_with("HAVING"))
                .unwrap_or_default();
            ensure(
                select.contains(&inlined) && having.contains(&inlined),
                || format!("{name} not inlined in select and HAVING:\n{}", art.sql),
            )?;
            structural_check(&art, &ir, &cat).map_err(|v| format!("{v:?}"))?;
            checked += 1;
        }
    }

    let engine = Engine::rule(GenerateOptions::default(), Some(today()));
    let mut session = SessionState::new("v");
    let r = engine
        .run_turn(
            &cat,
            &mut session,
            "daily active users in the past 3 days",
            0,
        )
        .result
        .map_err(|e| e.to_string())?;
    ensure(r.sql.text.contains(&format!("({})", rules[0].1)), || {
        r.sql.text.clone()
    })?;
    Ok(format!(
        "3 rules verbatim in {checked} generated queries and via the pipeline"
    ))
}

fn ir_round_trip_and_semantics() -> Check {
    let cat = demo_catalog();
    let mut runner = TestRunner::deterministic();
    let irs = arb_ir();
    let dialects = arb_dialect();
    let clocks = arb_date(2000, 2040);
    for i in 0..1000 {
        let ir = sample(&irs, &mut runner);
        let text = serialize_jnm(&ir, &cat).map_err(|e| format!("ir {i}: {e}"))?;
        let back = parse_jnm(&text).map_err(|e| format!("ir {i}: {e}"))?;
        ensure(back == ir, || format!("ir {i} does not round-trip: {text}"))?;
        let options = GenerateOptions {
            dialect: sample(&dialects, &mut runner),
            null_guard: i % 2 == 0,
        };
        let art = generate(&ir, &cat, sample(&clocks, &mut runner), options)
            .map_err(|e| format!("ir {i}: {e}"))?;
        structural_check(&art, &ir, &cat).map_err(|v| format!("ir {i}: {v:?}\n{}", art.sql))?;
    }

    let cases = arb_semantic_case();
    let (mut compared, mut with_values, mut zero_denominator, mut attempts) = (0, 0, 0, 0);
    while compared < 150 && attempts < 5000 {
        attempts += 1;
        let case = sample(&cases, &mut runner);
        if case.ir.comparisons.is_empty() {
            continue;
        }
        let null_guard = attempts % 3 == 0;
        let options = GenerateOptions {
            dialect: sample(&dialects, &mut runner),
            null_guard,
        };
        let far = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        let q = build_query(&case.ir, &cat, far, options).map_err(|e| e.to_string())?;
        match direct(&case.ir, &case.facts, null_guard) {
            Ok(want) => {
                let got = eval_select(&q, &case.facts).map_err(|e| format!("{e:?}"))?;
                let base = case.ir.dimensions.len() + case.ir.metrics.len();
                with_values += want.iter().any(|r| {
                    r[base..]
                        .iter()
                        .any(|v| *v != nl2bi_testkit::eval::Value::Null)
                }) as usize;
                ensure(canonical(got.rows) == canonical(want), || {
                    format!("semantic mismatch for {:?}", case.ir)
                })?;
                compared += 1;
            }
            Err(EvalError::DivisionByZero) => {
                let sql = generate(&case.ir, &cat, far, options)
                    .map_err(|e| e.to_string())?
                    .sql;
                ensure(!sql.contains("nullIf(") && !sql.contains("NULLIF("), || {
                    "zero denominator case should use raw division".into()
                })?;
                ensure(
                    eval_select(&q, &case.facts).err() == Some(EvalError::DivisionByZero),
                    || "evaluator missed a zero denominator".into(),
                )?;
                zero_denominator += 1;
            }
            Err(e) => return Err(format!("oracle failed: {e:?}")),
        }
    }
    ensure(compared >= 100, || {
        format!("only {compared} datasets compared")
    })?;
    Ok(format!(
        "1000 IRs round-trip and check; {compared} comparison datasets match \
         ({with_values} with non-null ratios), {zero_denominator} raw-division cases excluded"
    ))
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> String {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    format!("{status} {}", String::from_utf8_lossy(&bytes))
}

async fn scripted_run() -> Result<Vec<String>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let catalog = dir.path().join("catalog.json");
    std::fs::write(&catalog, demo_catalog().to_json_pretty()).map_err(|e| e.to_string())?;
    let cfg = ServiceConfig {
        catalog,
        data_dir: dir.path().join("data"),
        advisor_log: dir.path().join("data/advisor.jsonl"),
        today: Some(today()),
        ..ServiceConfig::default()
    };
    let engine = Engine::from_config(&cfg, None)?;
    let app = router(
        Arc::new(AppState::open(&cfg, engine).map_err(|e| e.to_string())?),
        None,
    );
    let mut out = Vec::new();
    let script: [(&str, &[&str]); 2] = [
        (
            "a",
            &[
                "What about Tianjin?",
                "The short video playback volume for the past seven days",
                "What about the week-on-week comparison?",
                "What about the playback duration?",
                "unique visitors by city yesterday",
            ],
        ),
        (
            "b",
            &[
                "The short video share count by city in Beijing and Tianjin for the past seven days",
                "What about the week-on-week comparison?",
                "And day-over-day?",
                "How many new users were added per day in the past three days?",
            ],
        ),
    ];
    for (_, turns) in script {
        let created = send(&app, "POST", "/api/v1/sessions", None).await;
        let id: Value = serde_json::from_str(created.split_once(' ').unwrap().1).unwrap();
        let id = id["session_id"].as_str().unwrap().to_string();
        out.push(created);
        for t in turns {
            let uri = format!("/api/v1/sessions/{id}/query");
            out.push(send(&app, "POST", &uri, Some(json!({ "utterance": t }))).await);
        }
        out.push(send(&app, "GET", &format!("/api/v1/sessions/{id}"), None).await);
    }
    out.push(send(&app, "GET", "/api/v1/advisor", None).await);
    out.push(send(&app, "GET", "/api/v1/catalog/views", None).await);
    Ok(out)
}

fn end_to_end_determinism(rt: &tokio::runtime::Runtime) -> Check {
    let a = rt.block_on(scripted_run())?;
    let b = rt.block_on(scripted_run())?;
    let ok200 = a.iter().filter(|r| r.starts_with("200 ")).count();
    ensure(ok200 >= 8, || format!("only {ok200} successful responses"))?;
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        ensure(x == y, || format!("response {i} differs"))?;
    }
    let bytes: usize = a.iter().map(String::len).sum();
    Ok(format!(
        "{} responses ({bytes} bytes) identical across two fresh services",
        a.len()
    ))
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    type Named<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
    let checks: Vec<Named> = vec![
        (
            "golden_comparison_dialogue",
            Box::new(golden_comparison_dialogue),
        ),
        (
            "golden_generic_new_users",
            Box::new(golden_generic_new_users),
        ),
        (
            "dialogue_resolution_properties",
            Box::new(dialogue_resolution_properties),
        ),
        ("view_selection_oracle", Box::new(view_selection_oracle)),
        ("virtual_column_fidelity", Box::new(virtual_column_fidelity)),
        (
            "ir_round_trip_and_semantics",
            Box::new(ir_round_trip_and_semantics),
        ),
        (
            "end_to_end_determinism",
            Box::new(|| end_to_end_determinism(&rt)),
        ),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
