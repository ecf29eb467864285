use chrono::NaiveDate;
use nl2bi_core::catalog::Catalog;
use nl2bi_core::ir::{
    Aggregation, AnalyticIr, Comparison, ComparisonKind, Direction, Filter, FilterOp, Literal,
    MetricRef, OrderKey, TimeRange, TimeWindow,
};
use nl2bi_core::sql_lex::{tokenize, Token};
use nl2bi_core::sqlgen::{
    generate, structural_check, CheckViolation, Dialect, GenerateOptions, Template,
};
use nl2bi_core::time::{Offset, RelativeTime, TimeUnit};

fn catalog() -> Catalog {
    Catalog::from_json(include_str!("../../../docs/catalog.json")).unwrap()
}

fn day(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn today() -> NaiveDate {
    day("2024-01-26")
}

fn opts(dialect: Dialect) -> GenerateOptions {
    GenerateOptions {
        dialect,
        null_guard: false,
    }
}

/// Share count per day and city in two cities over a week, with week and
/// day comparisons.
fn share_count_ir() -> AnalyticIr {
    let mut ir = AnalyticIr::new("chatbi_demo_dataset");
    ir.dimensions = vec!["event_day".into(), "city".into()];
    ir.metrics = vec![MetricRef::new("share_icon_cnt", Aggregation::Sum)];
    ir.filters = vec![Filter::new(
        "city",
        FilterOp::In,
        vec![
            Literal::Str("Beijing".into()),
            Literal::Str("Tianjin".into()),
        ],
    )];
    ir.time = Some(TimeWindow {
        column: "event_day".into(),
        range: TimeRange::Absolute {
            start: day("2024-01-19"),
            end: day("2024-01-25"),
        },
    });
    ir.comparisons = vec![
        Comparison::named(ComparisonKind::WeekOverWeek),
        Comparison::named(ComparisonKind::DayOverDay),
    ];
    ir.with_default_aliases()
}

/// Reference comparison query as published, including its typesetting line
/// breaks, a constant `a` column and backtick-quoted city values.
const REFERENCE: &str = r#"SELECT table_1Week_l.`xc_1` AS `xc_1`,
       table_1Week_l.`xc_2` AS `xc_2`,
       table_1Week_l.`mt_3` AS `mt_3`,
       (table_1Week_l.`mt_3` - table_1Week_l.
   `mt_4`) / table_1Week_l.`mt_4` AS `mt_4`,
       (table_1Week_l.`mt_3` - table_1Day.
   `mt_3`) / table_1Day.`mt_3` AS `mt_5`
FROM
  (SELECT table_origin.`xc_1` AS `xc_1`,
          table_origin.`xc_2` AS `xc_2`,
          table_origin.`mt_3` AS `mt_3`,
          table_origin.`a` AS `a`,
          table_1Week.`mt_3` AS `mt_4`
   FROM
     (SELECT toDate(toDate(event_day)) AS
     `xc_1`,
             city AS `xc_2`,
             sum(share_icon_cnt) AS `mt_3`,
             1 AS a
      FROM `test`.`chatbi_demo_dataset`
      WHERE toDate(event_day) >= '2024-01-19'
        AND toDate(event_day) <= '2024-01-25'
        AND city IN (`Beijing`, `Tianjin`)
      GROUP BY xc_1,
               xc_2) AS `table_origin`
   LEFT OUTER JOIN
     (SELECT toDate(dateAdd(WEEK, 1, toDate(
     toDate(event_day)))) AS `xc_1`,
             city AS `xc_2`,
             sum(share_icon_cnt) AS `mt_3`
      FROM `test`.`chatbi_demo_dataset`
      WHERE toDate(event_day) >= '2024-01-12'
        AND toDate(event_day) <= '2024-01-18'
        AND city IN (`Beijing`, `Tianjin`)
      GROUP BY xc_1,
               xc_2) AS `table_1Week` ON
      table_origin.`xc_1` = table_1Week.`xc_1`
   AND table_origin.`xc_2` = table_1Week.
       `xc_2`) AS `table_1Week_l`
LEFT OUTER JOIN
  (SELECT toDate(dateAdd(DAY, 1, toDate(
  toDate(event_day)))) AS `xc_1`,
          city AS `xc_2`,
          sum(share_icon_cnt) AS `mt_3`
   FROM `test`.`chatbi_demo_dataset`
   WHERE toDate(event_day) >= '2024-01-18'
     AND toDate(event_day) <= '2024-01-24'
     AND city IN (`Beijing`, `Tianjin`)
   GROUP BY xc_1,
            xc_2) AS `table_1Day` ON
      table_1Week_l.`xc_1` = table_1Day.`xc_1`
AND table_1Week_l.`xc_2` = table_1Day.`xc_2`
ORDER BY `xc_1` ASC,
         `mt_3` DESC
LIMIT 10000"#;

fn tokens(sql: &str) -> Vec<Token> {
    tokenize(sql)
        .unwrap()
        .into_iter()
        .map(|s| s.token)
        .collect()
}

/// The reference tokens minus the unused constant column, with the city
/// values read as the string literals they stand for.
fn reference_tokens() -> Vec<Token> {
    let cleaned = REFERENCE
        .replace("table_origin.`a` AS `a`,", "")
        .replace(",\n             1 AS a", "")
        .replace("(`Beijing`, `Tianjin`)", "('Beijing', 'Tianjin')");
    tokens(&cleaned)
}

#[test]
fn comparison_query_matches_reference_tokens() {
    let cat = catalog();
    let art = generate(
        &share_count_ir(),
        &cat,
        today(),
        opts(Dialect::ClickhouseLike),
    )
    .unwrap();
    assert_eq!(tokens(&art.sql), reference_tokens());
    assert_eq!(art.subquery_count, 3);
    assert_eq!(art.join_count, 2);
    assert_eq!(art.template, Template::ComparisonJoin);
    assert_eq!(
        art.referenced_columns.iter().collect::<Vec<_>>(),
        ["city", "event_day", "share_icon_cnt"]
    );
    structural_check(&art, &share_count_ir(), &cat).unwrap();
}

#[test]
fn comparison_query_layout() {
    let cat = catalog();
    let art = generate(
        &share_count_ir(),
        &cat,
        today(),
        opts(Dialect::ClickhouseLike),
    )
    .unwrap();
    let expected = "\
SELECT table_1Week_l.`xc_1` AS `xc_1`,
       table_1Week_l.`xc_2` AS `xc_2`,
       table_1Week_l.`mt_3` AS `mt_3`,
       (table_1Week_l.`mt_3` - table_1Week_l.`mt_4`) / table_1Week_l.`mt_4` AS `mt_4`,
       (table_1Week_l.`mt_3` - table_1Day.`mt_3`) / table_1Day.`mt_3` AS `mt_5`
FROM
  (SELECT table_origin.`xc_1` AS `xc_1`,
          table_origin.`xc_2` AS `xc_2`,
          table_origin.`mt_3` AS `mt_3`,
          table_1Week.`mt_3` AS `mt_4`
   FROM
     (SELECT toDate(toDate(event_day)) AS `xc_1`,
             city AS `xc_2`,
             sum(share_icon_cnt) AS `mt_3`
      FROM `test`.`chatbi_demo_dataset`
      WHERE toDate(event_day) >= '2024-01-19'
        AND toDate(event_day) <= '2024-01-25'
        AND city IN ('Beijing', 'Tianjin')
      GROUP BY xc_1,
               xc_2) AS `table_origin`
   LEFT OUTER JOIN
     (SELECT toDate(dateAdd(WEEK, 1, toDate(toDate(event_day)))) AS `xc_1`,
             city AS `xc_2`,
             sum(share_icon_cnt) AS `mt_3`
      FROM `test`.`chatbi_demo_dataset`
      WHERE toDate(event_day) >= '2024-01-12'
        AND toDate(event_day) <= '2024-01-18'
        AND city IN ('Beijing', 'Tianjin')
      GROUP BY xc_1,
               xc_2) AS `table_1Week` ON table_origin.`xc_1` = table_1Week.`xc_1`
   AND table_origin.`xc_2` = table_1Week.`xc_2`) AS `table_1Week_l`
LEFT OUTER JOIN
  (SELECT toDate(dateAdd(DAY, 1, toDate(toDate(event_day)))) AS `xc_1`,
          city AS `xc_2`,
          sum(share_icon_cnt) AS `mt_3`
   FROM `test`.`chatbi_demo_dataset`
   WHERE toDate(event_day) >= '2024-01-18'
     AND toDate(event_day) <= '2024-01-24'
     AND city IN ('Beijing', 'Tianjin')
   GROUP BY xc_1,
            xc_2) AS `table_1Day` ON table_1Week_l.`xc_1` = table_1Day.`xc_1`
AND table_1Week_l.`xc_2` = table_1Day.`xc_2`
ORDER BY `xc_1` ASC,
         `mt_3` DESC
LIMIT 10000";
    assert_eq!(art.sql, expected);
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
    ir.order_by = vec![OrderKey::new("xc_1", Direction::Asc)];
    ir.with_default_aliases()
}

#[test]
fn per_day_new_users_generic() {
    let cat = catalog();
    let art = generate(&new_users_ir(), &cat, today(), opts(Dialect::Generic)).unwrap();
    assert_eq!(
        art.sql,
        "SELECT event_day, COUNT(DISTINCT uid)\n\
         FROM t6628\n\
         WHERE is_video_new = 1\n\
         AND event_day BETWEEN '2024-01-23' AND '2024-01-25'\n\
         GROUP BY event_day\n\
         ORDER BY event_day ASC\n\
         LIMIT 10000"
    );
    assert_eq!(art.template, Template::FilteredAggregate);
    assert_eq!(art.subquery_count, 0);
    structural_check(&art, &new_users_ir(), &cat).unwrap();

    // the window follows the injected clock
    let later = generate(
        &new_users_ir(),
        &cat,
        day("2024-03-01"),
        opts(Dialect::Generic),
    )
    .unwrap();
    assert!(later.sql.contains("BETWEEN '2024-02-27' AND '2024-02-29'"));
}

#[test]
fn virtual_metric_without_dimensions() {
    let cat = catalog();
    let mut ir = AnalyticIr::new("t6847");
    ir.metrics = vec![MetricRef::new("dau", Aggregation::None)];
    ir.time = Some(TimeWindow {
        column: "event_day".into(),
        range: TimeRange::Relative(RelativeTime::Yesterday),
    });
    let ir = ir.with_default_aliases();
    let art = generate(&ir, &cat, today(), opts(Dialect::ClickhouseLike)).unwrap();
    assert_eq!(
        art.sql,
        "SELECT (count( distinct if(uid is not null, uid, null) )) AS `mt_1`\n\
         FROM `t6847`\n\
         WHERE toDate(event_day) >= '2024-01-25'\n  AND toDate(event_day) <= '2024-01-25'\n\
         ORDER BY `mt_1` DESC\n\
         LIMIT 10000"
    );
    assert!(!art.sql.contains("GROUP BY"));
    assert_eq!(
        art.referenced_columns.iter().collect::<Vec<_>>(),
        ["event_day", "uid"]
    );
    structural_check(&art, &ir, &cat).unwrap();
}

#[test]
fn virtual_rules_are_inlined_verbatim() {
    let cat = catalog();
    for (name, rule) in [
        ("dau", "count( distinct if(uid is not null, uid, null) )"),
        ("stay_time_min", "sum(staytime) / 60"),
        ("stay_time_per", "sum(staytime)/60/count(uid)"),
    ] {
        let mut ir = AnalyticIr::new("t6847");
        ir.dimensions = vec!["app_id".into()];
        ir.metrics = vec![MetricRef::new(name, Aggregation::None)];
        let ir = ir.with_default_aliases();
        for dialect in [Dialect::ClickhouseLike, Dialect::Generic] {
            let art = generate(&ir, &cat, today(), opts(dialect)).unwrap();
            assert!(art.sql.contains(&format!("({rule})")), "{}", art.sql);
            assert_eq!(art.template, Template::SimpleAggregate);
            structural_check(&art, &ir, &cat).unwrap();
        }
    }
}

#[test]
fn single_comparison_ratio_shape() {
    let cat = catalog();
    let mut ir = share_count_ir();
    ir.dimensions.clear();
    ir.comparisons.truncate(1);
    ir.metrics[0].alias.clear();
    let ir = ir.with_default_aliases();
    let art = generate(&ir, &cat, today(), opts(Dialect::ClickhouseLike)).unwrap();
    assert!(art
        .sql
        .contains("(table_origin.`mt_1` - table_1Week.`mt_1`) / table_1Week.`mt_1` AS `mt_2`"));
    // no dimensions: the one-row aggregates join on a constant condition
    assert!(art.sql.contains(") AS `table_1Week` ON 1 = 1"));
    assert_eq!(art.subquery_count, 2);
    structural_check(&art, &ir, &cat).unwrap();
}

#[test]
fn three_comparisons_nest_left_deep() {
    let cat = catalog();
    let mut ir = share_count_ir();
    ir.comparisons
        .push(Comparison::named(ComparisonKind::YearOverYear));
    let art = generate(&ir, &cat, today(), opts(Dialect::ClickhouseLike)).unwrap();
    assert_eq!(art.subquery_count, 4);
    assert!(art.sql.contains("AS `table_1Day_l`"));
    assert!(art
        .sql
        .contains("(table_1Day_l.`mt_3` - table_1Day_l.`mt_4`) / table_1Day_l.`mt_4` AS `mt_4`"));
    assert!(art
        .sql
        .contains("(table_1Day_l.`mt_3` - table_1Year.`mt_3`) / table_1Year.`mt_3` AS `mt_6`"));
    assert!(art.sql.contains("WHERE toDate(event_day) >= '2023-01-19'"));
    structural_check(&art, &ir, &cat).unwrap();
}

#[test]
fn null_guard_and_suffix_aliases() {
    let cat = catalog();
    let mut ir = share_count_ir();
    ir.comparisons = vec![Comparison {
        alias_suffix: Some("wow".into()),
        ..Comparison::custom(Offset::new(TimeUnit::Week, 2))
    }];
    let options = GenerateOptions {
        dialect: Dialect::Generic,
        null_guard: true,
    };
    let art = generate(&ir, &cat, today(), options).unwrap();
    assert!(art.sql.contains(
        "(table_origin.\"mt_3\" - table_2Week.\"mt_3\") / NULLIF(table_2Week.\"mt_3\", 0) AS \"mt_3_wow\""
    ));
    assert!(art
        .sql
        .contains("DATE_ADD(event_day, INTERVAL 2 WEEK) AS \"xc_1\""));
    assert!(art
        .sql
        .contains("event_day BETWEEN '2024-01-05' AND '2024-01-11'"));
    structural_check(&art, &ir, &cat).unwrap();
}

#[test]
fn generation_is_deterministic() {
    let cat = catalog();
    let a = generate(
        &share_count_ir(),
        &cat,
        today(),
        opts(Dialect::ClickhouseLike),
    )
    .unwrap();
    let b = generate(
        &share_count_ir(),
        &cat,
        today(),
        opts(Dialect::ClickhouseLike),
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn check_rejects_injected_faults() {
    let cat = catalog();
    let ir = share_count_ir();
    let art = generate(&ir, &cat, today(), opts(Dialect::ClickhouseLike)).unwrap();

    let mut bad = art.clone();
    bad.sql = bad.sql.replacen("sum(share_icon_cnt)", "sum(fake_col)", 1);
    let v = structural_check(&bad, &ir, &cat).unwrap_err();
    assert_eq!(
        v,
        vec![CheckViolation::UnknownIdentifier("fake_col".into())]
    );
    assert_eq!(v[0].to_string(), "unknown identifier fake_col");

    let mut bad = art.clone();
    bad.sql = bad
        .sql
        .replacen("toDate(toDate(event_day))", "toDate(toDate(event_day)", 1);
    assert!(structural_check(&bad, &ir, &cat)
        .unwrap_err()
        .contains(&CheckViolation::UnbalancedParens));

    let mut bad = art.clone();
    bad.sql = bad.sql.replace("\nLIMIT 10000", "");
    assert!(structural_check(&bad, &ir, &cat)
        .unwrap_err()
        .contains(&CheckViolation::MissingLimit(10000)));

    let mut bad = art.clone();
    bad.sql = bad.sql.replacen("'Beijing'", "'Beijing", 1);
    assert!(matches!(
        structural_check(&bad, &ir, &cat).unwrap_err()[0],
        CheckViolation::Lex(_)
    ));

    let mut one = ir.clone();
    one.comparisons.truncate(1);
    let v = structural_check(&art, &one, &cat).unwrap_err();
    assert!(v.contains(&CheckViolation::JoinCount {
        expected: 1,
        found: 2
    }));
}
