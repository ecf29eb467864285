//! Proptest strategies.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use nl2bi_core::catalog::{Catalog, ColumnDef, DataType, Lexicon, Role, ViewDef, VirtualColumn};
use nl2bi_core::ir::{
    Aggregation, AnalyticIr, Comparison, ComparisonKind, Direction, Filter, FilterOp, Literal,
    MetricRef, OrderKey, TimeRange, TimeWindow,
};
use nl2bi_core::sqlgen::Dialect;
use nl2bi_core::time::{Offset, RelativeTime, TimeUnit};
use proptest::prelude::*;
use proptest::sample::{select, subsequence};

use crate::demo_catalog;

pub const MAX_VIEWS: usize = 8;
pub const MAX_COLUMNS: usize = 30;

const VIEW_IDS: [&str; 12] = [
    "v_orders", "v_users", "v_events", "t100", "t2", "t30", "agg_day", "agg_city", "a", "b",
    "zz_last", "m_mix",
];

fn physical_pool() -> Vec<String> {
    (0..40).map(|i| format!("c{i:02}")).collect()
}

fn virtual_pool() -> Vec<String> {
    (0..10).map(|i| format!("x{i}")).collect()
}

fn arb_view(id: &'static str) -> impl Strategy<Value = ViewDef> {
    (
        subsequence(physical_pool(), 0..MAX_COLUMNS),
        subsequence(virtual_pool(), 0..4),
    )
        .prop_map(move |(cols, virt)| {
            let mut columns = vec![ColumnDef::new("event_day", Role::Dimension, DataType::Date)];
            for c in cols {
                let n: u32 = c[1..].parse().expect("pool names are numbered");
                let (role, ty) = if n.is_multiple_of(2) {
                    (Role::Dimension, DataType::String)
                } else {
                    (Role::Metric, DataType::Integer)
                };
                columns.push(ColumnDef::new(c, role, ty));
            }
            ViewDef {
                view_id: id.into(),
                source_table: format!("db.{id}"),
                columns,
                virtual_columns: virt
                    .into_iter()
                    .map(|v| VirtualColumn::new(v, "count(event_day)"))
                    .collect(),
            }
        })
}

/// A catalog of 1 to 8 views with up to 30 physical columns each.
pub fn arb_catalog() -> impl Strategy<Value = Catalog> {
    subsequence(VIEW_IDS.to_vec(), 1..=MAX_VIEWS)
        .prop_shuffle()
        .prop_flat_map(|ids| ids.into_iter().map(arb_view).collect::<Vec<_>>())
        .prop_map(|views| {
            Catalog::new(views, Lexicon::default()).expect("generated views are valid")
        })
}

/// A catalog and a non-empty column request. Half the requests are drawn
/// from a single view so that most of them can be covered.
pub fn arb_selection_case() -> impl Strategy<Value = (Catalog, BTreeSet<String>)> {
    arb_catalog().prop_flat_map(|cat| {
        let mut all: Vec<String> = physical_pool();
        all.extend(virtual_pool());
        all.push("event_day".into());
        let views: Vec<Vec<String>> = cat
            .views()
            .iter()
            .map(|v| {
                v.columns
                    .iter()
                    .map(|c| c.name.clone())
                    .chain(v.virtual_columns.iter().map(|c| c.name.clone()))
                    .collect()
            })
            .collect();
        let from_view = (0..views.len()).prop_flat_map(move |i| {
            let cols = views[i].clone();
            let n = cols.len();
            subsequence(cols, 1..=n.min(5))
        });
        let anywhere = subsequence(all, 1..=5);
        let req = prop_oneof![from_view, anywhere]
            .prop_map(|cols| cols.into_iter().collect::<BTreeSet<String>>());
        (Just(cat), req)
    })
}

const STRINGS: [&str; 6] = ["Beijing", "Tianjin", "Shanghai", "O'Hare", "a b", "x\\y"];

fn arb_literal(ty: DataType) -> BoxedStrategy<Literal> {
    match ty {
        DataType::Integer | DataType::Float => (-5i64..100).prop_map(Literal::Int).boxed(),
        _ => select(STRINGS.to_vec())
            .prop_map(|s| Literal::Str(s.into()))
            .boxed(),
    }
}

const OPS: [FilterOp; 9] = [
    FilterOp::Eq,
    FilterOp::Neq,
    FilterOp::In,
    FilterOp::NotIn,
    FilterOp::Lt,
    FilterOp::Lte,
    FilterOp::Gt,
    FilterOp::Gte,
    FilterOp::Between,
];

fn arb_filter(columns: Vec<(String, DataType)>) -> impl Strategy<Value = Filter> {
    (select(columns), select(OPS.to_vec())).prop_flat_map(|((col, ty), op)| {
        let n = match op {
            FilterOp::In | FilterOp::NotIn => 1..=3usize,
            FilterOp::Between => 2..=2,
            _ => 1..=1,
        };
        prop::collection::vec(arb_literal(ty), n)
            .prop_map(move |values| Filter::new(col.clone(), op, values))
    })
}

pub fn arb_relative() -> impl Strategy<Value = RelativeTime> {
    prop_oneof![
        Just(RelativeTime::Yesterday),
        (1u32..=60).prop_map(RelativeTime::LastDays),
        (1u32..=8).prop_map(RelativeTime::LastWeeks),
        (1u32..=12).prop_map(RelativeTime::LastMonths),
        Just(RelativeTime::ThisWeek),
        Just(RelativeTime::ThisMonth),
        Just(RelativeTime::ThisYear),
        Just(RelativeTime::PreviousWeek),
        Just(RelativeTime::PreviousMonth),
        Just(RelativeTime::PreviousYear),
    ]
}

pub fn arb_date(from_year: i32, to_year: i32) -> impl Strategy<Value = NaiveDate> {
    let base = NaiveDate::from_ymd_opt(from_year, 1, 1).expect("valid year");
    let span = (to_year - from_year + 1) as u64 * 365;
    (0..span).prop_map(move |d| base + Days::new(d))
}

fn arb_range() -> impl Strategy<Value = TimeRange> {
    prop_oneof![
        arb_relative().prop_map(TimeRange::Relative),
        (arb_date(2015, 2030), 0u64..60).prop_map(|(start, len)| TimeRange::Absolute {
            start,
            end: start + Days::new(len),
        }),
    ]
}

fn comparison_pool() -> Vec<Comparison> {
    vec![
        Comparison::named(ComparisonKind::DayOverDay),
        Comparison::named(ComparisonKind::WeekOverWeek),
        Comparison::named(ComparisonKind::MonthOverMonth),
        Comparison::named(ComparisonKind::YearOverYear),
        Comparison::custom(Offset::new(TimeUnit::Day, 3)),
        Comparison::custom(Offset::new(TimeUnit::Week, 2)),
        Comparison::custom(Offset::new(TimeUnit::Month, 6)),
    ]
}

fn arb_comparisons() -> impl Strategy<Value = Vec<Comparison>> {
    (
        subsequence(comparison_pool(), 0..=3).prop_shuffle(),
        prop::collection::vec(any::<bool>(), 3),
    )
        .prop_map(|(mut cmps, suffixed)| {
            for (j, c) in cmps.iter_mut().enumerate() {
                if suffixed[j] {
                    c.alias_suffix = Some(format!("r{j}"));
                }
            }
            cmps
        })
}

const AGGS: [Aggregation; 6] = [
    Aggregation::Sum,
    Aggregation::Count,
    Aggregation::CountDistinct,
    Aggregation::Avg,
    Aggregation::Min,
    Aggregation::Max,
];

/// Random valid IR for `view` of `catalog`.
pub fn arb_ir_for(catalog: &Catalog, view_id: &str) -> BoxedStrategy<AnalyticIr> {
    let view = catalog.view(view_id).expect("view exists").clone();
    let time_col = catalog.time_column().to_string();
    let dims: Vec<String> = view
        .columns
        .iter()
        .filter(|c| c.role == Role::Dimension)
        .map(|c| c.name.clone())
        .collect();
    let mut metrics: Vec<(String, Aggregation)> = Vec::new();
    for c in &view.columns {
        for a in AGGS {
            metrics.push((c.name.clone(), a));
        }
    }
    metrics.extend(
        view.virtual_columns
            .iter()
            .map(|v| (v.name.clone(), Aggregation::None)),
    );
    let mut filterable: Vec<(String, DataType)> = view
        .columns
        .iter()
        .filter(|c| c.name != time_col)
        .map(|c| (c.name.clone(), c.data_type))
        .collect();
    filterable.extend(
        view.virtual_columns
            .iter()
            .map(|v| (v.name.clone(), DataType::Integer)),
    );
    let n_dims = dims.len();
    let filters = if filterable.is_empty() {
        Just(Vec::new()).boxed()
    } else {
        prop::collection::vec(arb_filter(filterable), 0..=3).boxed()
    };

    (
        subsequence(dims, 0..=n_dims).prop_shuffle(),
        prop::collection::vec(select(metrics), 1..=3),
        filters,
        prop::option::of(arb_range()),
        arb_comparisons(),
        prop::collection::vec((any::<bool>(), any::<bool>()), 16),
        1u64..=100_000,
    )
        .prop_map(move |(dims, metrics, filters, range, cmps, order, limit)| {
            let mut ir = AnalyticIr::new(view.view_id.clone());
            ir.dimensions = dims;
            ir.metrics = metrics
                .into_iter()
                .map(|(c, a)| MetricRef::new(c, a))
                .collect();
            ir.filters = filters;
            ir.time = range.map(|range| TimeWindow {
                column: time_col.clone(),
                range,
            });
            if ir.time.is_some() {
                ir.comparisons = cmps;
            }
            ir.limit = limit;
            let ir = ir.with_default_aliases();
            let order_by = ir
                .output_aliases()
                .into_iter()
                .zip(order)
                .filter(|(_, (keep, _))| *keep)
                .map(|(a, (_, asc))| {
                    OrderKey::new(a, if asc { Direction::Asc } else { Direction::Desc })
                })
                .take(3)
                .collect();
            AnalyticIr { order_by, ..ir }
        })
        .boxed()
}

/// Random valid IR over the demo catalog.
pub fn arb_ir() -> impl Strategy<Value = AnalyticIr> {
    let cat = demo_catalog();
    let ids: Vec<String> = cat.views().iter().map(|v| v.view_id.clone()).collect();
    select(ids).prop_flat_map(move |id| arb_ir_for(&cat, &id))
}

pub fn arb_dialect() -> impl Strategy<Value = Dialect> {
    prop_oneof![Just(Dialect::ClickhouseLike), Just(Dialect::Generic)]
}

/// Utterances the lexical classifier labels complete on the demo lexicon.
pub const COMPLETE: [&str; 7] = [
    "The short video playback volume for the past seven days",
    "short video share count by city yesterday",
    "daily active users in the past 3 days",
    "playback duration this week",
    "new users per day last month",
    "share count by app in Beijing for the past two weeks",
    "playback volume in Tianjin yesterday with year-on-year comparison",
];

/// Utterances labelled incomplete on the demo lexicon.
pub const INCOMPLETE: [&str; 7] = [
    "What about Tianjin?",
    "What about the week-on-week comparison?",
    "What about the playback duration?",
    "And day-over-day?",
    "by city",
    "hello there",
    "in Shanghai please",
];

/// One turn of a random dialogue: completeness and pool index.
pub fn arb_turns(max_len: usize) -> impl Strategy<Value = Vec<(bool, usize)>> {
    prop::collection::vec((any::<bool>(), 0..COMPLETE.len()), 1..=max_len)
}

pub fn turn_text(turn: (bool, usize)) -> &'static str {
    if turn.0 {
        COMPLETE[turn.1]
    } else {
        INCOMPLETE[turn.1 % INCOMPLETE.len()]
    }
}
