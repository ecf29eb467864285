//! Row-level evaluation of generated queries over small in-memory tables,
//! and a direct computation of what those queries should return.
//!
//! Numbers are exact rationals so that ratios compare without rounding.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use nl2bi_core::ir::{Aggregation, AnalyticIr, ComparisonKind, FilterOp, Literal, TimeRange};
use nl2bi_core::sqlgen::ast::{CmpOp, Expr, Select, TableRef};
use nl2bi_core::time::{shift_window, DateRange, Offset, TimeUnit};
use num_rational::Ratio;
use proptest::prelude::*;
use proptest::sample::{select, subsequence};

pub type Num = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Null,
    Num(Num),
    Str(String),
    Date(NaiveDate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    DivisionByZero,
    Unsupported(String),
}

/// One row of the demo fact table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactRow {
    pub event_day: NaiveDate,
    pub city: &'static str,
    pub app_id: &'static str,
    pub is_video_new: i64,
    pub uid: String,
    pub playback_volume: i64,
    pub share_icon_cnt: i64,
    pub staytime: i64,
}

impl FactRow {
    pub fn get(&self, column: &str) -> Value {
        let int = |v: i64| Value::Num(Num::from_integer(v.into()));
        match column {
            "event_day" => Value::Date(self.event_day),
            "city" => Value::Str(self.city.into()),
            "app_id" => Value::Str(self.app_id.into()),
            "is_video_new" => int(self.is_video_new),
            "uid" => Value::Str(self.uid.clone()),
            "playback_volume" => int(self.playback_volume),
            "share_icon_cnt" => int(self.share_icon_cnt),
            "staytime" => int(self.staytime),
            _ => Value::Null,
        }
    }
}

fn lit(l: &Literal) -> Value {
    match l {
        Literal::Int(i) => Value::Num(Num::from_integer((*i).into())),
        Literal::Str(s) => Value::Str(s.clone()),
        Literal::Bool(b) => Value::Num(Num::from_integer(i128::from(*b))),
        Literal::Float(_) => Value::Null,
    }
}

fn aggregate(func: Aggregation, vals: Vec<Value>) -> Result<Value, EvalError> {
    let vals: Vec<Value> = vals.into_iter().filter(|v| *v != Value::Null).collect();
    let nums = || {
        vals.iter()
            .map(|v| match v {
                Value::Num(n) => Ok(*n),
                other => Err(EvalError::Unsupported(format!(
                    "numeric aggregate over {other:?}"
                ))),
            })
            .collect::<Result<Vec<Num>, _>>()
    };
    let count = |n: usize| Value::Num(Num::from_integer(n as i128));
    Ok(match func {
        Aggregation::Count => count(vals.len()),
        Aggregation::CountDistinct => count(vals.iter().collect::<BTreeSet<_>>().len()),
        Aggregation::Sum => {
            let n = nums()?;
            if n.is_empty() {
                Value::Null
            } else {
                Value::Num(n.into_iter().sum())
            }
        }
        Aggregation::Avg => {
            let n = nums()?;
            if n.is_empty() {
                Value::Null
            } else {
                let len = Num::from_integer(n.len() as i128);
                Value::Num(n.into_iter().sum::<Num>() / len)
            }
        }
        Aggregation::Min => vals.into_iter().min().unwrap_or(Value::Null),
        Aggregation::Max => vals.into_iter().max().unwrap_or(Value::Null),
        Aggregation::None => return Err(EvalError::Unsupported("agg none".into())),
    })
}

fn ratio(cur: Value, prev: Value, null_guard: bool) -> Result<Value, EvalError> {
    match (cur, prev) {
        (Value::Num(c), Value::Num(p)) => {
            if p == Num::from_integer(0) {
                if null_guard {
                    Ok(Value::Null)
                } else {
                    Err(EvalError::DivisionByZero)
                }
            } else {
                Ok(Value::Num((c - p) / p))
            }
        }
        (Value::Null, _) | (_, Value::Null) => Ok(Value::Null),
        other => Err(EvalError::Unsupported(format!("ratio of {other:?}"))),
    }
}

fn compare(op: CmpOp, l: &Value, r: &Value) -> Value {
    if *l == Value::Null || *r == Value::Null {
        return Value::Null;
    }
    let b = match op {
        CmpOp::Eq => l == r,
        CmpOp::Neq => l != r,
        CmpOp::Lt => l < r,
        CmpOp::Lte => l <= r,
        CmpOp::Gt => l > r,
        CmpOp::Gte => l >= r,
    };
    truth(b)
}

fn truth(b: bool) -> Value {
    Value::Num(Num::from_integer(i128::from(b)))
}

fn is_true(v: &Value) -> bool {
    matches!(v, Value::Num(n) if *n != Num::from_integer(0))
}

/// Evaluation row: values keyed by (qualifier, name). Base table columns
/// have an empty qualifier.
type Row = BTreeMap<(String, String), Value>;

/// Evaluates `e` on one row. Aggregates are not allowed here.
fn scalar(e: &Expr, row: &Row) -> Result<Value, EvalError> {
    let get = |q: &str, c: &str| {
        row.get(&(q.to_string(), c.to_string()))
            .cloned()
            .unwrap_or(Value::Null)
    };
    Ok(match e {
        Expr::Column(c) => get("", c),
        Expr::Qualified { table, column } => get(table, column),
        Expr::Literal(l) => lit(l),
        Expr::Date(d) => Value::Date(*d),
        Expr::DayOf(e) => scalar(e, row)?,
        Expr::DateAdd { offset, expr } => match scalar(expr, row)? {
            Value::Date(d) => offset.after(d).map_or(Value::Null, Value::Date),
            other => return Err(EvalError::Unsupported(format!("date add on {other:?}"))),
        },
        Expr::Compare { op, left, right } => {
            compare(*op, &scalar(left, row)?, &scalar(right, row)?)
        }
        Expr::InList {
            expr,
            negated,
            list,
        } => {
            let v = scalar(expr, row)?;
            let mut hit = false;
            for item in list {
                hit |= scalar(item, row)? == v;
            }
            truth(hit != *negated)
        }
        Expr::Between { expr, low, high } => {
            let v = scalar(expr, row)?;
            let lo = compare(CmpOp::Gte, &v, &scalar(low, row)?);
            let hi = compare(CmpOp::Lte, &v, &scalar(high, row)?);
            truth(is_true(&lo) && is_true(&hi))
        }
        Expr::Ratio {
            current,
            previous,
            null_guard,
        } => ratio(scalar(current, row)?, scalar(previous, row)?, *null_guard)?,
        Expr::True => truth(true),
        Expr::Agg { .. } => return Err(EvalError::Unsupported("aggregate outside group".into())),
        Expr::Rule(r) => return Err(EvalError::Unsupported(format!("rule {r}"))),
    })
}

/// Evaluates `e` over a group of rows. Bare columns take the value of the
/// first row.
fn grouped(e: &Expr, rows: &[Row]) -> Result<Value, EvalError> {
    match e {
        Expr::Agg { func, arg } => {
            let vals = rows
                .iter()
                .map(|r| scalar(arg, r))
                .collect::<Result<Vec<_>, _>>()?;
            aggregate(*func, vals)
        }
        Expr::Rule(r) => Err(EvalError::Unsupported(format!("rule {r}"))),
        Expr::Compare { op, left, right } => {
            Ok(compare(*op, &grouped(left, rows)?, &grouped(right, rows)?))
        }
        Expr::Ratio {
            current,
            previous,
            null_guard,
        } => ratio(
            grouped(current, rows)?,
            grouped(previous, rows)?,
            *null_guard,
        ),
        other => match rows.first() {
            Some(r) => scalar(other, r),
            None => Ok(Value::Null),
        },
    }
}

fn has_aggregate(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| found |= matches!(x, Expr::Agg { .. } | Expr::Rule(_)));
    found
}

/// Result columns with their aliases.
pub struct Output {
    pub aliases: Vec<Option<String>>,
    pub rows: Vec<Vec<Value>>,
}

fn source_rows(t: &TableRef, facts: &[FactRow]) -> Result<Vec<Row>, EvalError> {
    match t {
        TableRef::Table(_) => Ok(facts
            .iter()
            .map(|f| {
                [
                    "event_day",
                    "city",
                    "app_id",
                    "is_video_new",
                    "uid",
                    "playback_volume",
                    "share_icon_cnt",
                    "staytime",
                ]
                .iter()
                .map(|c| ((String::new(), c.to_string()), f.get(c)))
                .collect()
            })
            .collect()),
        TableRef::Derived { query, alias } => {
            let out = eval_select(query, facts)?;
            out.rows
                .into_iter()
                .map(|vals| {
                    out.aliases
                        .iter()
                        .zip(vals)
                        .map(|(a, v)| match a {
                            Some(a) => Ok(((alias.clone(), a.clone()), v)),
                            None => Err(EvalError::Unsupported("unaliased derived column".into())),
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Runs `sel` against `facts`. ORDER BY is ignored and LIMIT is applied
/// only as a bound, so callers should compare results as multisets.
pub fn eval_select(sel: &Select, facts: &[FactRow]) -> Result<Output, EvalError> {
    let mut rows = source_rows(&sel.from, facts)?;
    for j in &sel.joins {
        let right = source_rows(&j.right, facts)?;
        let mut joined = Vec::new();
        for l in rows {
            let mut matched = false;
            for r in &right {
                let mut both = l.clone();
                both.extend(r.clone());
                let mut ok = true;
                for (a, b) in &j.on {
                    ok &= is_true(&compare(CmpOp::Eq, &scalar(a, &both)?, &scalar(b, &both)?));
                }
                if ok {
                    matched = true;
                    joined.push(both);
                }
            }
            if !matched {
                joined.push(l);
            }
        }
        rows = joined;
    }
    let mut kept = Vec::new();
    for r in rows {
        let mut ok = true;
        for c in &sel.filter {
            ok &= is_true(&scalar(c, &r)?);
        }
        if ok {
            kept.push(r);
        }
    }

    let aliases = sel.items.iter().map(|i| i.alias.clone()).collect();
    let aggregated = !sel.group_by.is_empty() || sel.items.iter().any(|i| has_aggregate(&i.expr));
    let mut out = Vec::new();
    if aggregated {
        let mut groups: BTreeMap<Vec<Value>, Vec<Row>> = BTreeMap::new();
        if sel.group_by.is_empty() {
            groups.insert(Vec::new(), kept);
        } else {
            for r in kept {
                let key = sel
                    .group_by
                    .iter()
                    .map(|g| scalar(&g.expr, &r))
                    .collect::<Result<Vec<_>, _>>()?;
                groups.entry(key).or_default().push(r);
            }
        }
        for rows in groups.values() {
            let mut keep = true;
            for h in &sel.having {
                keep &= is_true(&grouped(h, rows)?);
            }
            if keep {
                out.push(
                    sel.items
                        .iter()
                        .map(|i| grouped(&i.expr, rows))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
        }
    } else {
        for r in &kept {
            out.push(
                sel.items
                    .iter()
                    .map(|i| scalar(&i.expr, r))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
    }
    if let Some(limit) = sel.limit {
        out.truncate(limit as usize);
    }
    Ok(Output { aliases, rows: out })
}

fn filter_holds(op: FilterOp, v: &Value, values: &[Literal]) -> bool {
    let vals: Vec<Value> = values.iter().map(lit).collect();
    match op {
        FilterOp::Eq => *v == vals[0],
        FilterOp::Neq => *v != vals[0],
        FilterOp::Lt => *v < vals[0],
        FilterOp::Lte => *v <= vals[0],
        FilterOp::Gt => *v > vals[0],
        FilterOp::Gte => *v >= vals[0],
        FilterOp::In => vals.contains(v),
        FilterOp::NotIn => !vals.contains(v),
        FilterOp::Between => vals[0] <= *v && *v <= vals[1],
    }
}

/// Groups the facts inside `window`, keyed by dimension values. Dates of a
/// shifted period are moved forward by `realign` to line up with the origin.
fn direct_groups(
    ir: &AnalyticIr,
    facts: &[FactRow],
    window: DateRange,
    realign: Option<Offset>,
) -> Result<BTreeMap<Vec<Value>, Vec<Value>>, EvalError> {
    let time_col = ir.time.as_ref().map(|t| t.column.as_str());
    let mut buckets: BTreeMap<Vec<Value>, Vec<&FactRow>> = BTreeMap::new();
    if ir.dimensions.is_empty() {
        buckets.insert(Vec::new(), Vec::new());
    }
    for f in facts {
        if !window.contains(f.event_day) {
            continue;
        }
        if !ir
            .filters
            .iter()
            .all(|x| filter_holds(x.op, &f.get(&x.column), &x.values))
        {
            continue;
        }
        let key = ir
            .dimensions
            .iter()
            .map(|d| match (Some(d.as_str()) == time_col, realign) {
                (true, Some(off)) => off.after(f.event_day).map_or(Value::Null, Value::Date),
                _ => f.get(d),
            })
            .collect();
        buckets.entry(key).or_default().push(f);
    }
    let mut out = BTreeMap::new();
    for (k, rows) in buckets {
        let ms = ir
            .metrics
            .iter()
            .map(|m| aggregate(m.agg, rows.iter().map(|r| r.get(&m.column)).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(k, ms);
    }
    Ok(out)
}

/// Expected result of `ir` over `facts`, computed straight from the IR
/// without going through SQL. The IR must have an absolute window.
pub fn direct(
    ir: &AnalyticIr,
    facts: &[FactRow],
    null_guard: bool,
) -> Result<Vec<Vec<Value>>, EvalError> {
    let window = match ir.time.as_ref().map(|t| t.range) {
        Some(TimeRange::Absolute { start, end }) => DateRange::new(start, end),
        _ => return Err(EvalError::Unsupported("needs an absolute window".into())),
    };
    let origin = direct_groups(ir, facts, window, None)?;
    let mut shifted = Vec::new();
    for c in &ir.comparisons {
        let w = shift_window(window, c.offset).ok_or(EvalError::Unsupported("shift".into()))?;
        shifted.push(direct_groups(ir, facts, w, Some(c.offset))?);
    }
    let mut out = Vec::new();
    for (key, ms) in origin {
        let mut row = key.clone();
        row.extend(ms.iter().cloned());
        for s in &shifted {
            let prev = s.get(&key);
            for (i, m) in ms.iter().enumerate() {
                let p = prev.map_or(Value::Null, |p| p[i].clone());
                row.push(ratio(m.clone(), p, null_guard)?);
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Sorts rows so that results can be compared as multisets.
pub fn canonical(mut rows: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    rows.sort();
    rows
}

const CITIES: [&str; 3] = ["Beijing", "Tianjin", "Shanghai"];
const APPS: [&str; 2] = ["app_a", "app_b"];

const SEMANTIC_DIMS: [&str; 4] = ["event_day", "city", "app_id", "is_video_new"];

fn semantic_metrics() -> Vec<(&'static str, Aggregation)> {
    let mut out = Vec::new();
    for c in ["playback_volume", "share_icon_cnt", "staytime"] {
        for a in [
            Aggregation::Sum,
            Aggregation::Count,
            Aggregation::CountDistinct,
            Aggregation::Avg,
            Aggregation::Min,
            Aggregation::Max,
        ] {
            out.push((c, a));
        }
    }
    out.push(("uid", Aggregation::Count));
    out.push(("uid", Aggregation::CountDistinct));
    out
}

fn arb_semantic_filter() -> impl Strategy<Value = nl2bi_core::ir::Filter> {
    use nl2bi_core::ir::Filter;
    let s = |v: &str| Literal::Str(v.into());
    prop_oneof![
        subsequence(CITIES.to_vec(), 1..=2).prop_map(move |cs| Filter::new(
            "city",
            FilterOp::In,
            cs.into_iter().map(s).collect()
        )),
        select(CITIES.to_vec()).prop_map(move |c| Filter::new("city", FilterOp::Neq, vec![s(c)])),
        (0i64..=1).prop_map(|v| Filter::new("is_video_new", FilterOp::Eq, vec![Literal::Int(v)])),
        select(APPS.to_vec()).prop_map(move |a| Filter::new("app_id", FilterOp::Eq, vec![s(a)])),
        (0i64..10).prop_map(|v| Filter::new(
            "playback_volume",
            FilterOp::Gte,
            vec![Literal::Int(v)]
        )),
        (0i64..10, 0i64..10).prop_map(|(a, b)| Filter::new(
            "staytime",
            FilterOp::Between,
            vec![Literal::Int(a.min(b)), Literal::Int(a.max(b) * 60)]
        )),
    ]
}

fn semantic_comparisons() -> Vec<nl2bi_core::ir::Comparison> {
    use nl2bi_core::ir::Comparison;
    vec![
        Comparison::named(ComparisonKind::DayOverDay),
        Comparison::named(ComparisonKind::WeekOverWeek),
        Comparison::named(ComparisonKind::MonthOverMonth),
        Comparison::named(ComparisonKind::YearOverYear),
        Comparison::custom(Offset::new(TimeUnit::Day, 3)),
        Comparison::custom(Offset::new(TimeUnit::Week, 2)),
    ]
}

/// A semantic test case: an IR over the demo fact view with an absolute
/// window, and rows scattered over its origin and comparison periods.
#[derive(Debug, Clone)]
pub struct SemanticCase {
    pub ir: AnalyticIr,
    pub facts: Vec<FactRow>,
}

pub fn arb_semantic_case() -> impl Strategy<Value = SemanticCase> {
    use nl2bi_core::ir::{MetricRef, TimeWindow};
    (
        subsequence(SEMANTIC_DIMS.to_vec(), 0..=2).prop_shuffle(),
        prop::collection::vec(select(semantic_metrics()), 1..=3),
        prop::collection::vec(arb_semantic_filter(), 0..=2),
        crate::gen::arb_date(2023, 2024),
        0u64..10,
        subsequence(semantic_comparisons(), 0..=3).prop_shuffle(),
    )
        .prop_flat_map(|(dims, metrics, filters, start, len, cmps)| {
            let mut ir = AnalyticIr::new("chatbi_demo_dataset");
            ir.dimensions = dims.into_iter().map(String::from).collect();
            ir.metrics = metrics
                .into_iter()
                .map(|(c, a)| MetricRef::new(c, a))
                .collect();
            ir.filters = filters;
            let end = start + Days::new(len);
            ir.time = Some(TimeWindow {
                column: "event_day".into(),
                range: TimeRange::Absolute { start, end },
            });
            ir.comparisons = cmps;
            let ir = ir.with_default_aliases();
            let window = DateRange::new(start, end);
            let mut periods = vec![window];
            periods.extend(
                ir.comparisons
                    .iter()
                    .filter_map(|c| shift_window(window, c.offset)),
            );
            let row = (
                select(periods),
                0u64..12,
                select(CITIES.to_vec()),
                select(APPS.to_vec()),
                0i64..=1,
                0u8..5,
                0i64..6,
                0i64..4,
                0i64..900,
            )
                .prop_map(|(p, day, city, app_id, new, uid, pv, share, stay)| {
                    FactRow {
                        event_day: (p.start + Days::new(day)).min(p.end + Days::new(1)),
                        city,
                        app_id,
                        is_video_new: new,
                        uid: format!("u{uid}"),
                        playback_volume: pv,
                        share_icon_cnt: share,
                        staytime: stay,
                    }
                });
            (Just(ir), prop::collection::vec(row, 0..30))
        })
        .prop_map(|(ir, facts)| SemanticCase { ir, facts })
}
