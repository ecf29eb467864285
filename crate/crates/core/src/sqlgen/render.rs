//! Text rendering of the syntax tree.
//!
//! `clickhouse_like` follows the layout of the reference comparison query:
//! one select item per line, backtick-quoted aliases, `toDate`/`dateAdd`.
//! `generic` is compact ANSI: bare columns, double-quoted aliases,
//! `BETWEEN` windows and `DATE_ADD(.., INTERVAL n UNIT)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ast::{Expr, Join, Select, SelectItem, TableRef};
use super::Dialect;
use crate::ir::{Aggregation, Direction, Literal};

pub fn render(sel: &Select, dialect: Dialect) -> String {
    select_lines(sel, dialect).join("\n")
}

pub fn quote(name: &str, dialect: Dialect) -> String {
    match dialect {
        Dialect::ClickhouseLike => format!("`{name}`"),
        Dialect::Generic => format!("\"{name}\""),
    }
}

fn table_name(name: &str, dialect: Dialect) -> String {
    match dialect {
        Dialect::ClickhouseLike => name
            .split('.')
            .map(|p| quote(p, dialect))
            .collect::<Vec<_>>()
            .join("."),
        Dialect::Generic => name.into(),
    }
}

fn select_lines(sel: &Select, d: Dialect) -> Vec<String> {
    let mut out = Vec::new();
    let items: Vec<String> = sel.items.iter().map(|i| item(i, d)).collect();
    list_clause(&mut out, "SELECT ", &items, d);

    match &sel.from {
        TableRef::Table(t) => out.push(format!("FROM {}", table_name(t, d))),
        derived => {
            out.push("FROM".into());
            out.extend(table_block(derived, d));
        }
    }
    for j in &sel.joins {
        join_lines(&mut out, j, d);
    }

    let conds: Vec<String> = sel.filter.iter().map(|e| expr(e, d)).collect();
    conj_clause(&mut out, "WHERE ", &conds, d);
    let keys: Vec<String> = sel
        .group_by
        .iter()
        .map(|g| match d {
            Dialect::ClickhouseLike => g.alias.clone(),
            Dialect::Generic => expr(&g.expr, d),
        })
        .collect();
    list_clause(&mut out, "GROUP BY ", &keys, d);
    let conds: Vec<String> = sel.having.iter().map(|e| expr(e, d)).collect();
    conj_clause(&mut out, "HAVING ", &conds, d);
    let keys: Vec<String> = sel
        .order_by
        .iter()
        .map(|o| {
            let key = match (&o.expr, d) {
                (Some(e), Dialect::Generic) => expr(e, d),
                _ => quote(&o.alias, d),
            };
            let dir = match o.direction {
                Direction::Asc => "ASC",
                Direction::Desc => "DESC",
            };
            format!("{key} {dir}")
        })
        .collect();
    list_clause(&mut out, "ORDER BY ", &keys, d);
    if let Some(n) = sel.limit {
        out.push(format!("LIMIT {n}"));
    }
    out
}

fn item(i: &SelectItem, d: Dialect) -> String {
    match &i.alias {
        Some(a) => format!("{} AS {}", expr(&i.expr, d), quote(a, d)),
        None => expr(&i.expr, d),
    }
}

fn list_clause(out: &mut Vec<String>, head: &str, items: &[String], d: Dialect) {
    if items.is_empty() {
        return;
    }
    match d {
        Dialect::Generic => out.push(format!("{head}{}", items.join(", "))),
        Dialect::ClickhouseLike => {
            let pad = " ".repeat(head.len());
            let last = items.len() - 1;
            for (n, it) in items.iter().enumerate() {
                let lead = if n == 0 { head } else { pad.as_str() };
                let comma = if n < last { "," } else { "" };
                out.push(format!("{lead}{it}{comma}"));
            }
        }
    }
}

fn conj_clause(out: &mut Vec<String>, head: &str, conds: &[String], d: Dialect) {
    let and = match d {
        Dialect::Generic => "AND ",
        Dialect::ClickhouseLike => "  AND ",
    };
    for (n, c) in conds.iter().enumerate() {
        if n == 0 {
            out.push(format!("{head}{c}"));
        } else {
            out.push(format!("{and}{c}"));
        }
    }
}

/// A table reference indented under FROM or LEFT OUTER JOIN.
fn table_block(t: &TableRef, d: Dialect) -> Vec<String> {
    match t {
        TableRef::Table(name) => alloc::vec![format!("  {}", table_name(name, d))],
        TableRef::Derived { query, alias } => {
            let inner = select_lines(query, d);
            let mut out: Vec<String> = inner
                .iter()
                .enumerate()
                .map(|(n, l)| {
                    if n == 0 {
                        format!("  ({l}")
                    } else {
                        format!("   {l}")
                    }
                })
                .collect();
            if let Some(last) = out.last_mut() {
                last.push_str(&format!(") AS {}", quote(alias, d)));
            }
            out
        }
    }
}

fn join_lines(out: &mut Vec<String>, j: &Join, d: Dialect) {
    out.push("LEFT OUTER JOIN".into());
    let mut block = table_block(&j.right, d);
    let conds: Vec<String> = if j.on.is_empty() {
        alloc::vec![expr(&Expr::True, d)]
    } else {
        j.on.iter()
            .map(|(l, r)| format!("{} = {}", expr(l, d), expr(r, d)))
            .collect()
    };
    if let Some(last) = block.last_mut() {
        last.push_str(&format!(" ON {}", conds[0]));
    }
    out.extend(block);
    for c in &conds[1..] {
        out.push(format!("AND {c}"));
    }
}

pub fn expr(e: &Expr, d: Dialect) -> String {
    let ch = d == Dialect::ClickhouseLike;
    match e {
        Expr::Column(c) => c.clone(),
        Expr::Qualified { table, column } => format!("{table}.{}", quote(column, d)),
        Expr::Rule(r) => format!("({r})"),
        Expr::Agg { func, arg } => {
            let arg = expr(arg, d);
            let (lower, upper) = match func {
                Aggregation::Sum => ("sum", "SUM"),
                Aggregation::Count => ("count", "COUNT"),
                Aggregation::CountDistinct => {
                    let f = if ch { "count" } else { "COUNT" };
                    return format!("{f}(DISTINCT {arg})");
                }
                Aggregation::Avg => ("avg", "AVG"),
                Aggregation::Min => ("min", "MIN"),
                Aggregation::Max => ("max", "MAX"),
                Aggregation::None => return arg,
            };
            format!("{}({arg})", if ch { lower } else { upper })
        }
        Expr::DayOf(inner) => {
            let inner = expr(inner, d);
            if ch {
                format!("toDate({inner})")
            } else {
                inner
            }
        }
        Expr::DateAdd {
            offset,
            expr: inner,
        } => {
            let inner = expr(inner, d);
            let unit = offset.unit.as_str().to_uppercase();
            if ch {
                format!("dateAdd({unit}, {}, {inner})", offset.count)
            } else {
                format!("DATE_ADD({inner}, INTERVAL {} {unit})", offset.count)
            }
        }
        Expr::Literal(l) => literal(l),
        Expr::Date(day) => format!("'{day}'"),
        Expr::Compare { op, left, right } => {
            format!("{} {} {}", expr(left, d), op.as_str(), expr(right, d))
        }
        Expr::InList {
            expr: inner,
            negated,
            list,
        } => {
            let items: Vec<String> = list.iter().map(|x| expr(x, d)).collect();
            let not = if *negated { "NOT " } else { "" };
            format!("{} {not}IN ({})", expr(inner, d), items.join(", "))
        }
        Expr::Between {
            expr: inner,
            low,
            high,
        } => format!(
            "{} BETWEEN {} AND {}",
            expr(inner, d),
            expr(low, d),
            expr(high, d)
        ),
        Expr::Ratio {
            current,
            previous,
            null_guard,
        } => {
            let cur = expr(current, d);
            let prev = expr(previous, d);
            let denom = match (null_guard, ch) {
                (false, _) => prev.clone(),
                (true, true) => format!("nullIf({prev}, 0)"),
                (true, false) => format!("NULLIF({prev}, 0)"),
            };
            format!("({cur} - {prev}) / {denom}")
        }
        Expr::True => "1 = 1".into(),
    }
}

fn literal(l: &Literal) -> String {
    match l {
        Literal::Bool(true) => "TRUE".into(),
        Literal::Bool(false) => "FALSE".into(),
        Literal::Int(i) => i.to_string(),
        Literal::Float(f) => f.to_string(),
        Literal::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}
