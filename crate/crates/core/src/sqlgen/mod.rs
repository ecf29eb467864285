//! SQL generation from a validated [`AnalyticIr`].
//!
//! Each IR maps to one of three templates. Without comparisons it is a single
//! aggregate SELECT. With `k` comparisons it becomes an origin subquery plus
//! one subquery per shifted window, LEFT OUTER JOINed on every dimension
//! alias. Joins nest left-deep: each join but the last is wrapped in a
//! derived table `table_<tag>_l` that carries the shifted metrics forward
//! under the ratio alias, so the outermost SELECT can compute every ratio.

pub mod ast;
mod check;
mod render;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ViewDef};
use crate::ir::{
    validate, AnalyticIr, Direction, Filter, FilterOp, MetricRef, OrderKey, Violation,
};
use crate::sql_lex::{referenced_identifiers, tokenize};
use crate::time::{shift_window, DateRange, Offset};

use ast::{CmpOp, Expr, GroupKey, Join, OrderItem, Select, SelectItem, TableRef};
pub use check::{structural_check, CheckViolation};
pub use render::quote;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    Generic,
    #[default]
    ClickhouseLike,
}

impl Dialect {
    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Generic => "generic",
            Dialect::ClickhouseLike => "clickhouse_like",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dialect {0}, expected generic or clickhouse_like")]
pub struct UnknownDialect(pub String);

impl FromStr for Dialect {
    type Err = UnknownDialect;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(Dialect::Generic),
            "clickhouse_like" => Ok(Dialect::ClickhouseLike),
            other => Err(UnknownDialect(other.into())),
        }
    }
}

/// Query template. Every valid IR maps to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Aggregates with no WHERE clause.
    SimpleAggregate,
    /// Aggregates restricted by filters or a time window.
    FilteredAggregate,
    /// Origin and shifted subqueries joined for period comparisons.
    ComparisonJoin,
}

impl Template {
    pub fn of(ir: &AnalyticIr) -> Self {
        if !ir.comparisons.is_empty() {
            Template::ComparisonJoin
        } else if !ir.filters.is_empty() || ir.time.is_some() {
            Template::FilteredAggregate
        } else {
            Template::SimpleAggregate
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub dialect: Dialect,
    /// Wrap ratio denominators in `nullIf(.., 0)`. Off by default.
    #[serde(default)]
    pub null_guard: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlArtifact {
    pub sql: String,
    pub referenced_columns: BTreeSet<String>,
    /// Origin plus shifted subqueries; zero without comparisons.
    pub subquery_count: usize,
    pub join_count: usize,
    pub dialect: Dialect,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("IR is invalid")]
    Invalid(Vec<Violation>),
    #[error("time window is outside the supported calendar")]
    WindowOutOfRange,
}

/// Derived table name of the origin subquery.
pub const ORIGIN_TABLE: &str = "table_origin";

pub fn shifted_table(offset: Offset) -> String {
    format!("table_{}", offset.tag())
}

/// Derived table wrapping the join with the subquery of `offset`.
pub fn wrapper_table(offset: Offset) -> String {
    format!("table_{}_l", offset.tag())
}

/// Every derived table name the comparison template of `ir` uses.
pub fn derived_table_names(ir: &AnalyticIr) -> Vec<String> {
    if ir.comparisons.is_empty() {
        return Vec::new();
    }
    let mut out = alloc::vec![String::from(ORIGIN_TABLE)];
    let last = ir.comparisons.len() - 1;
    for (j, c) in ir.comparisons.iter().enumerate() {
        out.push(shifted_table(c.offset));
        if j < last {
            out.push(wrapper_table(c.offset));
        }
    }
    out
}

/// Compiles `ir` to SQL text. Relative windows resolve against `today`.
pub fn generate(
    ir: &AnalyticIr,
    catalog: &Catalog,
    today: NaiveDate,
    options: GenerateOptions,
) -> Result<SqlArtifact, GenerateError> {
    let query = build_query(ir, catalog, today, options)?;
    let view = catalog.view(&ir.view_id).ok_or_else(|| {
        GenerateError::Invalid(alloc::vec![Violation::UnknownView(ir.view_id.clone())])
    })?;
    let k = ir.comparisons.len();
    Ok(SqlArtifact {
        sql: render::render(&query, options.dialect),
        referenced_columns: referenced_columns(&query, view),
        subquery_count: if k == 0 { 0 } else { k + 1 },
        join_count: k,
        dialect: options.dialect,
        template: Template::of(ir),
    })
}

/// Renders a syntax tree without any IR checks.
pub fn render_query(query: &Select, dialect: Dialect) -> String {
    render::render(query, dialect)
}

fn referenced_columns(query: &Select, view: &ViewDef) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    query.walk(&mut |e| match e {
        Expr::Column(c) => {
            out.insert(c.clone());
        }
        Expr::Rule(r) => {
            if let Ok(tokens) = tokenize(r) {
                out.extend(
                    referenced_identifiers(&tokens)
                        .into_iter()
                        .filter(|c| view.physical(c).is_some())
                        .map(String::from),
                );
            }
        }
        _ => {}
    });
    out
}

/// Builds the syntax tree for `ir` after validating it.
pub fn build_query(
    ir: &AnalyticIr,
    catalog: &Catalog,
    today: NaiveDate,
    options: GenerateOptions,
) -> Result<Select, GenerateError> {
    let ir = &ir.clone().with_default_aliases();
    validate(ir, catalog).map_err(GenerateError::Invalid)?;
    let view = catalog
        .view(&ir.view_id)
        .expect("validated IR names a catalog view");
    let window = match &ir.time {
        Some(t) => Some((
            t.column.as_str(),
            t.range
                .resolve(today)
                .ok_or(GenerateError::WindowOutOfRange)?,
        )),
        None => None,
    };
    let b = Builder {
        ir,
        view,
        dialect: options.dialect,
        null_guard: options.null_guard,
        window,
    };
    if ir.comparisons.is_empty() {
        Ok(b.single())
    } else {
        b.comparison()
    }
}

struct Builder<'a> {
    ir: &'a AnalyticIr,
    view: &'a ViewDef,
    dialect: Dialect,
    null_guard: bool,
    window: Option<(&'a str, DateRange)>,
}

impl Builder<'_> {
    fn time_expr(column: &str) -> Expr {
        Expr::day_of(Expr::column(column))
    }

    /// Projection of dimension `d`. The time column is truncated to a date
    /// and, in a shifted subquery, moved forward onto the origin period.
    fn dimension_expr(&self, d: &str, shift: Option<Offset>) -> Expr {
        match self.window {
            Some((tc, _)) if tc == d => {
                let base = Expr::day_of(Self::time_expr(tc));
                match shift {
                    Some(offset) => Expr::day_of(Expr::DateAdd {
                        offset,
                        expr: alloc::boxed::Box::new(base),
                    }),
                    None => base,
                }
            }
            _ => Expr::column(d),
        }
    }

    fn column_expr(&self, column: &str) -> Expr {
        match self.view.virtual_column(column) {
            Some(v) => Expr::Rule(v.rule.clone()),
            None => Expr::column(column),
        }
    }

    fn metric_expr(&self, m: &MetricRef) -> Expr {
        match self.view.virtual_column(&m.column) {
            Some(v) => Expr::Rule(v.rule.clone()),
            None => Expr::Agg {
                func: m.agg,
                arg: alloc::boxed::Box::new(Expr::column(&m.column)),
            },
        }
    }

    fn filter_expr(&self, f: &Filter) -> Expr {
        let lhs = self.column_expr(&f.column);
        let vals: Vec<Expr> = f.values.iter().cloned().map(Expr::Literal).collect();
        let cmp = |op| Expr::compare(op, lhs.clone(), vals[0].clone());
        match f.op {
            FilterOp::Eq => cmp(CmpOp::Eq),
            FilterOp::Neq => cmp(CmpOp::Neq),
            FilterOp::Lt => cmp(CmpOp::Lt),
            FilterOp::Lte => cmp(CmpOp::Lte),
            FilterOp::Gt => cmp(CmpOp::Gt),
            FilterOp::Gte => cmp(CmpOp::Gte),
            FilterOp::In | FilterOp::NotIn => Expr::InList {
                expr: alloc::boxed::Box::new(lhs.clone()),
                negated: f.op == FilterOp::NotIn,
                list: vals,
            },
            FilterOp::Between => Expr::Between {
                expr: alloc::boxed::Box::new(lhs.clone()),
                low: alloc::boxed::Box::new(vals[0].clone()),
                high: alloc::boxed::Box::new(vals[1].clone()),
            },
        }
    }

    fn window_conjuncts(&self, column: &str, w: DateRange) -> Vec<Expr> {
        let t = Self::time_expr(column);
        match self.dialect {
            Dialect::ClickhouseLike => alloc::vec![
                Expr::compare(CmpOp::Gte, t.clone(), Expr::Date(w.start)),
                Expr::compare(CmpOp::Lte, t, Expr::Date(w.end)),
            ],
            Dialect::Generic => alloc::vec![Expr::Between {
                expr: alloc::boxed::Box::new(t),
                low: alloc::boxed::Box::new(Expr::Date(w.start)),
                high: alloc::boxed::Box::new(Expr::Date(w.end)),
            }],
        }
    }

    /// Aggregate SELECT over the source table for `window`, optionally
    /// re-aligning the time dimension by `shift`.
    fn aggregate(&self, window: Option<DateRange>, shift: Option<Offset>, aliased: bool) -> Select {
        let ir = self.ir;
        let mut sel = Select::new(TableRef::Table(self.view.source_table.clone()));
        for (i, d) in ir.dimensions.iter().enumerate() {
            sel.items.push(SelectItem {
                expr: self.dimension_expr(d, shift),
                alias: aliased.then(|| ir.dimension_alias(i)),
            });
            sel.group_by.push(GroupKey {
                alias: ir.dimension_alias(i),
                expr: self.dimension_expr(d, shift),
            });
        }
        for m in &ir.metrics {
            sel.items.push(SelectItem {
                expr: self.metric_expr(m),
                alias: aliased.then(|| m.alias.clone()),
            });
        }

        let time: Vec<Expr> = match (self.window, window) {
            (Some((tc, _)), Some(w)) => self.window_conjuncts(tc, w),
            _ => Vec::new(),
        };
        let (virt, phys): (Vec<&Filter>, Vec<&Filter>) = ir
            .filters
            .iter()
            .partition(|f| self.view.virtual_column(&f.column).is_some());
        let phys: Vec<Expr> = phys.into_iter().map(|f| self.filter_expr(f)).collect();
        match self.dialect {
            Dialect::ClickhouseLike => {
                sel.filter.extend(time);
                sel.filter.extend(phys);
            }
            Dialect::Generic => {
                sel.filter.extend(phys);
                sel.filter.extend(time);
            }
        }
        sel.having = virt.into_iter().map(|f| self.filter_expr(f)).collect();
        sel
    }

    fn order_keys(&self) -> Vec<OrderKey> {
        let ir = self.ir;
        if !ir.order_by.is_empty() {
            return ir.order_by.clone();
        }
        let mut keys = Vec::new();
        if !ir.dimensions.is_empty() {
            keys.push(OrderKey::new(ir.dimension_alias(0), Direction::Asc));
        }
        if let Some(m) = ir.metrics.first() {
            keys.push(OrderKey::new(m.alias.clone(), Direction::Desc));
        }
        keys
    }

    fn single(&self) -> Select {
        let ir = self.ir;
        // The generic dialect projects bare expressions and orders by them.
        let aliased = self.dialect == Dialect::ClickhouseLike;
        let mut sel = self.aggregate(self.window.map(|(_, w)| w), None, aliased);
        sel.order_by = self
            .order_keys()
            .into_iter()
            .map(|k| {
                let pos = ir.output_aliases().iter().position(|a| *a == k.alias);
                OrderItem {
                    expr: pos.map(|p| sel.items[p].expr.clone()),
                    alias: k.alias,
                    direction: k.direction,
                }
            })
            .collect();
        sel.limit = Some(ir.limit);
        sel
    }

    fn comparison(&self) -> Result<Select, GenerateError> {
        let ir = self.ir;
        let (_, window) = self
            .window
            .expect("validated comparisons have a time window");
        let dims: Vec<String> = (0..ir.dimensions.len())
            .map(|i| ir.dimension_alias(i))
            .collect();
        let metrics: Vec<&str> = ir.metrics.iter().map(|m| m.alias.as_str()).collect();

        let mut left = TableRef::Derived {
            query: alloc::boxed::Box::new(self.aggregate(Some(window), None, true)),
            alias: ORIGIN_TABLE.into(),
        };
        let mut left_name = String::from(ORIGIN_TABLE);
        // Shifted metrics carried through wrappers, as ratio aliases.
        let mut carried: Vec<String> = Vec::new();
        let last = ir.comparisons.len() - 1;

        for (j, c) in ir.comparisons.iter().enumerate() {
            let shifted = shift_window(window, c.offset).ok_or(GenerateError::WindowOutOfRange)?;
            let right_name = shifted_table(c.offset);
            let join = Join {
                right: TableRef::Derived {
                    query: alloc::boxed::Box::new(self.aggregate(
                        Some(shifted),
                        Some(c.offset),
                        true,
                    )),
                    alias: right_name.clone(),
                },
                on: dims
                    .iter()
                    .map(|a| {
                        (
                            Expr::qualified(&left_name, a),
                            Expr::qualified(&right_name, a),
                        )
                    })
                    .collect(),
            };

            let mut items: Vec<SelectItem> = dims.iter().map(|a| pass(&left_name, a)).collect();
            items.extend(metrics.iter().map(|a| pass(&left_name, a)));

            if j < last {
                items.extend(carried.iter().map(|a| pass(&left_name, a)));
                for (i, m) in metrics.iter().enumerate() {
                    let alias = ir.ratio_alias(j, i);
                    items.push(SelectItem {
                        expr: Expr::qualified(&right_name, m),
                        alias: Some(alias.clone()),
                    });
                    carried.push(alias);
                }
                let mut wrapper = Select::new(left);
                wrapper.items = items;
                wrapper.joins.push(join);
                left_name = wrapper_table(c.offset);
                left = TableRef::Derived {
                    query: alloc::boxed::Box::new(wrapper),
                    alias: left_name.clone(),
                };
                continue;
            }

            let per_cmp = metrics.len();
            for (n, a) in carried.iter().enumerate() {
                items.push(SelectItem {
                    expr: self.ratio(
                        Expr::qualified(&left_name, metrics[n % per_cmp]),
                        Expr::qualified(&left_name, a),
                    ),
                    alias: Some(a.clone()),
                });
            }
            for (i, m) in metrics.iter().enumerate() {
                items.push(SelectItem {
                    expr: self.ratio(
                        Expr::qualified(&left_name, m),
                        Expr::qualified(&right_name, m),
                    ),
                    alias: Some(ir.ratio_alias(j, i)),
                });
            }
            let mut outer = Select::new(left);
            outer.items = items;
            outer.joins.push(join);
            outer.order_by = self
                .order_keys()
                .into_iter()
                .map(|k| OrderItem {
                    alias: k.alias,
                    expr: None,
                    direction: k.direction,
                })
                .collect();
            outer.limit = Some(ir.limit);
            return Ok(outer);
        }
        unreachable!("comparison template needs at least one comparison")
    }

    fn ratio(&self, current: Expr, previous: Expr) -> Expr {
        Expr::Ratio {
            current: alloc::boxed::Box::new(current),
            previous: alloc::boxed::Box::new(previous),
            null_guard: self.null_guard,
        }
    }
}

/// `table.alias AS alias`
fn pass(table: &str, alias: &str) -> SelectItem {
    SelectItem {
        expr: Expr::qualified(table, alias),
        alias: Some(alias.into()),
    }
}
