//! Dialect-neutral SQL syntax tree produced by the template builder.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::ir::{Aggregation, Direction, Literal};
use crate::time::Offset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Neq,
    Lt,
    Lte,
    Gt,
    Gte,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Neq => "<>",
            CmpOp::Lt => "<",
            CmpOp::Lte => "<=",
            CmpOp::Gt => ">",
            CmpOp::Gte => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Physical column of the source table.
    Column(String),
    /// Output column of a derived table: `table.alias`.
    Qualified {
        table: String,
        column: String,
    },
    /// Virtual column rule, inlined verbatim in parentheses.
    Rule(String),
    Agg {
        func: Aggregation,
        arg: Box<Expr>,
    },
    /// Truncation to a calendar date. Identity in the generic dialect.
    DayOf(Box<Expr>),
    /// The date moved forward by `offset`.
    DateAdd {
        offset: Offset,
        expr: Box<Expr>,
    },
    Literal(Literal),
    Date(NaiveDate),
    Compare {
        op: CmpOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    InList {
        expr: Box<Expr>,
        negated: bool,
        list: Vec<Expr>,
    },
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    /// `(current - previous) / previous`
    Ratio {
        current: Box<Expr>,
        previous: Box<Expr>,
        null_guard: bool,
    },
    /// Constant true condition, `1 = 1`.
    True,
}

impl Expr {
    pub fn column(name: &str) -> Self {
        Expr::Column(name.into())
    }

    pub fn qualified(table: &str, column: &str) -> Self {
        Expr::Qualified {
            table: table.into(),
            column: column.into(),
        }
    }

    pub fn day_of(e: Expr) -> Self {
        Expr::DayOf(Box::new(e))
    }

    pub fn compare(op: CmpOp, left: Expr, right: Expr) -> Self {
        Expr::Compare {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Calls `f` on this node and every node below it.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Agg { arg, .. } => arg.walk(f),
            Expr::DayOf(e) | Expr::DateAdd { expr: e, .. } => e.walk(f),
            Expr::Compare { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::InList { expr, list, .. } => {
                expr.walk(f);
                list.iter().for_each(|e| e.walk(f));
            }
            Expr::Between { expr, low, high } => {
                expr.walk(f);
                low.walk(f);
                high.walk(f);
            }
            Expr::Ratio {
                current, previous, ..
            } => {
                current.walk(f);
                previous.walk(f);
            }
            Expr::Column(_)
            | Expr::Qualified { .. }
            | Expr::Rule(_)
            | Expr::Literal(_)
            | Expr::Date(_)
            | Expr::True => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableRef {
    /// Dotted physical table name.
    Table(String),
    Derived {
        query: Box<Select>,
        alias: String,
    },
}

/// `LEFT OUTER JOIN right ON l1 = r1 AND ...`; no pairs means `ON 1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub right: TableRef,
    pub on: Vec<(Expr, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupKey {
    /// Output alias of the grouped item.
    pub alias: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub alias: String,
    /// Expression to order by when the dialect does not project aliases.
    pub expr: Option<Expr>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<Join>,
    /// Conjuncts of WHERE.
    pub filter: Vec<Expr>,
    pub group_by: Vec<GroupKey>,
    /// Conjuncts of HAVING.
    pub having: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

impl Select {
    pub fn new(from: TableRef) -> Self {
        Self {
            items: Vec::new(),
            from,
            joins: Vec::new(),
            filter: Vec::new(),
            group_by: Vec::new(),
            having: Vec::new(),
            order_by: Vec::new(),
            limit: None,
        }
    }

    /// Calls `f` on every expression in this query and its subqueries.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        for i in &self.items {
            i.expr.walk(f);
        }
        walk_table(&self.from, f);
        for j in &self.joins {
            walk_table(&j.right, f);
            for (l, r) in &j.on {
                l.walk(f);
                r.walk(f);
            }
        }
        self.filter.iter().for_each(|e| e.walk(f));
        self.group_by.iter().for_each(|g| g.expr.walk(f));
        self.having.iter().for_each(|e| e.walk(f));
        for o in &self.order_by {
            if let Some(e) = &o.expr {
                e.walk(f);
            }
        }
    }
}

fn walk_table<'a>(t: &'a TableRef, f: &mut dyn FnMut(&'a Expr)) {
    if let TableRef::Derived { query, .. } = t {
        query.walk(f);
    }
}
