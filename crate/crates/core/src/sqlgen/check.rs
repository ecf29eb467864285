//! Structural validation of generated SQL text against its IR.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use super::{derived_table_names, SqlArtifact};
use crate::catalog::Catalog;
use crate::ir::AnalyticIr;
use crate::sql_lex::{is_builtin_function, is_keyword, tokenize, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum CheckViolation {
    #[error("{0}")]
    Lex(String),
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("unknown identifier {0}")]
    UnknownIdentifier(String),
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("LIMIT {0} missing")]
    MissingLimit(u64),
    #[error("expected {expected} LEFT OUTER JOINs, found {found}")]
    JoinCount { expected: usize, found: usize },
    #[error("expected {expected} scans of the source table, found {found}")]
    SubqueryCount { expected: usize, found: usize },
    #[error("artifact metadata disagrees with the IR: {0}")]
    Metadata(String),
    #[error("column {0} is not a physical column of the view")]
    ForeignColumn(String),
    #[error("unknown view {0}")]
    UnknownView(String),
}

/// Checks that `artifact` is well formed and consistent with `ir`.
///
/// Parentheses and quotes must balance. Every bare or quoted identifier
/// must be a keyword, an allowed function, a physical column of the view,
/// an output alias, a derived table name or part of the source table name.
/// The LIMIT must be present and the join and scan counts must match the
/// number of comparisons.
pub fn structural_check(
    artifact: &SqlArtifact,
    ir: &AnalyticIr,
    catalog: &Catalog,
) -> Result<(), Vec<CheckViolation>> {
    let ir = &ir.clone().with_default_aliases();
    let Some(view) = catalog.view(&ir.view_id) else {
        return Err(alloc::vec![CheckViolation::UnknownView(ir.view_id.clone())]);
    };
    let tokens = match tokenize(&artifact.sql) {
        Ok(t) => t,
        Err(e) => return Err(alloc::vec![CheckViolation::Lex(e.to_string())]),
    };
    let mut out = Vec::new();

    let mut depth: i64 = 0;
    for t in &tokens {
        match &t.token {
            Token::Symbol(s) if s == "(" => depth += 1,
            Token::Symbol(s) if s == ")" => {
                depth -= 1;
                if depth < 0 {
                    break;
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        out.push(CheckViolation::UnbalancedParens);
    }

    let mut rule_functions: BTreeSet<String> = BTreeSet::new();
    for name in ir.virtual_columns(view) {
        let rule = view.virtual_column(name).map_or("", |v| v.rule.as_str());
        if let Ok(rt) = tokenize(rule) {
            for (i, t) in rt.iter().enumerate() {
                if let Token::Word(w) = &t.token {
                    if is_call(&rt, i) {
                        rule_functions.insert(w.to_ascii_lowercase());
                    }
                }
            }
        }
    }
    let mut names: BTreeSet<String> = view.columns.iter().map(|c| c.name.clone()).collect();
    names.extend(ir.output_aliases());
    names.extend(derived_table_names(ir));
    names.extend(view.source_table.split('.').map(String::from));

    let mut reported = BTreeSet::new();
    for (i, t) in tokens.iter().enumerate() {
        let violation = match &t.token {
            Token::Word(w) if is_keyword(w) => None,
            Token::Word(w) if is_call(&tokens, i) => {
                let known =
                    is_builtin_function(w) || rule_functions.contains(&w.to_ascii_lowercase());
                (!known).then(|| CheckViolation::UnknownFunction(w.clone()))
            }
            Token::Word(w) => {
                (!names.contains(w)).then(|| CheckViolation::UnknownIdentifier(w.clone()))
            }
            Token::Quoted(q) => {
                (!names.contains(q)).then(|| CheckViolation::UnknownIdentifier(q.clone()))
            }
            _ => None,
        };
        if let Some(v) = violation {
            if reported.insert(v.to_string()) {
                out.push(v);
            }
        }
    }

    let limit_ok = tokens.windows(2).any(|w| {
        matches!(&w[0].token, Token::Word(k) if k.eq_ignore_ascii_case("limit"))
            && matches!(&w[1].token, Token::Number(n) if *n == ir.limit.to_string())
    });
    if !limit_ok {
        out.push(CheckViolation::MissingLimit(ir.limit));
    }

    let k = ir.comparisons.len();
    let joins = tokens
        .windows(3)
        .filter(|w| {
            let word =
                |t: &Token, s: &str| matches!(t, Token::Word(x) if x.eq_ignore_ascii_case(s));
            word(&w[0].token, "left") && word(&w[1].token, "outer") && word(&w[2].token, "join")
        })
        .count();
    if joins != k {
        out.push(CheckViolation::JoinCount {
            expected: k,
            found: joins,
        });
    }
    let scans = source_scans(&tokens, &view.source_table);
    let expected_scans = (k + 1).max(1);
    if scans != expected_scans {
        out.push(CheckViolation::SubqueryCount {
            expected: expected_scans,
            found: scans,
        });
    }
    if artifact.join_count != k {
        out.push(CheckViolation::Metadata(format!(
            "join_count {}",
            artifact.join_count
        )));
    }
    let expected_sub = if k == 0 { 0 } else { k + 1 };
    if artifact.subquery_count != expected_sub {
        out.push(CheckViolation::Metadata(format!(
            "subquery_count {}",
            artifact.subquery_count
        )));
    }
    for c in &artifact.referenced_columns {
        if view.physical(c).is_none() {
            out.push(CheckViolation::ForeignColumn(c.clone()));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn is_call(tokens: &[crate::sql_lex::Spanned], i: usize) -> bool {
    matches!(tokens.get(i + 1).map(|t| &t.token), Some(Token::Symbol(s)) if s == "(")
}

/// Number of `FROM <source table>` occurrences.
fn source_scans(tokens: &[crate::sql_lex::Spanned], source: &str) -> usize {
    let mut count = 0;
    for (i, t) in tokens.iter().enumerate() {
        if !matches!(&t.token, Token::Word(w) if w.eq_ignore_ascii_case("from")) {
            continue;
        }
        let mut name = String::new();
        let mut j = i + 1;
        while let Some(Token::Word(p) | Token::Quoted(p)) = tokens.get(j).map(|t| &t.token) {
            name.push_str(p);
            match tokens.get(j + 1).map(|t| &t.token) {
                Some(Token::Symbol(s)) if s == "." => {
                    name.push('.');
                    j += 2;
                }
                _ => break,
            }
        }
        if name == source {
            count += 1;
        }
    }
    count
}
