//! A small SQL tokenizer.
//!
//! Only rich enough to find identifiers, literals and parentheses in the SQL
//! this crate emits and in virtual-column rules. It is not a parser.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// Bare word: keyword, function name or unquoted identifier.
    Word(String),
    /// Identifier in backticks or double quotes, without the quotes.
    Quoted(String),
    /// Single-quoted string literal, without the quotes.
    Str(String),
    Number(String),
    /// Any other operator or punctuation, e.g. `(`, `,`, `>=`.
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated quoted identifier starting at byte {0}")]
    UnterminatedIdentifier(usize),
}

pub fn tokenize(sql: &str) -> Result<Vec<Spanned>, LexError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let token = if c == b'\'' {
            let mut text = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(LexError::UnterminatedString(start)),
                    // '' escapes a quote inside a literal
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        text.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = sql[i..].chars().next().unwrap_or('\0');
                        text.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            Token::Str(text)
        } else if c == b'`' || c == b'"' {
            let end = sql[i + 1..]
                .find(c as char)
                .ok_or(LexError::UnterminatedIdentifier(start))?;
            let text = String::from(&sql[i + 1..i + 1 + end]);
            i += end + 2;
            Token::Quoted(text)
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            Token::Number(String::from(&sql[start..i]))
        } else if c.is_ascii_alphabetic() || c == b'_' || !c.is_ascii() {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || !bytes[i].is_ascii())
            {
                i += 1;
            }
            Token::Word(String::from(&sql[start..i]))
        } else {
            let two = sql.get(i..i + 2);
            let len = match two {
                Some(">=") | Some("<=") | Some("<>") | Some("!=") | Some("||") => 2,
                _ => 1,
            };
            i += len;
            Token::Symbol(String::from(&sql[start..i]))
        };
        out.push(Spanned {
            token,
            offset: start,
        });
    }
    Ok(out)
}

/// SQL keywords and literals that may appear bare in generated SQL or in
/// virtual-column rules. Compared case-insensitively.
pub const KEYWORDS: &[&str] = &[
    "select",
    "from",
    "where",
    "and",
    "or",
    "not",
    "in",
    "between",
    "group",
    "by",
    "order",
    "asc",
    "desc",
    "limit",
    "as",
    "left",
    "outer",
    "join",
    "on",
    "having",
    "distinct",
    "is",
    "null",
    "case",
    "when",
    "then",
    "else",
    "end",
    "true",
    "false",
    "interval",
    "day",
    "week",
    "month",
    "year",
    "current_date",
    "like",
];

/// Functions the SQL generator itself emits.
pub const FUNCTIONS: &[&str] = &[
    "sum", "count", "avg", "min", "max", "todate", "dateadd", "date_add", "date_sub", "nullif",
    "if",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

pub fn is_builtin_function(word: &str) -> bool {
    FUNCTIONS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Bare identifiers referenced by an expression: words that are neither
/// keywords nor immediately followed by `(` (function calls).
pub fn referenced_identifiers(tokens: &[Spanned]) -> Vec<&str> {
    let mut out = Vec::new();
    for (idx, t) in tokens.iter().enumerate() {
        if let Token::Word(w) = &t.token {
            let is_call = matches!(
                tokens.get(idx + 1).map(|n| &n.token),
                Some(Token::Symbol(s)) if s == "("
            );
            if !is_call && !is_keyword(w) {
                out.push(w.as_str());
            }
        }
    }
    out
}
