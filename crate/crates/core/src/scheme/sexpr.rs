//! S-expression syntax for assertions.
//!
//! Core forms mirror the rule grammar token for token:
//! `(present m)`, `(active i)`, `(msg< m m')`, `(edge< i j m)`,
//! `(or a b ...)`, `(not a)`. On top of those the syntax accepts the sugar
//! `(and ...)` and `(implies a b)` (desugared into or/not on parse), set
//! membership `(in-msgs S x)` / `(in-edges S i)`, the library templates
//! `(priority m S)` and `(prefers m i S)`, and `_` as the element hole inside
//! set-comprehension bodies. Printing always emits the desugared form, so
//! parse(print(a)) reproduces `a` exactly.

use super::{Assertion, EdgeTerm, MsgTerm};

/// Parse failure with a human-oriented description.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("assertion syntax error: {0}")]
pub struct ParseError(pub String);

pub fn print(a: &Assertion) -> String {
    let mut out = String::new();
    write_assertion(a, &mut out);
    out
}

fn write_msg(t: &MsgTerm, out: &mut String) {
    match t {
        MsgTerm::Elem => out.push('_'),
        MsgTerm::Id(m) => out.push_str(m),
    }
}

fn write_edge(t: &EdgeTerm, out: &mut String) {
    match t {
        EdgeTerm::Elem => out.push('_'),
        EdgeTerm::Index(i) => out.push_str(&i.to_string()),
    }
}

fn write_assertion(a: &Assertion, out: &mut String) {
    match a {
        Assertion::Present(m) => {
            out.push_str("(present ");
            write_msg(m, out);
            out.push(')');
        }
        Assertion::Active(e) => {
            out.push_str("(active ");
            write_edge(e, out);
            out.push(')');
        }
        Assertion::MsgLess(a, b) => {
            out.push_str("(msg< ");
            write_msg(a, out);
            out.push(' ');
            write_msg(b, out);
            out.push(')');
        }
        Assertion::EdgeLess(i, j, m) => {
            out.push_str("(edge< ");
            write_edge(i, out);
            out.push(' ');
            write_edge(j, out);
            out.push(' ');
            write_msg(m, out);
            out.push(')');
        }
        Assertion::Or(a, b) => {
            out.push_str("(or ");
            write_assertion(a, out);
            out.push(' ');
            write_assertion(b, out);
            out.push(')');
        }
        Assertion::Not(a) => {
            out.push_str("(not ");
            write_assertion(a, out);
            out.push(')');
        }
        Assertion::InMsgSet(s, m) => {
            out.push_str("(in-msgs ");
            out.push_str(s);
            out.push(' ');
            write_msg(m, out);
            out.push(')');
        }
        Assertion::InEdgeSet(s, e) => {
            out.push_str("(in-edges ");
            out.push_str(s);
            out.push(' ');
            write_edge(e, out);
            out.push(')');
        }
        Assertion::Priority(m, s) => {
            out.push_str("(priority ");
            write_msg(m, out);
            out.push(' ');
            out.push_str(s);
            out.push(')');
        }
        Assertion::Prefers(m, e, s) => {
            out.push_str("(prefers ");
            write_msg(m, out);
            out.push(' ');
            write_edge(e, out);
            out.push(' ');
            out.push_str(s);
            out.push(')');
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut atom = String::new();
    let flush = |atom: &mut String, out: &mut Vec<Token>| {
        if !atom.is_empty() {
            out.push(Token::Atom(std::mem::take(atom)));
        }
    };
    for c in input.chars() {
        match c {
            '(' => {
                flush(&mut atom, &mut out);
                out.push(Token::Open);
            }
            ')' => {
                flush(&mut atom, &mut out);
                out.push(Token::Close);
            }
            c if c.is_whitespace() => flush(&mut atom, &mut out),
            c => atom.push(c),
        }
    }
    flush(&mut atom, &mut out);
    if out.is_empty() {
        return Err(ParseError("empty input".into()));
    }
    Ok(out)
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn next(&mut self) -> Result<&'t Token, ParseError> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| ParseError("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn atom(&mut self) -> Result<&'t str, ParseError> {
        match self.next()? {
            Token::Atom(s) => Ok(s),
            t => Err(ParseError(format!("expected atom, found {t:?}"))),
        }
    }

    fn close(&mut self) -> Result<(), ParseError> {
        match self.next()? {
            Token::Close => Ok(()),
            t => Err(ParseError(format!("expected ')', found {t:?}"))),
        }
    }

    fn msg_term(&mut self) -> Result<MsgTerm, ParseError> {
        let a = self.atom()?;
        Ok(if a == "_" {
            MsgTerm::Elem
        } else {
            MsgTerm::Id(a.to_string())
        })
    }

    fn edge_term(&mut self) -> Result<EdgeTerm, ParseError> {
        let a = self.atom()?;
        if a == "_" {
            return Ok(EdgeTerm::Elem);
        }
        let i: u32 = a
            .parse()
            .map_err(|_| ParseError(format!("expected edge index or '_', found {a:?}")))?;
        if i == 0 {
            return Err(ParseError("edge indices are 1-based".into()));
        }
        Ok(EdgeTerm::Index(i))
    }

    fn assertion(&mut self) -> Result<Assertion, ParseError> {
        match self.next()? {
            Token::Open => {}
            t => return Err(ParseError(format!("expected '(', found {t:?}"))),
        }
        let head = self.atom()?.to_string();
        let a = match head.as_str() {
            "present" => Assertion::Present(self.msg_term()?),
            "active" => Assertion::Active(self.edge_term()?),
            "msg<" => {
                let a = self.msg_term()?;
                let b = self.msg_term()?;
                Assertion::MsgLess(a, b)
            }
            "edge<" => {
                let i = self.edge_term()?;
                let j = self.edge_term()?;
                let m = self.msg_term()?;
                Assertion::EdgeLess(i, j, m)
            }
            "or" | "and" => {
                let mut parts = Vec::new();
                while !matches!(self.tokens.get(self.pos), Some(Token::Close)) {
                    parts.push(self.assertion()?);
                }
                if parts.len() < 2 {
                    return Err(ParseError(format!("({head} ...) needs at least two parts")));
                }
                let fold: fn(Assertion, Assertion) -> Assertion = if head == "or" {
                    |a, b| Assertion::Or(Box::new(a), Box::new(b))
                } else {
                    Assertion::and
                };
                let mut it = parts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, fold)
            }
            "not" => Assertion::Not(Box::new(self.assertion()?)),
            "implies" => {
                let a = self.assertion()?;
                let b = self.assertion()?;
                Assertion::implies(a, b)
            }
            "in-msgs" => {
                let s = self.atom()?.to_string();
                Assertion::InMsgSet(s, self.msg_term()?)
            }
            "in-edges" => {
                let s = self.atom()?.to_string();
                Assertion::InEdgeSet(s, self.edge_term()?)
            }
            "priority" => {
                let m = self.msg_term()?;
                let s = self.atom()?.to_string();
                Assertion::Priority(m, s)
            }
            "prefers" => {
                let m = self.msg_term()?;
                let e = self.edge_term()?;
                let s = self.atom()?.to_string();
                Assertion::Prefers(m, e, s)
            }
            other => return Err(ParseError(format!("unknown form ({other} ...)"))),
        };
        self.close()?;
        Ok(a)
    }
}

pub fn parse(input: &str) -> Result<Assertion, ParseError> {
    let tokens = tokenize(input)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
    };
    let a = p.assertion()?;
    if p.pos != tokens.len() {
        return Err(ParseError("trailing input after assertion".into()));
    }
    Ok(a)
}
