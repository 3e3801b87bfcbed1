//! Text formats: model files, evidence files, query and order lists.
//!
//! Model file layout (whitespace separated, `#` starts a comment):
//!
//! ```text
//! MARKOV
//! <n>                     variable count
//! <c_0> ... <c_{n-1}>     cardinalities
//! <m>                     factor count
//! <k> <v_1> ... <v_k>     m scope lines, 0-based variable indices
//! <count> <x_1> ...       m tables, last scope variable fastest
//! ```

use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::factor::{Factor, VariableId};
use crate::model::{Evidence, Model, QuerySet};
use crate::scalar::{format_round_trip, Scalar};

struct Token<'a> {
    text: &'a str,
    line: usize,
    index: usize,
}

struct Tokens<'a> {
    items: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            for (i, tok) in content.split_whitespace().enumerate() {
                items.push(Token {
                    text: tok,
                    line: ln + 1,
                    index: i + 1,
                });
            }
        }
        Tokens { items, pos: 0 }
    }

    fn error_here(&self, message: String) -> Error {
        let (line, token) = match self.items.get(self.pos) {
            Some(t) => (t.line, t.index),
            None => (self.items.last().map_or(0, |t| t.line), 0),
        };
        Error::Parse {
            line,
            token,
            message,
        }
    }

    fn next<V: FromStr>(&mut self, what: &str) -> Result<V> {
        let Some(tok) = self.items.get(self.pos) else {
            return Err(self.error_here(format!("unexpected end of input, expected {what}")));
        };
        match tok.text.parse::<V>() {
            Ok(v) => {
                self.pos += 1;
                Ok(v)
            }
            Err(_) => Err(self.error_here(format!("expected {what}, found `{}`", tok.text))),
        }
    }

    fn is_done(&self) -> bool {
        self.pos >= self.items.len()
    }
}

fn read_all(mut reader: impl Read) -> Result<String> {
    let mut s = String::new();
    reader.read_to_string(&mut s)?;
    Ok(s)
}

pub fn load_model<T: Scalar>(reader: impl Read) -> Result<Model<T>> {
    let text = read_all(reader)?;
    let mut toks = Tokens::new(&text);
    let header: String = toks.next("`MARKOV`")?;
    if header != "MARKOV" {
        toks.pos -= 1;
        return Err(toks.error_here(format!("expected `MARKOV`, found `{header}`")));
    }
    let n: usize = toks.next("variable count")?;
    let mut cards = Vec::with_capacity(n);
    for _ in 0..n {
        let c: usize = toks.next("cardinality")?;
        if c == 0 {
            toks.pos -= 1;
            return Err(toks.error_here("cardinality must be positive".into()));
        }
        cards.push(c);
    }
    let m: usize = toks.next("factor count")?;
    if m == 0 {
        toks.pos -= 1;
        return Err(toks.error_here("model must contain at least one factor".into()));
    }
    let mut scopes = Vec::with_capacity(m);
    for _ in 0..m {
        let k: usize = toks.next("scope arity")?;
        let mut scope = Vec::with_capacity(k);
        for _ in 0..k {
            let v: usize = toks.next("variable index")?;
            if v >= n {
                toks.pos -= 1;
                return Err(toks.error_here(format!("variable index {v} out of range")));
            }
            scope.push(VariableId(v));
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(m);
    for (i, scope) in scopes.into_iter().enumerate() {
        let count: usize = toks.next("table entry count")?;
        let shape: Vec<usize> = scope.iter().map(|v| cards[v.0]).collect();
        let expected: usize = shape.iter().product();
        if count != expected {
            return Err(Error::FactorShape {
                factor: i,
                message: format!("table declares {count} entries, scope requires {expected}"),
            });
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let x: T = toks.next("real table entry")?;
            if !x.is_finite() || x < T::zero() {
                toks.pos -= 1;
                return Err(toks.error_here(format!("factor {i}: entry {x} is negative or not finite")));
            }
            values.push(x);
        }
        factors.push(Factor::new(scope, shape, values).map_err(|e| Error::FactorShape {
            factor: i,
            message: e.to_string(),
        })?);
    }
    if !toks.is_done() {
        return Err(toks.error_here("trailing tokens after the last table".into()));
    }
    Model::new(cards, factors)
}

pub fn write_model<T: Scalar>(model: &Model<T>, mut w: impl Write) -> Result<()> {
    writeln!(w, "MARKOV")?;
    writeln!(w, "{}", model.num_variables())?;
    let cards: Vec<String> = model.cardinalities().iter().map(|c| c.to_string()).collect();
    writeln!(w, "{}", cards.join(" "))?;
    writeln!(w, "{}", model.factors().len())?;
    for f in model.factors() {
        let mut line = f.arity().to_string();
        for v in f.scope() {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    for f in model.factors() {
        writeln!(w)?;
        writeln!(w, "{}", f.len())?;
        let vals: Vec<String> = f.values().iter().map(|&x| format_round_trip(x)).collect();
        for chunk in vals.chunks(8) {
            writeln!(w, " {}", chunk.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_model<T: Scalar>(model: &Model<T>) -> String {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("model text is ASCII")
}

/// Evidence file: a count followed by `var value` pairs.
pub fn parse_evidence(reader: impl Read) -> Result<Evidence> {
    let text = read_all(reader)?;
    let mut toks = Tokens::new(&text);
    if toks.is_done() {
        return Ok(Evidence::new());
    }
    let count: usize = toks.next("evidence count")?;
    let mut ev = Evidence::new();
    for _ in 0..count {
        let v: usize = toks.next("variable index")?;
        let x: usize = toks.next("observed value")?;
        if ev.insert(VariableId(v), x).is_some() {
            toks.pos -= 2;
            return Err(toks.error_here(format!("variable {v} observed twice")));
        }
    }
    if !toks.is_done() {
        return Err(toks.error_here("trailing tokens after evidence".into()));
    }
    Ok(ev)
}

fn parse_indices(reader: impl Read) -> Result<Vec<VariableId>> {
    let text = read_all(reader)?;
    let mut toks = Tokens::new(&text);
    let mut out = Vec::new();
    while !toks.is_done() {
        out.push(VariableId(toks.next("variable index")?));
    }
    Ok(out)
}

/// Query file: whitespace-separated variable indices.
pub fn parse_queries(reader: impl Read) -> Result<QuerySet> {
    QuerySet::new(parse_indices(reader)?)
}

/// Order file: whitespace-separated indices. With `rightmost_first` the last
/// listed variable is eliminated first; the returned order is always first-to-last.
pub fn parse_order(reader: impl Read, rightmost_first: bool) -> Result<Vec<VariableId>> {
    let mut order = parse_indices(reader)?;
    if rightmost_first {
        order.reverse();
    }
    Ok(order)
}
