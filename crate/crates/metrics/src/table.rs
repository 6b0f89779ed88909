//! Zone decision tables.
//!
//! A table is CSV with header `zone,predicate_id,inequality`. Each row is one
//! predicate; a point belongs to a zone when any of that zone's predicates
//! holds. Exactly one row may read `otherwise`, which catches points no other
//! row matches. Predicates of different zones must never overlap, and
//! classification reports an error if they do.
//!
//! ```text
//! inequality  := "otherwise" | comparison ("&" comparison)*
//! comparison  := expr op expr
//! op          := "<" | "<=" | ">" | ">="
//! expr        := ["-"] term (("+" | "-") term)*
//! term        := number | ident | number "*" ident
//! ```
//!
//! Expressions are evaluated left to right in f64, so `1.2*ref` in a table
//! rounds exactly like `1.2 * r` written in Rust.

use crate::error::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Lt => a < b,
            Op::Le => a <= b,
            Op::Gt => a > b,
            Op::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    negative: bool,
    coeff: f64,
    var: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Expr(Vec<Term>);

impl Expr {
    fn eval(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, t) in self.0.iter().enumerate() {
            let v = match t.var {
                Some(k) if t.coeff == 1.0 => values[k],
                Some(k) => t.coeff * values[k],
                None => t.coeff,
            };
            acc = match (i, t.negative) {
                (0, false) => v,
                (0, true) => -v,
                (_, false) => acc + v,
                (_, true) => acc - v,
            };
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Comparison {
    lhs: Expr,
    op: Op,
    rhs: Expr,
}

#[derive(Debug, Clone, PartialEq)]
enum Predicate {
    Otherwise,
    All(Vec<Comparison>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub zone: String,
    pub predicate_id: String,
    predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTable {
    vars: Vec<String>,
    rows: Vec<Row>,
    otherwise: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(Op),
    Plus,
    Minus,
    Star,
    Amp,
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Token>> {
    let err = |message: String| MetricsError::Table { line, message };
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '&' => {
                out.push(Token::Amp);
                i += 1;
            }
            '<' | '>' => {
                let eq = chars.get(i + 1) == Some(&'=');
                out.push(Token::Op(match (c, eq) {
                    ('<', false) => Op::Lt,
                    ('<', true) => Op::Le,
                    ('>', false) => Op::Gt,
                    _ => Op::Ge,
                }));
                i += if eq { 2 } else { 1 };
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<f64>().map_err(|_| err(format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [String],
    line: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> MetricsError {
        MetricsError::Table {
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| self.err(format!("unknown variable `{name}`")))
    }

    fn term(&mut self, negative: bool) -> Result<Term> {
        match self.next() {
            Some(Token::Num(coeff)) => {
                if self.peek() == Some(&Token::Star) {
                    self.pos += 1;
                    match self.next() {
                        Some(Token::Ident(name)) => Ok(Term {
                            negative,
                            coeff,
                            var: Some(self.var_index(&name)?),
                        }),
                        _ => Err(self.err("expected variable after `*`")),
                    }
                } else {
                    Ok(Term {
                        negative,
                        coeff,
                        var: None,
                    })
                }
            }
            Some(Token::Ident(name)) => Ok(Term {
                negative,
                coeff: 1.0,
                var: Some(self.var_index(&name)?),
            }),
            _ => Err(self.err("expected number or variable")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let negative = if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut terms = vec![self.term(negative)?];
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    terms.push(self.term(false)?);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    terms.push(self.term(true)?);
                }
                _ => break,
            }
        }
        Ok(Expr(terms))
    }

    fn comparison(&mut self) -> Result<Comparison> {
        let lhs = self.expr()?;
        let op = match self.next() {
            Some(Token::Op(op)) => op,
            _ => return Err(self.err("expected comparison operator")),
        };
        let rhs = self.expr()?;
        Ok(Comparison { lhs, op, rhs })
    }

    fn conjunction(&mut self) -> Result<Vec<Comparison>> {
        let mut out = vec![self.comparison()?];
        while self.peek() == Some(&Token::Amp) {
            self.pos += 1;
            out.push(self.comparison()?);
        }
        if self.pos != self.tokens.len() {
            return Err(self.err("trailing tokens"));
        }
        Ok(out)
    }
}

impl DecisionTable {
    /// Parses CSV text. `vars` fixes the variable order expected by
    /// [`DecisionTable::classify`].
    pub fn parse(text: &str, vars: &[&str]) -> Result<Self> {
        let vars: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == "zone,predicate_id,inequality" => {}
            _ => {
                return Err(MetricsError::Table {
                    line: 1,
                    message: "expected header `zone,predicate_id,inequality`".into(),
                })
            }
        }
        let mut rows = Vec::new();
        let mut otherwise = None;
        for (i, l) in lines {
            let line = i + 1;
            let mut fields = l.splitn(3, ',');
            let (Some(zone), Some(id), Some(ineq)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(MetricsError::Table {
                    line,
                    message: "expected three fields".into(),
                });
            };
            let ineq = ineq.trim();
            let predicate = if ineq == "otherwise" {
                if otherwise.is_some() {
                    return Err(MetricsError::Table {
                        line,
                        message: "second `otherwise` row".into(),
                    });
                }
                otherwise = Some(rows.len());
                Predicate::Otherwise
            } else {
                let tokens = tokenize(ineq, line)?;
                let mut p = Parser {
                    tokens: &tokens,
                    pos: 0,
                    vars: &vars,
                    line,
                };
                Predicate::All(p.conjunction()?)
            };
            rows.push(Row {
                zone: zone.trim().to_string(),
                predicate_id: id.trim().to_string(),
                predicate,
            });
        }
        Ok(Self { vars, rows, otherwise })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Distinct zones in table order.
    pub fn zones(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.zone.as_str()) {
                out.push(&r.zone);
            }
        }
        out
    }

    /// Ids of every non-`otherwise` predicate that holds.
    pub fn matching(&self, values: &[f64]) -> Vec<&Row> {
        assert_eq!(values.len(), self.vars.len(), "decision table arity");
        self.rows
            .iter()
            .filter(|r| match &r.predicate {
                Predicate::Otherwise => false,
                Predicate::All(cs) => cs.iter().all(|c| c.op.holds(c.lhs.eval(values), c.rhs.eval(values))),
            })
            .collect()
    }

    /// The single zone containing `values`.
    pub fn classify(&self, values: &[f64]) -> Result<&str> {
        let mut zones: Vec<&str> = Vec::new();
        for r in self.matching(values) {
            if !zones.contains(&r.zone.as_str()) {
                zones.push(&r.zone);
            }
        }
        match zones.len() {
            0 => self
                .otherwise
                .map(|i| self.rows[i].zone.as_str())
                .ok_or(MetricsError::Unclassified),
            1 => Ok(zones[0]),
            _ => Err(MetricsError::Ambiguous {
                zones: zones.into_iter().map(String::from).collect(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(body: &str) -> Result<DecisionTable> {
        DecisionTable::parse(&format!("zone,predicate_id,inequality\n{body}"), &["x", "y"])
    }

    #[test]
    fn evaluates_linear_expressions() {
        let t = table("P,p1,y>=2*x-3 & y<x+10\nQ,q,otherwise\n").unwrap();
        assert_eq!(t.classify(&[5.0, 7.0]).unwrap(), "P");
        assert_eq!(t.classify(&[5.0, 6.9]).unwrap(), "Q");
        assert_eq!(t.classify(&[5.0, 15.0]).unwrap(), "Q");
        assert_eq!(t.zones(), vec!["P", "Q"]);
    }

    #[test]
    fn leading_minus_and_constants() {
        let t = table("N,n,x<-1 & -x>=0.5*y\nR,r,otherwise\n").unwrap();
        assert_eq!(t.classify(&[-2.0, 4.0]).unwrap(), "N");
        assert_eq!(t.classify(&[-2.0, 4.1]).unwrap(), "R");
    }

    #[test]
    fn same_zone_overlap_is_fine_cross_zone_is_not() {
        let t = table("A,a1,x<5\nA,a2,x<3\nB,b,x>4\nC,c,otherwise\n").unwrap();
        assert_eq!(t.classify(&[2.0, 0.0]).unwrap(), "A");
        assert!(matches!(t.classify(&[4.5, 0.0]), Err(MetricsError::Ambiguous { .. })));
    }

    #[test]
    fn missing_otherwise_is_reported() {
        let t = table("A,a,x<0\n").unwrap();
        assert_eq!(t.classify(&[1.0, 0.0]), Err(MetricsError::Unclassified));
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(table("A,a,x<z\n").is_err());
        assert!(table("A,a,x<<1\n").is_err());
        assert!(table("A,a,x 1\n").is_err());
        assert!(table("A,a,x<1 y\n").is_err());
        assert!(table("A,a\n").is_err());
        assert!(table("A,a,otherwise\nB,b,otherwise\n").is_err());
        assert!(DecisionTable::parse("zone,id\nA,a,x<1\n", &["x"]).is_err());
    }
}
