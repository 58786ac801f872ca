//! Model formulas: `Y ~ X + Z + X:Z + X^2`.
//!
//! Also accepted: `X*Z` (expands to `X + Z + X:Z`), `I(X^2)` (same as
//! `X^2`), `- 1` or `+ 0` to drop the intercept, and `+ 1` to keep it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datakit::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Main(String),
    Interaction(String, String),
    Square(String),
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Main(a) => a.clone(),
            Term::Interaction(a, b) => format!("{a}:{b}"),
            Term::Square(a) => format!("{a}^2"),
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        match self {
            Term::Main(a) | Term::Square(a) => vec![a],
            Term::Interaction(a, b) => vec![a, b],
        }
    }

    fn same_as(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Interaction(a, b), Term::Interaction(c, d)) => (a == c && b == d) || (a == d && b == c),
            _ => self == other,
        }
    }

    fn value(&self, data: &Dataset, row: usize) -> Result<Option<f64>> {
        Ok(match self {
            Term::Main(a) => data.column(a)?.get(row),
            Term::Square(a) => data.column(a)?.get(row).map(|v| v * v),
            Term::Interaction(a, b) => {
                let (x, y) = (data.column(a)?.get(row), data.column(b)?.get(row));
                x.zip(y).map(|(x, y)| x * y)
            }
        })
    }
}

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Formula {
    pub response: String,
    pub terms: Vec<Term>,
    pub intercept: bool,
}

impl Formula {
    pub fn new(response: &str, terms: Vec<Term>, intercept: bool) -> Result<Self> {
        let f = Formula { response: response.to_string(), terms, intercept };
        f.check_duplicates()?;
        Ok(f)
    }

    /// `response ~ p1 + p2 + ...` with an intercept.
    pub fn linear(response: &str, predictors: &[&str]) -> Self {
        Formula {
            response: response.to_string(),
            terms: predictors.iter().map(|p| Term::Main(p.to_string())).collect(),
            intercept: true,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser { src: text, pos: 0 }.formula()
    }

    fn check_duplicates(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|u| u.same_as(t)) {
                return Err(Error::Validation(format!("duplicate term '{}'", t.label())));
            }
        }
        Ok(())
    }

    /// Column labels of the design matrix, intercept first when present.
    pub fn labels(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(self.terms.len() + 1);
        if self.intercept {
            v.push(INTERCEPT.to_string());
        }
        v.extend(self.terms.iter().map(Term::label));
        v
    }

    /// Every variable the formula touches, response first, without repeats.
    pub fn variables(&self) -> Vec<&str> {
        let mut v: Vec<&str> = vec![&self.response];
        for t in &self.terms {
            for name in t.variables() {
                if !v.contains(&name) {
                    v.push(name);
                }
            }
        }
        v
    }

    pub fn check_names(&self, data: &Dataset) -> Result<()> {
        for v in self.variables() {
            if !data.has_column(v) {
                return Err(Error::Validation(format!("formula variable '{v}' is not in the data")));
            }
        }
        Ok(())
    }

    /// Builds the design after listwise deletion over the formula variables.
    pub fn design(&self, data: &Dataset) -> Result<Design> {
        self.check_names(data)?;
        let cols: Vec<_> = self.variables().iter().map(|v| data.column(v)).collect::<Result<_>>()?;
        let rows: Vec<usize> =
            (0..data.n_rows()).filter(|&r| cols.iter().all(|c| !c.is_missing(r))).collect();
        let n_dropped = data.n_rows() - rows.len();
        let x = self.matrix_rows(data, &rows)?;
        let ycol = data.column(&self.response)?;
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ycol.get(r).unwrap()));
        Ok(Design { x, y, labels: self.labels(), rows, n_dropped })
    }

    /// Design-matrix rows for the given row indices; missing cells become NaN.
    pub fn matrix_rows(&self, data: &Dataset, rows: &[usize]) -> Result<DMatrix<f64>> {
        let p = self.terms.len() + usize::from(self.intercept);
        let mut x = DMatrix::<f64>::zeros(rows.len(), p);
        for (i, &r) in rows.iter().enumerate() {
            let mut j = 0;
            if self.intercept {
                x[(i, 0)] = 1.0;
                j = 1;
            }
            for t in &self.terms {
                x[(i, j)] = t.value(data, r)?.unwrap_or(f64::NAN);
                j += 1;
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub labels: Vec<String>,
    /// Source row indices retained after listwise deletion.
    pub rows: Vec<usize>,
    pub n_dropped: usize,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        let labels: Vec<String> = self.terms.iter().map(Term::label).collect();
        match (labels.is_empty(), self.intercept) {
            (true, true) => write!(f, "1"),
            (true, false) => write!(f, "0"),
            (false, true) => write!(f, "{}", labels.join(" + ")),
            (false, false) => write!(f, "{} - 1", labels.join(" + ")),
        }
    }
}

impl FromStr for Formula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Formula::parse(s)
    }
}

impl TryFrom<String> for Formula {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Formula::parse(&s)
    }
}

impl From<Formula> for String {
    fn from(f: Formula) -> String {
        f.to_string()
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { position: self.pos, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        let mut first = true;
        while let Some(c) = self.peek() {
            let ok = c.is_ascii_alphabetic() || c == '_' || c == '.' || (!first && c.is_ascii_digit());
            if !ok {
                break;
            }
            self.pos += c.len_utf8();
            first = false;
        }
        if start == self.pos {
            return self.err("expected a variable name");
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            self.src[start..self.pos].parse().ok()
        }
    }

    fn formula(mut self) -> Result<Formula> {
        let response = self.ident()?;
        self.expect('~')?;
        let mut terms: Vec<Term> = Vec::new();
        let mut intercept = true;
        let mut sign_plus = true;
        let mut expecting_term = true;
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                if expecting_term {
                    return self.err("expected a term");
                }
                break;
            }
            if !expecting_term {
                if self.eat('+') {
                    sign_plus = true;
                } else if self.eat('-') {
                    sign_plus = false;
                } else {
                    return self.err("expected '+' or '-'");
                }
                expecting_term = true;
                continue;
            }
            let at = self.pos;
            if let Some(k) = self.number() {
                match (k, sign_plus) {
                    (0, true) | (1, false) => intercept = false,
                    (1, true) => intercept = true,
                    _ => {
                        self.pos = at;
                        return self.err("only 0 or 1 may appear as a constant term");
                    }
                }
            } else {
                if !sign_plus {
                    return self.err("only the intercept may be removed with '-'");
                }
                for t in self.product()? {
                    if terms.iter().any(|u| u.same_as(&t)) {
                        self.pos = at;
                        return self.err(format!("duplicate term '{}'", t.label()));
                    }
                    terms.push(t);
                }
            }
            expecting_term = false;
        }
        Ok(Formula { response, terms, intercept })
    }

    /// `factor (('*' | ':') factor)?`
    fn product(&mut self) -> Result<Vec<Term>> {
        let a = self.factor()?;
        if self.eat(':') {
            let b = self.factor()?;
            return Ok(vec![self.interaction(a, b)?]);
        }
        if self.eat('*') {
            let b = self.factor()?;
            let ab = self.interaction(a.clone(), b.clone())?;
            return Ok(vec![a, b, ab]);
        }
        Ok(vec![a])
    }

    fn interaction(&self, a: Term, b: Term) -> Result<Term> {
        match (a, b) {
            (Term::Main(a), Term::Main(b)) if a != b => Ok(Term::Interaction(a, b)),
            (Term::Main(_), Term::Main(_)) => self.err("a variable cannot interact with itself; use X^2"),
            _ => self.err("interactions are limited to two plain variables"),
        }
    }

    /// `name | name '^' 2 | 'I' '(' name '^' 2 ')'`
    fn factor(&mut self) -> Result<Term> {
        let name = self.ident()?;
        if name == "I" && self.eat('(') {
            let inner = self.ident()?;
            self.power()?;
            self.expect(')')?;
            return Ok(Term::Square(inner));
        }
        self.skip_ws();
        if self.peek() == Some('^') {
            self.power()?;
            return Ok(Term::Square(name));
        }
        Ok(Term::Main(name))
    }

    fn power(&mut self) -> Result<()> {
        self.expect('^')?;
        let at = self.pos;
        match self.number() {
            Some(2) => Ok(()),
            _ => {
                self.pos = at;
                self.err("only squares (^2) are supported")
            }
        }
    }
}
