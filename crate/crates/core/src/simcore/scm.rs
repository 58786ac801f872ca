//! Directed-equation data generation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::datakit::{Column, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngState;

use super::generators::{clamped_integer_normal, repeat_pattern, RepeatMode};

/// An exogenous column definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: SourceKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SourceKind {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Continuous uniform on `[lo, hi)`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Integers drawn uniformly from `lo..=hi`, with replacement.
    UniformInt {
        lo: i64,
        hi: i64,
    },
    Repeat {
        values: Vec<f64>,
        mode: RepeatMode,
        k: usize,
    },
    /// Normal draw truncated toward zero; clamped to `[lo, hi]` when bounds are given.
    ClampedIntNormal {
        mean: f64,
        sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
}

/// Row-dependent error SD: `(v1 * v2 * ...)^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdExpr {
    pub vars: Vec<String>,
    pub exponent: f64,
}

/// Contributes `coef * Normal(mean, sd)` to each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerm {
    pub coef: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
    /// Replaces `sd` with a per-row value when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd_expr: Option<SdExpr>,
}

impl ErrorTerm {
    pub fn new(coef: f64, mean: f64, sd: f64) -> Self {
        ErrorTerm { coef, mean, sd, sd_expr: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub by: String,
    pub levels: BTreeMap<String, ErrorTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub target: String,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<(String, String, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub squares: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_error: Option<GroupError>,
}

impl EquationSpec {
    pub fn new(target: impl Into<String>) -> Self {
        EquationSpec {
            target: target.into(),
            intercept: 0.0,
            linear: Vec::new(),
            interactions: Vec::new(),
            squares: Vec::new(),
            error: None,
            group_error: None,
        }
    }

    pub fn linear(mut self, src: &str, coef: f64) -> Self {
        self.linear.push((src.to_string(), coef));
        self
    }

    pub fn interaction(mut self, a: &str, b: &str, coef: f64) -> Self {
        self.interactions.push((a.to_string(), b.to_string(), coef));
        self
    }

    pub fn square(mut self, src: &str, coef: f64) -> Self {
        self.squares.push((src.to_string(), coef));
        self
    }

    pub fn intercept(mut self, c: f64) -> Self {
        self.intercept = c;
        self
    }

    pub fn error(mut self, coef: f64, mean: f64, sd: f64) -> Self {
        self.error = Some(ErrorTerm::new(coef, mean, sd));
        self
    }

    fn references(&self) -> Vec<&str> {
        let mut r: Vec<&str> = Vec::new();
        r.extend(self.linear.iter().map(|(s, _)| s.as_str()));
        for (a, b, _) in &self.interactions {
            r.push(a);
            r.push(b);
        }
        r.extend(self.squares.iter().map(|(s, _)| s.as_str()));
        if let Some(e) = &self.error {
            if let Some(x) = &e.sd_expr {
                r.extend(x.vars.iter().map(String::as_str));
            }
        }
        if let Some(g) = &self.group_error {
            r.push(&g.by);
            for e in g.levels.values() {
                if let Some(x) = &e.sd_expr {
                    r.extend(x.vars.iter().map(String::as_str));
                }
            }
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub n: usize,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub equations: Vec<EquationSpec>,
}

impl ScmSpec {
    pub fn new(n: usize) -> Self {
        ScmSpec { n, sources: Vec::new(), equations: Vec::new() }
    }

    pub fn source(mut self, name: &str, kind: SourceKind) -> Self {
        self.sources.push(SourceSpec { name: name.to_string(), kind });
        self
    }

    pub fn normal(self, name: &str, mean: f64, sd: f64) -> Self {
        self.source(name, SourceKind::Normal { mean, sd })
    }

    pub fn equation(mut self, eq: EquationSpec) -> Self {
        self.equations.push(eq);
        self
    }

    /// Checks names and parameters. Every reference must name a source or an
    /// earlier equation target, so cycles surface as forward references.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("n must be at least 1".into()));
        }
        let mut defined: HashSet<&str> = HashSet::new();
        for s in &self.sources {
            if !defined.insert(&s.name) {
                return Err(Error::Validation(format!("'{}' is defined more than once", s.name)));
            }
            validate_source(s, self.n)?;
        }
        let targets: HashSet<&str> = self.equations.iter().map(|e| e.target.as_str()).collect();
        for (k, eq) in self.equations.iter().enumerate() {
            if defined.contains(eq.target.as_str()) {
                return Err(Error::Validation(format!("'{}' is defined more than once", eq.target)));
            }
            for r in eq.references() {
                if !defined.contains(r) {
                    let why = if r == eq.target || targets.contains(r) {
                        "cyclic or forward reference"
                    } else {
                        "unknown name"
                    };
                    return Err(Error::Validation(format!(
                        "equation {k} ('{}'): {why} '{r}'",
                        eq.target
                    )));
                }
            }
            if eq.error.is_some() && eq.group_error.is_some() {
                return Err(Error::Validation(format!(
                    "equation '{}' declares both error and group_error",
                    eq.target
                )));
            }
            let terms = eq.error.iter().chain(eq.group_error.iter().flat_map(|g| g.levels.values()));
            for e in terms {
                if !(e.sd >= 0.0 && e.sd.is_finite()) {
                    return Err(Error::Validation(format!(
                        "equation '{}': error sd must be finite and non-negative",
                        eq.target
                    )));
                }
            }
            if let Some(g) = &eq.group_error {
                for level in g.levels.keys() {
                    level.parse::<i64>().map_err(|_| {
                        Error::Validation(format!(
                            "equation '{}': group level '{level}' is not an integer",
                            eq.target
                        ))
                    })?;
                }
            }
            defined.insert(&eq.target);
        }
        Ok(())
    }
}

fn validate_source(s: &SourceSpec, n: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::Validation(format!("source '{}': {msg}", s.name)));
    match &s.kind {
        SourceKind::Normal { sd, .. } if !(*sd >= 0.0) => bad(format!("sd must be non-negative, got {sd}")),
        SourceKind::Uniform { lo, hi } if !(lo <= hi) => bad(format!("lo {lo} exceeds hi {hi}")),
        SourceKind::UniformInt { lo, hi } if lo > hi => bad(format!("lo {lo} exceeds hi {hi}")),
        SourceKind::ClampedIntNormal { sd, lo, hi, .. } => {
            if !(*sd >= 0.0) {
                return bad(format!("sd must be non-negative, got {sd}"));
            }
            if let (Some(l), Some(h)) = (lo, hi) {
                if l > h {
                    return bad(format!("lo {l} exceeds hi {h}"));
                }
            }
            Ok(())
        }
        SourceKind::Repeat { values, k, .. } if values.len() * k != n => bad(format!(
            "pattern of length {} repeated {k} times does not give n = {n}",
            values.len()
        )),
        _ => Ok(()),
    }
}

fn draw_source(s: &SourceSpec, n: usize, rng: &mut RngState) -> Result<Column> {
    let values = match &s.kind {
        SourceKind::Normal { mean, sd } => rng.normal_draws(n, *mean, *sd)?,
        SourceKind::Uniform { lo, hi } => (0..n).map(|_| rng.uniform_draw(*lo, *hi)).collect::<Result<_>>()?,
        SourceKind::UniformInt { lo, hi } => {
            (0..n).map(|_| rng.uniform_int(*lo, *hi).map(|v| v as f64)).collect::<Result<_>>()?
        }
        SourceKind::Repeat { values, mode, k } => repeat_pattern(values, *mode, *k, n)?,
        SourceKind::ClampedIntNormal { mean, sd, lo, hi } => clamped_integer_normal(
            n,
            *mean,
            *sd,
            lo.unwrap_or(f64::NEG_INFINITY),
            hi.unwrap_or(f64::INFINITY),
            rng,
        )?,
    };
    Ok(Column::new(s.name.clone(), values))
}

/// Generates one dataset: sources first, then equations in declaration order.
pub fn evaluate_scm(spec: &ScmSpec, rng: &mut RngState) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let mut data = Dataset::new();
    for s in &spec.sources {
        data.push_column(draw_source(s, n, rng)?)?;
    }
    for eq in &spec.equations {
        let col = evaluate_equation(eq, &data, n, rng)?;
        data.push_column(col)?;
    }
    Ok(data)
}

fn raw<'a>(data: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    Ok(data.column(name)?.raw_values())
}

fn evaluate_equation(eq: &EquationSpec, data: &Dataset, n: usize, rng: &mut RngState) -> Result<Column> {
    let mut out = vec![eq.intercept; n];
    for (src, coef) in &eq.linear {
        let v = raw(data, src)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += coef * x;
        }
    }
    for (a, b, coef) in &eq.interactions {
        let (va, vb) = (raw(data, a)?, raw(data, b)?);
        for i in 0..n {
            out[i] += coef * va[i] * vb[i];
        }
    }
    for (src, coef) in &eq.squares {
        let v = raw(data, src)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += coef * x * x;
        }
    }
    if let Some(e) = &eq.error {
        for (i, o) in out.iter_mut().enumerate() {
            *o += draw_error(e, data, i, &eq.target, rng)?;
        }
    }
    if let Some(g) = &eq.group_error {
        let by = raw(data, &g.by)?;
        let mut levels: BTreeMap<i64, &ErrorTerm> = BTreeMap::new();
        for (k, e) in &g.levels {
            levels.insert(k.parse().map_err(|_| Error::Validation(format!("bad group level '{k}'")))?, e);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let v = by[i];
            if v.fract() != 0.0 {
                return Err(Error::Validation(format!(
                    "group_error of '{}': '{}' value {v} is not an integer",
                    eq.target, g.by
                )));
            }
            let e = levels.get(&(v as i64)).ok_or_else(|| {
                Error::Validation(format!(
                    "group_error of '{}': no error term for {} = {v}",
                    eq.target, g.by
                ))
            })?;
            *o += draw_error(e, data, i, &eq.target, rng)?;
        }
    }
    Ok(Column::new(eq.target.clone(), out))
}

fn draw_error(e: &ErrorTerm, data: &Dataset, row: usize, target: &str, rng: &mut RngState) -> Result<f64> {
    let sd = match &e.sd_expr {
        None => e.sd,
        Some(x) => {
            let mut base = 1.0;
            for v in &x.vars {
                base *= raw(data, v)?[row];
            }
            if base < 0.0 {
                return Err(Error::Parameter(format!(
                    "error sd of '{target}' at row {row}: negative base {base} raised to {}",
                    x.exponent
                )));
            }
            base.powf(x.exponent)
        }
    };
    Ok(e.coef * rng.normal(e.mean, sd)?)
}
