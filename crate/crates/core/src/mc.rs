//! Monte Carlo harness for randomized-specification loops and repeated
//! sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::causal::{iv_wald, IvOptions};
use crate::datakit::{format_cell, pearson_slices, quantile_sorted, Condition, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{fit, Family, Formula, Quantity};
use crate::rng::{derive_substream, RngState};
use crate::simcore::{evaluate_scm, ScmSpec};

/// Uniform range; an integer range when used for `n` or flagged `integer`.
/// Accepts `{"lo": a, "hi": b}`, `[a, b]`, or a single number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RangeRepr")]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RangeRepr {
    Fixed(f64),
    Pair([f64; 2]),
    Full {
        lo: f64,
        hi: f64,
        #[serde(default)]
        integer: bool,
    },
}

impl From<RangeRepr> for RangeSpec {
    fn from(r: RangeRepr) -> Self {
        match r {
            RangeRepr::Fixed(v) => RangeSpec { lo: v, hi: v, integer: false },
            RangeRepr::Pair([lo, hi]) => RangeSpec { lo, hi, integer: false },
            RangeRepr::Full { lo, hi, integer } => RangeSpec { lo, hi, integer },
        }
    }
}

impl RangeSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        RangeSpec { lo, hi, integer: false }
    }

    fn draw(&self, rng: &mut RngState, integer: bool) -> Result<f64> {
        if integer || self.integer {
            Ok(rng.uniform_int(self.lo.ceil() as i64, self.hi.floor() as i64)? as f64)
        } else {
            rng.uniform_draw(self.lo, self.hi)
        }
    }

    fn validate(&self, what: &str, integer: bool) -> Result<()> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Validation(format!("{what}: range needs finite lo <= hi")));
        }
        if (integer || self.integer) && self.lo.ceil() > self.hi.floor() {
            return Err(Error::Validation(format!("{what}: integer range contains no integers")));
        }
        Ok(())
    }

    fn midpoint(&self) -> f64 {
        if self.integer {
            self.lo.ceil()
        } else {
            (self.lo + self.hi) / 2.0
        }
    }
}

/// One estimate recorded per replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordSpec {
    /// A per-term quantity from a fitted model.
    Coef {
        name: String,
        formula: Formula,
        #[serde(default = "gaussian")]
        family: Family,
        term: String,
        #[serde(default)]
        value: Quantity,
    },
    /// Instrumental-variable Wald ratio. Weak instruments are allowed by
    /// default, matching unconditional division inside a loop.
    Iv {
        name: String,
        y: String,
        x: String,
        instrument: String,
        #[serde(default = "yes")]
        allow_weak: bool,
    },
    /// Quotient of two earlier records.
    Ratio { name: String, numerator: String, denominator: String },
    /// `a - b` (or `|a - b|`) of two earlier records.
    Difference {
        name: String,
        a: String,
        b: String,
        #[serde(default)]
        abs: bool,
    },
}

fn gaussian() -> Family {
    Family::Gaussian
}

fn yes() -> bool {
    true
}

impl RecordSpec {
    pub fn name(&self) -> &str {
        match self {
            RecordSpec::Coef { name, .. }
            | RecordSpec::Iv { name, .. }
            | RecordSpec::Ratio { name, .. }
            | RecordSpec::Difference { name, .. } => name,
        }
    }

    pub fn coef(name: &str, formula: &str, term: &str) -> Self {
        RecordSpec::Coef {
            name: name.into(),
            formula: Formula::parse(formula).expect("valid formula literal"),
            family: Family::Gaussian,
            term: term.into(),
            value: Quantity::B,
        }
    }

    fn variables(&self) -> Vec<String> {
        match self {
            RecordSpec::Coef { formula, .. } => formula.variables().into_iter().map(String::from).collect(),
            RecordSpec::Iv { y, x, instrument, .. } => vec![y.clone(), x.clone(), instrument.clone()],
            _ => Vec::new(),
        }
    }

    fn inputs(&self) -> Vec<&str> {
        match self {
            RecordSpec::Ratio { numerator, denominator, .. } => vec![numerator, denominator],
            RecordSpec::Difference { a, b, .. } => vec![a, b],
            _ => Vec::new(),
        }
    }
}

/// Validates an analysis plan against the names the data will contain.
pub fn validate_plan(plan: &[RecordSpec], columns: &BTreeSet<String>) -> Result<()> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for r in plan {
        for v in r.variables() {
            if !columns.contains(&v) {
                return Err(Error::Validation(format!("record '{}' uses unknown variable '{v}'", r.name())));
            }
        }
        for i in r.inputs() {
            if !seen.contains(i) {
                return Err(Error::Validation(format!(
                    "record '{}' refers to '{i}', which is not an earlier record",
                    r.name()
                )));
            }
        }
        if matches!(r.name(), "i" | "N") || !seen.insert(r.name()) {
            return Err(Error::Validation(format!("record name '{}' is reserved or repeated", r.name())));
        }
    }
    Ok(())
}

/// Evaluates the plan on one dataset. The first failure message is returned
/// alongside the values; failed records are `None`.
pub fn evaluate_plan(plan: &[RecordSpec], data: &Dataset) -> (Vec<Option<f64>>, Option<String>) {
    let mut values: Vec<Option<f64>> = Vec::with_capacity(plan.len());
    let mut first_error = None;
    for r in plan {
        let v = evaluate_record(r, plan, &values, data);
        match v {
            Ok(v) if v.is_finite() => values.push(Some(v)),
            Ok(v) => {
                first_error.get_or_insert_with(|| format!("{}: non-finite value {v}", r.name()));
                values.push(None);
            }
            Err(e) => {
                first_error.get_or_insert_with(|| format!("{}: {e}", r.name()));
                values.push(None);
            }
        }
    }
    (values, first_error)
}

fn evaluate_record(r: &RecordSpec, plan: &[RecordSpec], done: &[Option<f64>], data: &Dataset) -> Result<f64> {
    let earlier = |name: &str| -> Result<f64> {
        let i = plan.iter().position(|p| p.name() == name).ok_or_else(|| Error::Lookup(name.into()))?;
        done.get(i).copied().flatten().ok_or_else(|| Error::EmptyData(format!("input '{name}' is missing")))
    };
    match r {
        RecordSpec::Coef { formula, family, term, value, .. } => fit(data, formula, *family)?.value(term, *value),
        RecordSpec::Iv { y, x, instrument, allow_weak, .. } => {
            let opts = IvOptions { allow_weak: *allow_weak, confounders: Vec::new() };
            Ok(iv_wald(data, y, x, instrument, &opts)?.ratio)
        }
        RecordSpec::Ratio { numerator, denominator, .. } => Ok(earlier(numerator)? / earlier(denominator)?),
        RecordSpec::Difference { a, b, abs, .. } => {
            let d = earlier(a)? - earlier(b)?;
            Ok(if *abs { d.abs() } else { d })
        }
    }
}

/// A randomized-specification loop. String values of the form `"$name"`
/// inside `scm` are replaced by draws from `placeholders[name]`; `scm.n` is
/// replaced by a draw from `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McTemplate {
    pub scm: Value,
    #[serde(default)]
    pub placeholders: BTreeMap<String, RangeSpec>,
    pub n: RangeSpec,
    pub analysis: Vec<RecordSpec>,
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn collect_placeholders(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) if s.starts_with('$') => out.push(s[1..].to_string()),
        Value::Array(a) => a.iter().for_each(|x| collect_placeholders(x, out)),
        Value::Object(o) => o.values().for_each(|x| collect_placeholders(x, out)),
        _ => {}
    }
}

fn substitute(v: &Value, values: &BTreeMap<String, f64>) -> Value {
    match v {
        Value::String(s) if s.starts_with('$') => values
            .get(&s[1..])
            .and_then(|x| serde_json::Number::from_f64(*x))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.iter().map(|x| substitute(x, values)).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, x)| (k.clone(), substitute(x, values))).collect()),
        other => other.clone(),
    }
}

impl McTemplate {
    fn instantiate(&self, n: usize, values: &BTreeMap<String, f64>) -> Result<ScmSpec> {
        let mut v = substitute(&self.scm, values);
        match &mut v {
            Value::Object(o) => {
                o.insert("n".into(), Value::from(n));
            }
            _ => return Err(Error::Validation("mc template 'scm' must be an object".into())),
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Validation("mc template needs reps >= 1".into()));
        }
        self.n.validate("n", true)?;
        if self.n.lo < 1.0 {
            return Err(Error::Validation("mc template n range must start at 1 or more".into()));
        }
        let mut used = Vec::new();
        collect_placeholders(&self.scm, &mut used);
        let used_set: BTreeSet<&String> = used.iter().collect();
        for u in &used_set {
            if !self.placeholders.contains_key(*u) {
                return Err(Error::Validation(format!("placeholder '${u}' has no range")));
            }
        }
        for (k, r) in &self.placeholders {
            if !used_set.contains(k) {
                return Err(Error::Validation(format!("placeholder '{k}' is never used in the scm")));
            }
            r.validate(&format!("placeholder '{k}'"), false)?;
        }
        let mid: BTreeMap<String, f64> = self.placeholders.iter().map(|(k, r)| (k.clone(), r.midpoint())).collect();
        let spec = self
            .instantiate(self.n.lo.ceil() as usize, &mid)
            .map_err(|e| Error::Validation(format!("mc template scm: {e}")))?;
        spec.validate()?;
        let mut columns: BTreeSet<String> = spec.sources.iter().map(|s| s.name.clone()).collect();
        columns.extend(spec.equations.iter().map(|e| e.target.clone()));
        validate_plan(&self.analysis, &columns)?;
        for k in self.placeholders.keys() {
            if self.analysis.iter().any(|r| r.name() == k) {
                return Err(Error::Validation(format!("record name '{k}' collides with a placeholder")));
            }
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("template serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub i: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_sha256: String,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    /// Names aligned with every record's `values`.
    pub series: Vec<String>,
    pub records: Vec<McRecord>,
    pub provenance: Provenance,
    /// Replicates removed by filtering so far.
    pub removed: usize,
}

fn run_replicate(t: &McTemplate, i: usize) -> McRecord {
    let mut rng = derive_substream(t.master_seed, i as u64);
    let width = t.analysis.len() + t.placeholders.len();
    let mut draw = || -> Result<(usize, BTreeMap<String, f64>)> {
        let n = t.n.draw(&mut rng, true)? as usize;
        let mut vals = BTreeMap::new();
        for (k, r) in &t.placeholders {
            vals.insert(k.clone(), r.draw(&mut rng, false)?);
        }
        Ok((n, vals))
    };
    let (n, vals) = match draw() {
        Ok(x) => x,
        Err(e) => return McRecord { i, n: 0, values: vec![None; width], error: Some(e.to_string()) },
    };
    let placeholder_values: Vec<Option<f64>> = vals.values().map(|v| Some(*v)).collect();
    let data = t.instantiate(n, &vals).and_then(|spec| evaluate_scm(&spec, &mut rng));
    match data {
        Ok(d) => {
            let (mut values, error) = evaluate_plan(&t.analysis, &d);
            values.extend(placeholder_values);
            McRecord { i, n, values, error }
        }
        Err(e) => {
            let mut values = vec![None; t.analysis.len()];
            values.extend(placeholder_values);
            McRecord { i, n, values, error: Some(format!("generation: {e}")) }
        }
    }
}

/// Runs every replicate on its own substream, in parallel on the current
/// rayon pool. Records come back in replicate order.
pub fn run_mc(t: &McTemplate) -> Result<McResult> {
    t.validate()?;
    let records: Vec<McRecord> = (0..t.reps).into_par_iter().map(|i| run_replicate(t, i)).collect();
    let mut series: Vec<String> = t.analysis.iter().map(|r| r.name().to_string()).collect();
    series.extend(t.placeholders.keys().cloned());
    Ok(McResult {
        series,
        records,
        provenance: Provenance { template_sha256: t.sha256(), master_seed: t.master_seed },
        removed: 0,
    })
}

/// Draws `k` rows without replacement from the (optionally filtered)
/// population in each replicate and evaluates the plan on the sample.
pub fn repeated_samples(
    pop: &Dataset,
    k: usize,
    reps: usize,
    filter: Option<&[Condition]>,
    analysis: &[RecordSpec],
    master_seed: u64,
) -> Result<McResult> {
    let names: BTreeSet<String> = pop.names().into_iter().map(String::from).collect();
    validate_plan(analysis, &names)?;
    let sub = match filter {
        Some(c) => crate::datakit::filter_rows(pop, c)?,
        None => pop.clone(),
    };
    if sub.n_rows() < k {
        return Err(Error::Sampling(format!(
            "cannot draw {k} rows without replacement from {} eligible rows",
            sub.n_rows()
        )));
    }
    let records = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_substream(master_seed, i as u64);
            match rng.sample_indices(sub.n_rows(), k, false) {
                Ok(rows) => {
                    let (values, error) = evaluate_plan(analysis, &sub.select_rows(&rows));
                    McRecord { i, n: k, values, error }
                }
                Err(e) => McRecord { i, n: k, values: vec![None; analysis.len()], error: Some(e.to_string()) },
            }
        })
        .collect();
    let fingerprint = serde_json::json!({
        "k": k, "reps": reps, "filter": filter, "analysis": analysis, "population_rows": pop.n_rows()
    });
    Ok(McResult {
        series: analysis.iter().map(|r| r.name().to_string()).collect(),
        records,
        provenance: Provenance {
            template_sha256: hex::encode(Sha256::digest(fingerprint.to_string().as_bytes())),
            master_seed,
        },
        removed: 0,
    })
}

impl McResult {
    fn series_index(&self, name: &str) -> Result<Option<usize>> {
        if name == "N" || name == "i" {
            return Ok(None);
        }
        self.series
            .iter()
            .position(|s| s == name)
            .map(Some)
            .ok_or_else(|| Error::Lookup(format!("series '{name}'")))
    }

    /// Values of one series (or `i`/`N`) in record order.
    pub fn values(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let idx = self.series_index(name)?;
        Ok(self
            .records
            .iter()
            .map(|r| match idx {
                Some(j) => r.values[j],
                None if name == "N" => Some(r.n as f64),
                None => Some(r.i as f64),
            })
            .collect())
    }

    pub fn present(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.values(name)?.into_iter().flatten().collect())
    }

    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// CSV with columns `i, N`, then each series.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string(), "N".to_string()];
        header.extend(self.series.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.i.to_string(), r.n.to_string()];
            row.extend(r.values.iter().map(|v| format_cell(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Keeps replicates satisfying every condition; rows with a missing value in
/// a tested series are removed.
pub fn filter_replicates(r: &McResult, predicate: &[Condition]) -> Result<McResult> {
    let cols: Vec<Vec<Option<f64>>> = predicate.iter().map(|c| r.values(&c.var)).collect::<Result<_>>()?;
    let records: Vec<McRecord> = r
        .records
        .iter()
        .enumerate()
        .filter(|(k, _)| predicate.iter().zip(&cols).all(|(c, col)| c.holds(col[*k])))
        .map(|(_, rec)| rec.clone())
        .collect();
    let removed = r.records.len() - records.len();
    Ok(McResult { series: r.series.clone(), records, provenance: r.provenance.clone(), removed: r.removed + removed })
}

/// Six-number summary in `Min. 1st Qu. Median Mean 3rd Qu. Max.` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub series: String,
    pub n: usize,
    pub n_missing: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize_series(r: &McResult, series: &str) -> Result<McSummary> {
    let vals = r.values(series)?;
    let mut v: Vec<f64> = vals.iter().flatten().copied().collect();
    if v.is_empty() {
        return Err(Error::EmptyData(format!("series '{series}' has no values")));
    }
    v.sort_by(f64::total_cmp);
    Ok(McSummary {
        series: series.to_string(),
        n: v.len(),
        n_missing: vals.len() - v.len(),
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

pub fn write_summaries_csv<W: Write>(rows: &[McSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "n", "n_missing", "min", "q1", "median", "mean", "q3", "max"])?;
    for s in rows {
        w.write_record([
            s.series.clone(),
            s.n.to_string(),
            s.n_missing.to_string(),
            format!("{}", s.min),
            format!("{}", s.q1),
            format!("{}", s.median),
            format!("{}", s.mean),
            format!("{}", s.q3),
            format!("{}", s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson correlation over replicates where both series are present.
pub fn series_correlation(r: &McResult, a: &str, b: &str) -> Result<f64> {
    let (va, vb) = (r.values(a)?, r.values(b)?);
    let (x, y): (Vec<f64>, Vec<f64>) = va.iter().zip(&vb).filter_map(|(p, q)| Some(((*p)?, (*q)?))).unzip();
    pearson_slices(&x, &y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; a constant series gives one bin.
pub fn histogram(r: &McResult, series: &str, bins: usize) -> Result<Vec<Bin>> {
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let v = r.present(series)?;
    if v.is_empty() {
        return Err(Error::EmptyData(format!("series '{series}' has no values")));
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![Bin { lo: min, hi: max, count: v.len() }]);
    }
    let width = (max - min) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            lo: min + width * b as f64,
            hi: if b + 1 == bins { max } else { min + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for x in v {
        let k = (((x - min) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    Ok(out)
}

pub fn write_histogram_csv<W: Write>(bins: &[Bin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lo", "hi", "count"])?;
    for b in bins {
        w.write_record([format!("{}", b.lo), format!("{}", b.hi), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
