//! Tabular data with explicit missingness, plus the descriptive statistics
//! used throughout the laboratory.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named numeric column. Missing cells are flagged and excluded from
/// every statistic.
#[derive(Clone, Debug)]
pub struct Column {
    name: String,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl Column {
    /// A fully observed column. Non-finite values are stored as missing.
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| !v.is_finite()).collect();
        Column { name: name.into(), values, missing }
    }

    pub fn from_options(name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for c in cells {
            match c {
                Some(v) if v.is_finite() => {
                    values.push(v);
                    missing.push(false);
                }
                _ => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Column { name: name.into(), values, missing }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// The non-missing values in row order.
    pub fn present(&self) -> Vec<f64> {
        self.cells().flatten().collect()
    }

    /// Raw storage; missing cells hold NaN.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn map_present(&self, name: impl Into<String>, f: impl Fn(f64) -> Option<f64>) -> Column {
        Column::from_options(name, self.cells().map(|c| c.and_then(&f)).collect())
    }

    pub fn select(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
        }
    }

    fn push(&mut self, cell: Option<f64>) {
        match cell {
            Some(v) if v.is_finite() => {
                self.values.push(v);
                self.missing.push(false);
            }
            _ => {
                self.values.push(f64::NAN);
                self.missing.push(true);
            }
        }
    }
}

impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.len() == other.len() && self.cells().eq(other.cells())
    }
}

/// Ordered collection of equal-length, uniquely named columns.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        let mut ds = Dataset::new();
        for c in columns {
            ds.push_column(c)?;
        }
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    /// Appends a column; the first column fixes the row count.
    pub fn push_column(&mut self, col: Column) -> Result<()> {
        if self.has_column(&col.name) {
            return Err(Error::Validation(format!("duplicate column name '{}'", col.name)));
        }
        if self.columns.is_empty() {
            self.n_rows = col.len();
        } else if col.len() != self.n_rows {
            return Err(Error::Validation(format!(
                "column '{}' has {} rows, dataset has {}",
                col.name,
                col.len(),
                self.n_rows
            )));
        }
        self.columns.push(col);
        Ok(())
    }

    /// Adds `col`, replacing any existing column with the same name.
    pub fn set_column(&mut self, col: Column) -> Result<()> {
        if let Some(pos) = self.columns.iter().position(|c| c.name == col.name) {
            if col.len() != self.n_rows {
                return Err(Error::Validation(format!(
                    "column '{}' has {} rows, dataset has {}",
                    col.name,
                    col.len(),
                    self.n_rows
                )));
            }
            self.columns[pos] = col;
            Ok(())
        } else {
            self.push_column(col)
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let rows: Vec<usize> = (0..self.n_rows).filter(|&r| keep(r)).collect();
        self.select_rows(&rows)
    }

    /// Appends one row; columns without an assignment receive a missing cell.
    pub fn append_row(&mut self, assignments: &BTreeMap<String, f64>) -> Result<()> {
        for name in assignments.keys() {
            if !self.has_column(name) {
                return Err(Error::Validation(format!("cannot assign unknown column '{name}'")));
            }
        }
        for col in &mut self.columns {
            let cell = assignments.get(&col.name).copied();
            col.push(cell);
        }
        self.n_rows += 1;
        Ok(())
    }

    /// Stacks `other` below `self`; both must have identical column names in order.
    pub fn vstack(&self, other: &Dataset) -> Result<Dataset> {
        if self.names() != other.names() {
            return Err(Error::Validation("cannot stack datasets with different columns".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| {
                let mut c = a.clone();
                for cell in b.cells() {
                    c.push(cell);
                }
                c
            })
            .collect();
        Ok(Dataset { columns, n_rows: self.n_rows + other.n_rows })
    }

    /// Writes the dataset as CSV: a header of names, empty fields for missing
    /// cells, numbers in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.names())?;
        let mut record = Vec::with_capacity(self.n_cols());
        for r in 0..self.n_rows {
            record.clear();
            for c in &self.columns {
                record.push(format_cell(c.get(r)));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Validation(format!(
                    "CSV row {} has {} fields, header has {}",
                    line + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                cells[j].push(parse_cell(field).map_err(|_| {
                    Error::Validation(format!(
                        "CSV row {}, column '{}': cannot parse '{field}' as a number",
                        line + 2,
                        headers[j]
                    ))
                })?);
            }
        }
        Dataset::from_columns(headers.into_iter().zip(cells).map(|(h, c)| Column::from_options(h, c)).collect())
    }
}

pub(crate) fn format_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn parse_cell(field: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    if field.is_empty() || field == "NA" || field == "NaN" {
        Ok(None)
    } else {
        field.parse::<f64>().map(Some)
    }
}

/// Six-number summary plus moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub n_missing: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    pub sd: f64,
    pub variance: f64,
    /// `None` when the sd is zero.
    pub skew: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

pub fn summarize(col: &Column) -> Result<SummaryStats> {
    let mut v = col.present();
    if v.is_empty() {
        return Err(Error::EmptyData(format!("column '{}' has no observed values", col.name())));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let nf = n as f64;
    let mean = v.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in &v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skew, excess_kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };
    Ok(SummaryStats {
        n,
        n_missing: col.n_missing(),
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        mean,
        q3: quantile_sorted(&v, 0.75),
        max: v[n - 1],
        sd: variance.sqrt(),
        variance,
        skew,
        excess_kurtosis,
    })
}

/// Type-7 quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn quantile_type7(col: &Column, p: f64) -> Result<f64> {
    check_probability(p)?;
    let mut v = col.present();
    if v.is_empty() {
        return Err(Error::EmptyData(format!("column '{}' has no observed values", col.name())));
    }
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, p))
}

/// Type-7 quantiles for several probabilities with one sort.
pub fn quantiles_type7(col: &Column, probs: &[f64]) -> Result<Vec<f64>> {
    for &p in probs {
        check_probability(p)?;
    }
    let mut v = col.present();
    if v.is_empty() {
        return Err(Error::EmptyData(format!("column '{}' has no observed values", col.name())));
    }
    v.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&v, p)).collect())
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("probability must lie in [0, 1], got {p}")))
    }
}

/// Ranks of the observed values (in row order), ties sharing the mean rank.
pub fn ranks_average_ties(col: &Column) -> Result<Vec<f64>> {
    let v = col.present();
    if v.is_empty() {
        return Err(Error::EmptyData(format!("column '{}' has no observed values", col.name())));
    }
    Ok(average_ranks(&v))
}

pub(crate) fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Rows where both columns are observed.
pub fn paired(x: &Column, y: &Column) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "columns '{}' and '{}' differ in length",
            x.name(),
            y.name()
        )));
    }
    Ok(x.cells().zip(y.cells()).filter_map(|(a, b)| Some((a?, b?))).unzip())
}

pub(crate) fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("correlation needs at least 3 pairs, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("correlation undefined for a zero-variance variable".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation over pairwise-complete rows.
pub fn pearson(x: &Column, y: &Column) -> Result<f64> {
    let (a, b) = paired(x, y)?;
    pearson_slices(&a, &b)
}

/// Spearman correlation: Pearson correlation of average-tie ranks over
/// pairwise-complete rows.
pub fn spearman(x: &Column, y: &Column) -> Result<f64> {
    let (a, b) = paired(x, y)?;
    pearson_slices(&average_ranks(&a), &average_ranks(&b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub delta_mean: f64,
    pub delta_sd: f64,
    pub delta_skew: Option<f64>,
    pub delta_kurtosis: Option<f64>,
}

/// Treatment-minus-control moment differences, one row per covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub n_treatment: usize,
    pub n_control: usize,
    pub rows: Vec<BalanceRow>,
}

pub fn balance_diff(data: &Dataset, group: &Column, covariates: &[String]) -> Result<BalanceReport> {
    if group.len() != data.n_rows() {
        return Err(Error::Validation("group column length differs from dataset".into()));
    }
    let mut treat_rows = Vec::new();
    let mut control_rows = Vec::new();
    for (i, g) in group.cells().enumerate() {
        match g {
            Some(v) if v == 1.0 => treat_rows.push(i),
            Some(v) if v == 0.0 => control_rows.push(i),
            None => {}
            Some(v) => {
                return Err(Error::Grouping(format!("group indicator must be 0 or 1, found {v}")));
            }
        }
    }
    if treat_rows.is_empty() || control_rows.is_empty() {
        return Err(Error::Grouping("both treatment and control groups must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(covariates.len());
    for name in covariates {
        let col = data.column(name)?;
        let t = summarize(&col.select(&treat_rows))?;
        let c = summarize(&col.select(&control_rows))?;
        rows.push(BalanceRow {
            covariate: name.clone(),
            delta_mean: t.mean - c.mean,
            delta_sd: t.sd - c.sd,
            delta_skew: t.skew.zip(c.skew).map(|(a, b)| a - b),
            delta_kurtosis: t.excess_kurtosis.zip(c.excess_kurtosis).map(|(a, b)| a - b),
        });
    }
    Ok(BalanceReport { n_treatment: treat_rows.len(), n_control: control_rows.len(), rows })
}

/// Drops every row with a missing value among `vars`. Returns the reduced
/// dataset and the number of rows removed.
pub fn listwise_complete(data: &Dataset, vars: &[&str]) -> Result<(Dataset, usize)> {
    let cols: Vec<&Column> = vars.iter().map(|v| data.column(v)).collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&r| cols.iter().all(|c| !c.is_missing(r))).collect();
    let removed = data.n_rows() - rows.len();
    if removed == 0 {
        return Ok((data.clone(), 0));
    }
    Ok((data.select_rows(&rows), removed))
}

/// Comparison used by row filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<", alias = "lt")]
    Lt,
    #[serde(rename = "<=", alias = "le")]
    Le,
    #[serde(rename = ">", alias = "gt")]
    Gt,
    #[serde(rename = ">=", alias = "ge")]
    Ge,
    #[serde(rename = "==", alias = "eq")]
    Eq,
    #[serde(rename = "!=", alias = "ne")]
    Ne,
}

impl CmpOp {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

/// One threshold comparison, `{"var": "PEA", "op": ">=", "value": 15}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    #[serde(alias = "series")]
    pub var: String,
    pub op: CmpOp,
    pub value: f64,
}

impl Condition {
    pub fn new(var: &str, op: CmpOp, value: f64) -> Self {
        Condition { var: var.to_string(), op, value }
    }

    /// Missing cells never satisfy a condition.
    pub fn holds(&self, cell: Option<f64>) -> bool {
        cell.is_some_and(|v| self.op.holds(v, self.value))
    }
}

/// Rows satisfying every condition (a conjunction).
pub fn filter_rows(data: &Dataset, conditions: &[Condition]) -> Result<Dataset> {
    let cols: Vec<&Column> = conditions.iter().map(|c| data.column(&c.var)).collect::<Result<_>>()?;
    Ok(data.filter_rows(|r| conditions.iter().zip(&cols).all(|(c, col)| c.holds(col.get(r)))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Column {
        Column::new("v", v.to_vec())
    }

    #[test]
    fn summary_of_small_vector() {
        let s = summarize(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((s.mean, s.median, s.sd, s.min, s.max), (2.0, 2.0, 1.0, 1.0, 3.0));
        assert_eq!(s.skew, Some(0.0));
    }

    #[test]
    fn constant_column_has_undefined_shape() {
        let s = summarize(&col(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(s.sd, 0.0);
        assert!(s.skew.is_none() && s.excess_kurtosis.is_none());
    }

    #[test]
    fn all_missing_is_an_error() {
        let c = Column::from_options("m", vec![None, None]);
        assert!(matches!(summarize(&c), Err(Error::EmptyData(_))));
    }

    // Direct-formula oracle for [0,1,2,3,4,100]: mean 110/6; central moments
    // by hand over the six deviations.
    #[test]
    fn summary_matches_hand_moments() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0, 100.0];
        let s = summarize(&col(&v)).unwrap();
        let mean: f64 = 110.0 / 6.0;
        let devs: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let m2 = devs.iter().map(|d| d.powi(2)).sum::<f64>() / 6.0;
        let m3 = devs.iter().map(|d| d.powi(3)).sum::<f64>() / 6.0;
        let m4 = devs.iter().map(|d| d.powi(4)).sum::<f64>() / 6.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.variance - m2 * 6.0 / 5.0).abs() < 1e-9);
        assert!((s.skew.unwrap() - m3 / m2.powf(1.5)).abs() < 1e-12);
        assert!((s.excess_kurtosis.unwrap() - (m4 / (m2 * m2) - 3.0)).abs() < 1e-12);
        // type 7: h = 5*0.25 = 1.25 -> 1 + .25*(2-1)
        assert_eq!(s.q1, 1.25);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q3, 3.75);
    }

    #[test]
    fn type7_examples() {
        let c = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(quantile_type7(&c, 0.25).unwrap(), 2.0);
        assert_eq!(quantile_type7(&c, 1.0).unwrap(), 5.0);
        assert_eq!(quantile_type7(&col(&[10.0, 20.0]), 0.5).unwrap(), 15.0);
        assert!(quantile_type7(&c, 1.5).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(ranks_average_ties(&col(&[10.0, 20.0, 20.0, 30.0])).unwrap(), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(ranks_average_ties(&col(&[5.0, 4.0, 3.0])).unwrap(), vec![3.0, 2.0, 1.0]);
        assert_eq!(ranks_average_ties(&col(&[1.0, 1.0, 1.0])).unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn pearson_extremes_and_degenerate() {
        let x = col(&[1.0, 2.0, 4.0, 8.0]);
        let neg = Column::new("n", x.present().iter().map(|v| -v).collect());
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &col(&[3.0; 4])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn spearman_monotone_invariance_exact() {
        let x = col(&[0.3, -1.2, 2.5, 0.0, 1.1, -0.4]);
        let ex = Column::new("e", x.present().iter().map(|v| v.exp()).collect());
        assert_eq!(spearman(&x, &ex).unwrap(), spearman(&x, &x).unwrap());
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn spearman_drops_incomplete_pairs() {
        let x = Column::from_options("x", vec![Some(1.0), Some(2.0), None, Some(4.0), Some(5.0)]);
        let y = Column::from_options("y", vec![Some(2.0), Some(4.0), Some(9.0), None, Some(10.0)]);
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn balance_examples() {
        let data = Dataset::from_columns(vec![
            Column::new("a", vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]),
            Column::new("b", vec![0.0, 10.0, 0.0, 5.0, 5.0, 0.0]),
        ])
        .unwrap();
        let g = Column::new("g", vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let r = balance_diff(&data, &g, &["a".into()]).unwrap();
        assert_eq!(r.rows[0].delta_mean, 0.0);
        assert_eq!(r.rows[0].delta_sd, 0.0);
        assert_eq!(r.rows[0].delta_skew, Some(0.0));

        // treatment {0,10} vs control {5,5}
        let d2 = Dataset::from_columns(vec![Column::new("b", vec![0.0, 10.0, 5.0, 5.0])]).unwrap();
        let g2 = Column::new("g", vec![1.0, 1.0, 0.0, 0.0]);
        let r2 = balance_diff(&d2, &g2, &["b".into()]).unwrap();
        assert_eq!(r2.rows[0].delta_mean, 0.0);
        assert!((r2.rows[0].delta_sd - 50f64.sqrt()).abs() < 1e-12);
        assert!(r2.rows[0].delta_skew.is_none());

        let one = Column::new("g", vec![1.0; 6]);
        assert!(matches!(balance_diff(&data, &one, &["a".into()]), Err(Error::Grouping(_))));
    }

    #[test]
    fn conditions_conjoin_and_skip_missing() {
        let data = Dataset::from_columns(vec![
            Column::from_options("a", vec![Some(1.0), Some(5.0), None, Some(9.0)]),
            Column::new("b", vec![0.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let c = [Condition::new("a", CmpOp::Ge, 5.0), Condition::new("b", CmpOp::Eq, 1.0)];
        assert_eq!(filter_rows(&data, &c).unwrap().column("a").unwrap().present(), vec![5.0, 9.0]);
        let parsed: Condition = serde_json::from_str(r#"{"var":"a","op":"<=","value":8}"#).unwrap();
        assert_eq!(parsed, Condition::new("a", CmpOp::Le, 8.0));
        assert!(filter_rows(&data, &[Condition::new("zz", CmpOp::Lt, 0.0)]).is_err());
    }

    #[test]
    fn listwise_counts() {
        let data = Dataset::from_columns(vec![
            Column::new("x", vec![1.0, 2.0, 3.0]),
            Column::from_options("y", vec![Some(1.0), None, Some(3.0)]),
        ])
        .unwrap();
        let (same, dropped) = listwise_complete(&data, &["x"]).unwrap();
        assert_eq!((same.n_rows(), dropped), (3, 0));
        let (less, dropped) = listwise_complete(&data, &["x", "y"]).unwrap();
        assert_eq!((less.n_rows(), dropped), (2, 1));
    }

    #[test]
    fn dataset_rejects_duplicates_and_ragged_columns() {
        let mut ds = Dataset::from_columns(vec![Column::new("x", vec![1.0, 2.0])]).unwrap();
        assert!(ds.push_column(Column::new("x", vec![1.0, 2.0])).is_err());
        assert!(ds.push_column(Column::new("y", vec![1.0])).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_missing_and_precision() {
        let ds = Dataset::from_columns(vec![
            Column::new("x", vec![0.1 + 0.2, -1e-300, 123456789.123456789]),
            Column::from_options("y", vec![None, Some(std::f64::consts::PI), Some(2.0)]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn quantiles_monotone(v in prop::collection::vec(-1e6f64..1e6, 1..60), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let c = col(&v);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(quantile_type7(&c, lo).unwrap() <= quantile_type7(&c, hi).unwrap());
            let s = summarize(&c).unwrap();
            prop_assert_eq!(quantile_type7(&c, 0.0).unwrap(), s.min);
            prop_assert_eq!(quantile_type7(&c, 1.0).unwrap(), s.max);
        }

        #[test]
        fn ranks_sum_to_triangular(v in prop::collection::vec(-50i32..50, 1..80)) {
            let c = col(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
            let n = v.len() as f64;
            let total: f64 = ranks_average_ties(&c).unwrap().iter().sum();
            prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn balance_is_antisymmetric(v in prop::collection::vec(-100f64..100.0, 8..40)) {
            let n = v.len();
            let data = Dataset::from_columns(vec![Column::new("z", v)]).unwrap();
            let g = Column::new("g", (0..n).map(|i| (i % 2) as f64).collect());
            let swapped = Column::new("g", (0..n).map(|i| 1.0 - (i % 2) as f64).collect());
            let a = balance_diff(&data, &g, &["z".into()]).unwrap();
            let b = balance_diff(&data, &swapped, &["z".into()]).unwrap();
            prop_assert_eq!(a.rows[0].delta_mean, -b.rows[0].delta_mean);
            prop_assert_eq!(a.rows[0].delta_sd, -b.rows[0].delta_sd);
            if let (Some(x), Some(y)) = (a.rows[0].delta_skew, b.rows[0].delta_skew) {
                prop_assert_eq!(x, -y);
            }
        }

        // Brute-force oracle: textbook two-pass formulas on 100 elements.
        #[test]
        fn summary_matches_direct_formulas(v in prop::collection::vec(-1e3f64..1e3, 100)) {
            let s = summarize(&col(&v)).unwrap();
            let n = v.len() as f64;
            let mut mean = 0.0;
            for x in &v { mean += x; }
            mean /= n;
            let mut ss = 0.0;
            for x in &v { ss += (x - mean) * (x - mean); }
            let sd = (ss / (n - 1.0)).sqrt();
            prop_assert!((s.mean - mean).abs() < 1e-12 * (1.0 + mean.abs()) * 10.0);
            prop_assert!((s.sd - sd).abs() < 1e-12 * sd.max(1.0) * 10.0);
            prop_assert!((s.variance - s.sd * s.sd).abs() < 1e-9 * s.variance.max(1.0));
        }
    }
}
