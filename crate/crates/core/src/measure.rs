//! Level-of-measurement recodes and continuous transformations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datakit::{format_cell, listwise_complete, quantiles_type7, spearman, summarize, Column, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{chisq_from_stat, fit, Family, Formula};

/// A recode or transformation rule, `{"kind": "...", params...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    DichotomizeMedian,
    DichotomizeQuantile { p: f64 },
    DichotomizeThreshold { value: f64 },
    OrdinalizeQuantiles { probs: Vec<f64> },
    OrdinalizeCutpoints { values: Vec<f64> },
    Scale { c: f64 },
    Shift { c: f64 },
    Zscore,
    Minmax {
        #[serde(default)]
        pad_lo: f64,
        #[serde(default)]
        pad_hi: f64,
    },
    LogE,
    Log10,
    Power { p: f64 },
    RoundWhole,
    Window { lo: f64, hi: f64 },
}

impl Rule {
    pub fn is_dichotomize(&self) -> bool {
        matches!(self, Rule::DichotomizeMedian | Rule::DichotomizeQuantile { .. } | Rule::DichotomizeThreshold { .. })
    }

    pub fn is_ordinalize(&self) -> bool {
        matches!(self, Rule::OrdinalizeQuantiles { .. } | Rule::OrdinalizeCutpoints { .. })
    }
}

/// Output of one rule application.
#[derive(Clone, Debug, PartialEq)]
pub struct Recoded {
    pub column: Column,
    /// Cells that were observed before and are missing after.
    pub new_missing: usize,
    pub warnings: Vec<String>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Dichotomizes: `value <= cut` gives 0, above gives 1; missing passes through.
pub fn dichotomize(col: &Column, rule: &Rule) -> Result<Column> {
    Ok(apply_rule(col, rule)?.column)
}

/// Bins into `1..=K`: left-closed, right-open interior bins; the last bin is
/// closed at the maximum.
pub fn ordinalize(col: &Column, rule: &Rule) -> Result<Column> {
    Ok(apply_rule(col, rule)?.column)
}

pub fn transform(col: &Column, rule: &Rule) -> Result<Column> {
    Ok(apply_rule(col, rule)?.column)
}

pub fn apply_rule(col: &Column, rule: &Rule) -> Result<Recoded> {
    let name = col.name().to_string();
    let mut warnings = Vec::new();
    let out = match rule {
        Rule::DichotomizeMedian | Rule::DichotomizeQuantile { .. } | Rule::DichotomizeThreshold { .. } => {
            let cut = match rule {
                Rule::DichotomizeMedian => quantiles_type7(col, &[0.5])?[0],
                Rule::DichotomizeQuantile { p } => {
                    if !(*p > 0.0 && *p < 1.0) {
                        return Err(Error::Parameter(format!("quantile split needs p in (0, 1), got {p}")));
                    }
                    quantiles_type7(col, &[*p])?[0]
                }
                Rule::DichotomizeThreshold { value } => *value,
                _ => unreachable!(),
            };
            let out = col.map_present(name, |v| Some(if v <= cut { 0.0 } else { 1.0 }));
            let ones = out.present().iter().filter(|v| **v == 1.0).count();
            if ones == 0 || ones == out.len() - out.n_missing() {
                warnings.push(format!("dichotomized '{}' has a single class", col.name()));
            }
            out
        }
        Rule::OrdinalizeQuantiles { probs } => {
            if probs.is_empty() || !strictly_increasing(probs) || probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(Error::Parameter("quantile probabilities must be strictly increasing in (0, 1)".into()));
            }
            let cuts = quantiles_type7(col, probs)?;
            bin(col, &cuts)
        }
        Rule::OrdinalizeCutpoints { values } => {
            if values.is_empty() || !strictly_increasing(values) {
                return Err(Error::Parameter("cutpoints must be strictly increasing".into()));
            }
            bin(col, values)
        }
        Rule::Scale { c } => {
            if *c == 0.0 || !c.is_finite() {
                return Err(Error::Parameter(format!("scale factor must be finite and non-zero, got {c}")));
            }
            col.map_present(name, |v| Some(v * c))
        }
        Rule::Shift { c } => col.map_present(name, |v| Some(v + c)),
        Rule::Zscore => {
            let s = summarize(col)?;
            if !(s.sd > 0.0) {
                return Err(Error::Degenerate(format!("cannot z-score constant column '{}'", col.name())));
            }
            col.map_present(name, |v| Some((v - s.mean) / s.sd))
        }
        Rule::Minmax { pad_lo, pad_hi } => {
            let s = summarize(col)?;
            let lo = s.min - pad_lo;
            let range = (s.max + pad_hi) - lo;
            if !(range > 0.0) {
                return Err(Error::Degenerate(format!("min-max range of '{}' is not positive", col.name())));
            }
            col.map_present(name, |v| Some((v - lo) / range))
        }
        Rule::LogE => col.map_present(name, |v| (v > 0.0).then(|| v.ln())),
        Rule::Log10 => col.map_present(name, |v| (v > 0.0).then(|| v.log10())),
        Rule::Power { p } => {
            let integral = p.fract() == 0.0;
            col.map_present(name, |v| if v < 0.0 && !integral { None } else { Some(v.powf(*p)) })
        }
        Rule::RoundWhole => col.map_present(name, |v| Some(v.round())),
        Rule::Window { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::Parameter(format!("window needs lo < hi, got ({lo}, {hi})")));
            }
            col.map_present(name, |v| (v > *lo && v < *hi).then_some(v))
        }
    };
    let new_missing = out.n_missing() - col.n_missing();
    Ok(Recoded { column: out, new_missing, warnings })
}

fn bin(col: &Column, cuts: &[f64]) -> Column {
    col.map_present(col.name().to_string(), |v| {
        let below = cuts.iter().filter(|c| v >= **c).count();
        Some((below + 1) as f64)
    })
}

/// Applies a chain of rules left to right.
pub fn apply_rules(col: &Column, rules: &[Rule]) -> Result<Recoded> {
    let mut cur = Recoded { column: col.clone(), new_missing: 0, warnings: Vec::new() };
    for r in rules {
        let next = apply_rule(&cur.column, r)?;
        cur.new_missing += next.new_missing;
        cur.warnings.extend(next.warnings);
        cur.column = next.column;
    }
    Ok(cur)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub target: Side,
    pub rules: Vec<Rule>,
    /// Overrides the automatic family choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttenuationRow {
    pub label: String,
    pub family: Option<Family>,
    pub spearman: Option<f64>,
    pub slope: Option<f64>,
    pub se: Option<f64>,
    pub stat: Option<f64>,
    pub chisq: Option<f64>,
    pub n_used: Option<usize>,
    pub new_missing: usize,
    pub error: Option<String>,
}

/// Binomial for two 0/1 levels, ordered for 2 to 9 integer levels,
/// gaussian otherwise.
pub fn auto_family(col: &Column) -> Family {
    let mut levels: Vec<f64> = col.present();
    if levels.iter().any(|v| v.fract() != 0.0) {
        return Family::Gaussian;
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    match levels.len() {
        2 if levels == [0.0, 1.0] => Family::Binomial,
        2..=9 => Family::Ordered,
        _ => Family::Gaussian,
    }
}

/// Baseline plus one row per variant. Row failures are recorded, not raised.
pub fn attenuation_report(data: &Dataset, y: &str, x: &str, variants: &[Variant]) -> Result<Vec<AttenuationRow>> {
    let ycol = data.column(y).map_err(|_| Error::Validation(format!("variable '{y}' is not in the data")))?;
    let xcol = data.column(x).map_err(|_| Error::Validation(format!("variable '{x}' is not in the data")))?;
    let baseline = Variant { label: "baseline".into(), target: Side::Y, rules: Vec::new(), family: None };
    let mut rows = Vec::with_capacity(variants.len() + 1);
    for v in std::iter::once(&baseline).chain(variants) {
        rows.push(match attenuation_row(ycol, xcol, v) {
            Ok(r) => r,
            Err(e) => AttenuationRow {
                label: v.label.clone(),
                family: v.family,
                spearman: None,
                slope: None,
                se: None,
                stat: None,
                chisq: None,
                n_used: None,
                new_missing: 0,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(rows)
}

fn attenuation_row(ycol: &Column, xcol: &Column, v: &Variant) -> Result<AttenuationRow> {
    let (ny, nx, new_missing) = match v.target {
        Side::Y => {
            let r = apply_rules(ycol, &v.rules)?;
            (r.column, xcol.clone(), r.new_missing)
        }
        Side::X => {
            let r = apply_rules(xcol, &v.rules)?;
            (ycol.clone(), r.column, r.new_missing)
        }
    };
    let (yname, xname) = (ny.name().to_string(), nx.name().to_string());
    let d = Dataset::from_columns(vec![ny, nx])?;
    let (d, _) = listwise_complete(&d, &[&yname, &xname])?;
    let family = v.family.unwrap_or_else(|| auto_family(d.column(&yname).unwrap()));
    let rho = spearman(d.column(&xname)?, d.column(&yname)?)?;
    let f = fit(&d, &Formula::linear(&yname, &[&xname]), family)?;
    let i = f.term_index(&xname)?;
    Ok(AttenuationRow {
        label: v.label.clone(),
        family: Some(family),
        spearman: Some(rho),
        slope: Some(f.b[i]),
        se: Some(f.se[i]),
        stat: Some(f.stat[i]),
        chisq: Some(chisq_from_stat(f.stat[i]).0),
        n_used: Some(f.n_used),
        new_missing,
        error: None,
    })
}

pub fn write_attenuation_csv<W: Write>(rows: &[AttenuationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "spearman", "slope", "se", "stat", "chisq", "n_used", "family", "new_missing", "error"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            format_cell(r.spearman),
            format_cell(r.slope),
            format_cell(r.se),
            format_cell(r.stat),
            format_cell(r.chisq),
            r.n_used.map(|n| n.to_string()).unwrap_or_default(),
            r.family.map(|f| f.as_str().to_string()).unwrap_or_default(),
            r.new_missing.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
