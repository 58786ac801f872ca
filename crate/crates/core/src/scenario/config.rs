use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datakit::Condition;
use crate::error::{Error, Result};
use crate::estimators::{Family, Formula};
use crate::mc::{McTemplate, RecordSpec};
use crate::measure::{Rule, Variant};
use crate::simcore::{CorrTarget, ScmSpec};

pub const DEFAULT_SEED: u64 = 1992;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn gaussian() -> Family {
    Family::Gaussian
}

/// A runnable scenario: data generation, preparation, analyses and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prepare: Vec<PrepareStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analyses: Vec<AnalysisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McScenario>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OutputSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Scm(ScmSpec),
    Corr(CorrData),
    /// Path to a CSV file, relative to the config file's directory.
    Csv(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrData {
    pub n: usize,
    #[serde(flatten)]
    pub target: CorrTarget,
}

/// Literal value or a statistic of the current column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointValue {
    Number(f64),
    Stat(ColumnStat),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnStat {
    Mean,
    Median,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrepareStep {
    /// Applies rules to `var`, writing to `into` (default: replace in place).
    Recode {
        var: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        into: Option<String>,
        rules: Vec<Rule>,
    },
    BlockRandomize {
        strata: String,
        #[serde(default = "treatment")]
        into: String,
    },
    InjectOutlier { values: BTreeMap<String, PointValue> },
    /// Keeps rows satisfying every condition.
    Filter { conditions: Vec<Condition> },
}

fn treatment() -> String {
    "treatment".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrMethod {
    #[default]
    Pearson,
    Spearman,
}

/// An analysis with an optional label; unlabeled analyses are named
/// `<op><position>` (e.g. `fit1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub op: Analysis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Analysis {
    Fit {
        formula: Formula,
        #[serde(default = "gaussian")]
        family: Family,
    },
    CompareAdjustments {
        y: String,
        x: String,
        sets: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<f64>,
    },
    Iv {
        y: String,
        x: String,
        instrument: String,
        #[serde(default)]
        allow_weak: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        confounders: Vec<String>,
    },
    Mediation { y: String, x: String, m: String },
    Moderated {
        y: String,
        x: String,
        mo: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        at: Vec<f64>,
    },
    Subgroup { y: String, x: String, filter: Vec<Condition> },
    Attenuation { y: String, x: String, variants: Vec<Variant> },
    Balance { group: String, covariates: Vec<String> },
    Collinearity { formula: Formula },
    Correlation {
        vars: Vec<String>,
        #[serde(default)]
        method: CorrMethod,
    },
    Summarize { vars: Vec<String> },
    /// Bivariate slope of `y` on `x` with each point appended in turn.
    Outliers { y: String, x: String, points: Vec<BTreeMap<String, PointValue>> },
    RepeatedSamples {
        k: usize,
        reps: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        filter: Vec<Condition>,
        record: Vec<RecordSpec>,
    },
}

impl Analysis {
    pub fn op_name(&self) -> &'static str {
        match self {
            Analysis::Fit { .. } => "fit",
            Analysis::CompareAdjustments { .. } => "compare_adjustments",
            Analysis::Iv { .. } => "iv",
            Analysis::Mediation { .. } => "mediation",
            Analysis::Moderated { .. } => "moderated",
            Analysis::Subgroup { .. } => "subgroup",
            Analysis::Attenuation { .. } => "attenuation",
            Analysis::Balance { .. } => "balance",
            Analysis::Collinearity { .. } => "collinearity",
            Analysis::Correlation { .. } => "correlation",
            Analysis::Summarize { .. } => "summarize",
            Analysis::Outliers { .. } => "outliers",
            Analysis::RepeatedSamples { .. } => "repeated_samples",
        }
    }

    /// Column names the analysis reads.
    pub fn variables(&self) -> Vec<String> {
        let own = |v: &[&String]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self {
            Analysis::Fit { formula, .. } | Analysis::Collinearity { formula } => {
                formula.variables().into_iter().map(String::from).collect()
            }
            Analysis::CompareAdjustments { y, x, sets, .. } => {
                let mut v = own(&[y, x]);
                v.extend(sets.iter().flatten().cloned());
                v
            }
            Analysis::Iv { y, x, instrument, confounders, .. } => {
                let mut v = own(&[y, x, instrument]);
                v.extend(confounders.iter().cloned());
                v
            }
            Analysis::Mediation { y, x, m } => own(&[y, x, m]),
            Analysis::Moderated { y, x, mo, .. } => own(&[y, x, mo]),
            Analysis::Subgroup { y, x, filter } => {
                let mut v = own(&[y, x]);
                v.extend(filter.iter().map(|c| c.var.clone()));
                v
            }
            Analysis::Attenuation { y, x, .. } => own(&[y, x]),
            Analysis::Balance { group, covariates } => {
                let mut v = vec![group.clone()];
                v.extend(covariates.iter().cloned());
                v
            }
            Analysis::Correlation { vars, .. } | Analysis::Summarize { vars } => vars.clone(),
            Analysis::Outliers { y, x, points } => {
                let mut v = own(&[y, x]);
                v.extend(points.iter().flat_map(|p| p.keys().cloned()));
                v
            }
            Analysis::RepeatedSamples { filter, .. } => filter.iter().map(|c| c.var.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub series: String,
    pub bins: usize,
}

/// A Monte Carlo loop. The template's master seed is replaced by the
/// scenario seed at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McScenario {
    pub template: McTemplate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub summaries: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub histograms: Vec<HistogramSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Validation(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// One file to write. `what` is `data`, `report`, `summary`, `mc`,
/// `mc_summary`, `analysis:<label>`, `points:<label>` or
/// `histogram:<series>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub what: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum OutputKind {
    Data,
    Report,
    Summary,
    Mc,
    McSummary,
    Analysis(String),
    Points(String),
    Histogram(String),
}

impl OutputSpec {
    pub(crate) fn kind(&self) -> Result<OutputKind> {
        let bad = || Error::Validation(format!("outputs: unknown 'what' value '{}'", self.what));
        Ok(match self.what.split_once(':') {
            None => match self.what.as_str() {
                "data" => OutputKind::Data,
                "report" => OutputKind::Report,
                "summary" => OutputKind::Summary,
                "mc" => OutputKind::Mc,
                "mc_summary" => OutputKind::McSummary,
                _ => return Err(bad()),
            },
            Some(("analysis", l)) => OutputKind::Analysis(l.to_string()),
            Some(("points", l)) => OutputKind::Points(l.to_string()),
            Some(("histogram", s)) => OutputKind::Histogram(s.to_string()),
            Some(_) => return Err(bad()),
        })
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Labels in analysis order, filling defaults.
    pub fn analysis_labels(&self) -> Vec<String> {
        self.analyses
            .iter()
            .enumerate()
            .map(|(i, a)| a.label.clone().unwrap_or_else(|| format!("{}{}", a.op.op_name(), i + 1)))
            .collect()
    }

    /// Names produced by the data source and preparation steps, when they
    /// are known without reading files.
    pub fn static_columns(&self) -> Option<BTreeSet<String>> {
        let mut cols: BTreeSet<String> = match self.data.as_ref()? {
            DataSource::Scm(s) => {
                let mut c: BTreeSet<String> = s.sources.iter().map(|x| x.name.clone()).collect();
                c.extend(s.equations.iter().map(|e| e.target.clone()));
                c
            }
            DataSource::Corr(c) => c.target.names.iter().cloned().collect(),
            DataSource::Csv(_) => return None,
        };
        for step in &self.prepare {
            match step {
                PrepareStep::Recode { var, into, .. } => {
                    cols.insert(into.clone().unwrap_or_else(|| var.clone()));
                }
                PrepareStep::BlockRandomize { into, .. } => {
                    cols.insert(into.clone());
                }
                PrepareStep::InjectOutlier { .. } | PrepareStep::Filter { .. } => {}
            }
        }
        Some(cols)
    }

    /// Structural checks that need no data: labels, outputs, names.
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Validation("id: must not be empty".into()));
        }
        if self.data.is_none() && !self.analyses.is_empty() {
            return Err(Error::Validation("analyses: need a 'data' source".into()));
        }
        if self.data.is_none() && self.mc.is_none() {
            return Err(Error::Validation("scenario needs 'data' or 'mc'".into()));
        }
        match &self.data {
            Some(DataSource::Scm(s)) => s.validate().map_err(|e| Error::Validation(format!("data.scm: {e}")))?,
            Some(DataSource::Corr(c)) => {
                c.target.validate().map_err(|e| Error::Validation(format!("data.corr: {e}")))?;
                if c.n < 2 {
                    return Err(Error::Validation("data.corr.n: need at least 2 rows".into()));
                }
            }
            _ => {}
        }
        let labels = self.analysis_labels();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(Error::Validation(format!("analyses: duplicate label '{l}'")));
            }
        }
        if let Some(cols) = self.static_columns() {
            let mut known = cols.clone();
            for (i, step) in self.prepare.iter().enumerate() {
                let refs: Vec<&String> = match step {
                    PrepareStep::Recode { var, into, .. } => {
                        let r = vec![var];
                        if let Some(t) = into {
                            known.insert(t.clone());
                        }
                        r
                    }
                    PrepareStep::BlockRandomize { strata, into } => {
                        known.insert(into.clone());
                        vec![strata]
                    }
                    PrepareStep::InjectOutlier { values } => values.keys().collect(),
                    PrepareStep::Filter { conditions } => conditions.iter().map(|c| &c.var).collect(),
                };
                for r in refs {
                    if !known.contains(r) {
                        return Err(Error::Validation(format!("prepare[{i}]: unknown column '{r}'")));
                    }
                }
            }
            for (a, label) in self.analyses.iter().zip(&labels) {
                for v in a.op.variables() {
                    if !cols.contains(&v) {
                        return Err(Error::Validation(format!("analyses '{label}': unknown column '{v}'")));
                    }
                }
            }
        }
        if let Some(mc) = &self.mc {
            mc.template.validate().map_err(|e| Error::Validation(format!("mc.template: {e}")))?;
            let mut series: BTreeSet<String> = mc.template.analysis.iter().map(|r| r.name().to_string()).collect();
            series.extend(mc.template.placeholders.keys().cloned());
            series.insert("N".into());
            series.insert("i".into());
            let named = mc
                .filters
                .iter()
                .map(|c| &c.var)
                .chain(&mc.summaries)
                .chain(mc.correlations.iter().flat_map(|(a, b)| [a, b]))
                .chain(mc.histograms.iter().map(|h| &h.series));
            for s in named {
                if !series.contains(s) {
                    return Err(Error::Validation(format!("mc: unknown series '{s}'")));
                }
            }
            if mc.histograms.iter().any(|h| h.bins == 0) {
                return Err(Error::Validation("mc.histograms: bins must be at least 1".into()));
            }
        }
        let mut paths = BTreeSet::new();
        for (i, o) in self.outputs.iter().enumerate() {
            if o.path.trim().is_empty() {
                return Err(Error::Validation(format!("outputs[{i}].path: must not be empty")));
            }
            if !paths.insert(o.path.as_str()) {
                return Err(Error::Validation(format!("outputs[{i}].path: duplicate path '{}'", o.path)));
            }
            match o.kind()? {
                OutputKind::Data if self.data.is_none() => {
                    return Err(Error::Validation(format!("outputs[{i}]: no data to write")));
                }
                OutputKind::Mc | OutputKind::McSummary if self.mc.is_none() => {
                    return Err(Error::Validation(format!("outputs[{i}]: scenario has no mc section")));
                }
                OutputKind::Analysis(l) | OutputKind::Points(l) if !labels.contains(&l) => {
                    return Err(Error::Validation(format!("outputs[{i}]: unknown analysis label '{l}'")));
                }
                OutputKind::Histogram(s) => {
                    let ok = self.mc.as_ref().is_some_and(|m| m.histograms.iter().any(|h| h.series == s));
                    if !ok {
                        return Err(Error::Validation(format!("outputs[{i}]: no histogram declared for '{s}'")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
