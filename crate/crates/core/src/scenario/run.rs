use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{
    Analysis, ColumnStat, CorrMethod, DataSource, Format, OutputKind, PointValue, PrepareStep, ScenarioConfig,
};
use crate::causal::{
    compare_adjustments, conditional_slope, iv_wald, mediation, moderated_fit, subgroup_effect, IvEstimate,
    IvOptions, MediationResult, ScenarioReport,
};
use crate::datakit::{
    balance_diff, filter_rows, format_cell, pearson, spearman, summarize, BalanceReport, Column, Dataset,
    SummaryStats,
};
use crate::error::{Error, Result};
use crate::estimators::{
    collinearity_diagnostics, fit, predict, residuals, CollinearityReport, Family, FitResult, Formula,
};
use crate::mc::{
    filter_replicates, histogram, repeated_samples, run_mc, series_correlation, summarize_series,
    write_histogram_csv, write_summaries_csv, Bin, McResult, McSummary, Provenance,
};
use crate::measure::{apply_rules, attenuation_report, write_attenuation_csv, AttenuationRow};
use crate::rng::RngState;
use crate::simcore::{block_randomize, evaluate_scm, inject_outlier, mvn_exact};

/// Where relative input and output paths resolve, and the default output
/// format.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl Default for RunContext {
    fn default() -> Self {
        RunContext { base_dir: PathBuf::from("."), out_dir: PathBuf::from("."), format: Format::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moderation {
    pub fit: FitResult,
    pub conditional: Vec<ConditionalSlope>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalSlope {
    pub at: f64,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub method: CorrMethod,
    pub vars: Vec<String>,
    pub matrix: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedSummary {
    pub var: String,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutlierRow {
    pub label: String,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub b: f64,
    pub se: f64,
    pub stat: f64,
    pub p: f64,
    pub n_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRun {
    pub result: McResult,
    pub summaries: Vec<McSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AnalysisOutput {
    Fit(FitResult),
    Adjustments(ScenarioReport),
    Iv(IvEstimate),
    Mediation(MediationResult),
    Moderated(Moderation),
    Attenuation(Vec<AttenuationRow>),
    Balance(BalanceReport),
    Collinearity(CollinearityReport),
    Correlation(CorrelationMatrix),
    Summaries(Vec<NamedSummary>),
    Outliers(Vec<OutlierRow>),
    Samples(SampleRun),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisRecord {
    pub label: String,
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<AnalysisOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesCorrelation {
    pub a: String,
    pub b: String,
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesHistogram {
    pub series: String,
    pub bins: Vec<Bin>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub reps: usize,
    pub failed: usize,
    pub removed: usize,
    pub provenance: Provenance,
    pub summaries: Vec<McSummary>,
    pub correlations: Vec<SeriesCorrelation>,
    pub histograms: Vec<SeriesHistogram>,
}

/// Everything a run produced. Contains no timings or absolute paths so that
/// identical inputs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub id: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_rows: Option<usize>,
    pub columns: Vec<String>,
    pub analyses: Vec<AnalysisRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McReport>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub summary: String,
    pub data: Option<Dataset>,
    pub mc: Option<McResult>,
}

impl RunOutcome {
    /// True when there was at least one analysis (an MC loop counts as one)
    /// and every one of them failed.
    pub fn all_failed(&self) -> bool {
        let mut total = self.report.analyses.len();
        let mut failed = self.report.analyses.iter().filter(|a| a.error.is_some()).count();
        if let Some(m) = &self.report.mc {
            total += 1;
            if m.failed == m.reps {
                failed += 1;
            }
        }
        total > 0 && failed == total
    }
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_sig(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), fmt_sig)
}

fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(headers.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Coefficient table (term, b, SE, stat, p, beta) with fit statistics.
pub fn render_fit(f: &FitResult) -> String {
    let mut rows: Vec<Vec<String>> = f
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![t.clone(), fmt_sig(f.b[i]), fmt_sig(f.se[i]), fmt_sig(f.stat[i]), fmt_sig(f.p[i]), fmt_sig(f.beta[i])]
        })
        .collect();
    for (i, c) in f.cutpoint_names.iter().enumerate() {
        let se = f.cutpoint_se[i];
        rows.push(vec![
            c.clone(),
            fmt_sig(f.cutpoints[i]),
            fmt_sig(se),
            fmt_sig(f.cutpoints[i] / se),
            String::new(),
            String::new(),
        ]);
    }
    let stat = if f.family == Family::Binomial { "z" } else { "t" };
    let mut out = format!("{} [{}], n = {}", f.formula, f.family.as_str(), f.n_used);
    if f.n_dropped > 0 {
        let _ = write!(out, " ({} dropped)", f.n_dropped);
    }
    out.push('\n');
    out.push_str(&render_table(&["term", "b", "SE", stat, "p", "beta"], &rows));
    match (f.r2, f.adj_r2, f.sigma) {
        (Some(r2), Some(adj), Some(s)) => {
            let _ = writeln!(out, "R2 = {}, adj R2 = {}, sigma = {}", fmt_sig(r2), fmt_sig(adj), fmt_sig(s));
        }
        _ => {
            let _ = writeln!(out, "deviance = {}, AIC = {}", fmt_sig(f.deviance), fmt_sig(f.aic));
        }
    }
    for w in &f.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn summary_rows(stats: &[(String, &SummaryStats)]) -> String {
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|(n, s)| {
            vec![
                n.clone(),
                s.n.to_string(),
                fmt_sig(s.min),
                fmt_sig(s.q1),
                fmt_sig(s.median),
                fmt_sig(s.mean),
                fmt_sig(s.q3),
                fmt_sig(s.max),
                fmt_sig(s.sd),
            ]
        })
        .collect();
    render_table(&["var", "n", "Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.", "sd"], &rows)
}

fn mc_summary_table(rows: &[McSummary]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            vec![
                s.series.clone(),
                s.n.to_string(),
                fmt_sig(s.min),
                fmt_sig(s.q1),
                fmt_sig(s.median),
                fmt_sig(s.mean),
                fmt_sig(s.q3),
                fmt_sig(s.max),
            ]
        })
        .collect();
    render_table(&["series", "n", "Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."], &body)
}

fn render_output(out: &AnalysisOutput) -> String {
    match out {
        AnalysisOutput::Fit(f) => render_fit(f),
        AnalysisOutput::Moderated(m) => {
            let mut s = render_fit(&m.fit);
            for c in &m.conditional {
                let _ = writeln!(s, "slope at {} = {}", fmt_sig(c.at), fmt_sig(c.slope));
            }
            s
        }
        AnalysisOutput::Adjustments(r) => {
            let rows: Vec<Vec<String>> = r
                .fits
                .iter()
                .map(|f| {
                    vec![
                        f.label.clone(),
                        opt_sig(f.estimate),
                        opt_sig(f.se),
                        opt_sig(f.stat),
                        opt_sig(f.bias),
                        f.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            let mut s = format!("focal term {}", r.focal_term);
            if let Some(t) = r.truth {
                let _ = write!(s, ", truth {}", fmt_sig(t));
            }
            s.push('\n');
            s + &render_table(&["model", "b", "SE", "t", "bias", "error"], &rows)
        }
        AnalysisOutput::Iv(iv) => {
            let rows = vec![
                vec!["Y ~ IN".into(), fmt_sig(iv.b_yin), fmt_sig(iv.se_yin)],
                vec!["X ~ IN".into(), fmt_sig(iv.b_xin), fmt_sig(iv.se_xin)],
            ];
            let mut s = render_table(&["path", "b", "SE"], &rows);
            let _ = writeln!(s, "IV ratio = {}{}", fmt_sig(iv.ratio), if iv.weak { " (weak instrument)" } else { "" });
            for (c, r) in &iv.confounder_corr {
                let _ = writeln!(s, "corr(instrument, {c}) = {}", fmt_sig(*r));
            }
            s
        }
        AnalysisOutput::Mediation(m) => {
            let rows = vec![
                vec!["a (X -> M)".into(), fmt_sig(m.a), fmt_sig(m.se_a)],
                vec!["b (M -> Y | X)".into(), fmt_sig(m.b), fmt_sig(m.se_b)],
                vec!["direct".into(), fmt_sig(m.direct), fmt_sig(m.se_direct)],
                vec!["indirect".into(), fmt_sig(m.indirect), fmt_sig(m.sobel_se)],
                vec!["total".into(), fmt_sig(m.total), String::new()],
            ];
            let mut s = render_table(&["path", "estimate", "SE"], &rows);
            let _ = writeln!(
                s,
                "Sobel z = {}, p = {}, 95% CI [{}, {}]",
                fmt_sig(m.z_indirect),
                fmt_sig(m.p_indirect),
                fmt_sig(m.ci_lo),
                fmt_sig(m.ci_hi)
            );
            s
        }
        AnalysisOutput::Attenuation(rows) => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.label.clone(),
                        r.family.map(|f| f.as_str().to_string()).unwrap_or_default(),
                        opt_sig(r.spearman),
                        opt_sig(r.slope),
                        opt_sig(r.se),
                        opt_sig(r.stat),
                        opt_sig(r.chisq),
                        r.n_used.map_or_else(|| "NA".into(), |n| n.to_string()),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            render_table(&["variant", "family", "rho", "b", "SE", "stat", "chisq", "n", "error"], &body)
        }
        AnalysisOutput::Balance(b) => {
            let body: Vec<Vec<String>> = b
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.covariate.clone(),
                        fmt_sig(r.delta_mean),
                        fmt_sig(r.delta_sd),
                        opt_sig(r.delta_skew),
                        opt_sig(r.delta_kurtosis),
                    ]
                })
                .collect();
            format!("treatment n = {}, control n = {}\n", b.n_treatment, b.n_control)
                + &render_table(&["covariate", "d mean", "d sd", "d skew", "d kurtosis"], &body)
        }
        AnalysisOutput::Collinearity(c) => {
            let terms: Vec<Vec<String>> = c
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| vec![t.clone(), fmt_sig(c.tolerance[i]), fmt_sig(c.vif[i])])
                .collect();
            let eig: Vec<Vec<String>> = c
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(i, e)| vec![(i + 1).to_string(), fmt_sig(*e), fmt_sig(c.condition_indices[i])])
                .collect();
            render_table(&["term", "tolerance", "VIF"], &terms)
                + &render_table(&["dimension", "eigenvalue", "condition index"], &eig)
        }
        AnalysisOutput::Correlation(m) => {
            let mut headers = vec![""];
            headers.extend(m.vars.iter().map(String::as_str));
            let body: Vec<Vec<String>> = m
                .vars
                .iter()
                .zip(&m.matrix)
                .map(|(v, row)| {
                    let mut r = vec![v.clone()];
                    r.extend(row.iter().map(|x| opt_sig(*x)));
                    r
                })
                .collect();
            render_table(&headers, &body)
        }
        AnalysisOutput::Summaries(s) => {
            let pairs: Vec<(String, &SummaryStats)> = s.iter().map(|x| (x.var.clone(), &x.stats)).collect();
            summary_rows(&pairs)
        }
        AnalysisOutput::Outliers(rows) => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.label.clone(),
                        opt_sig(r.x0),
                        opt_sig(r.y0),
                        fmt_sig(r.b),
                        fmt_sig(r.se),
                        fmt_sig(r.stat),
                        fmt_sig(r.p),
                        r.n_used.to_string(),
                    ]
                })
                .collect();
            render_table(&["fit", "x0", "y0", "b", "SE", "t", "p", "n"], &body)
        }
        AnalysisOutput::Samples(s) => {
            let failed = s.result.n_failed();
            let mut out = format!("{} samples of {}", s.result.records.len(), s.result.records.first().map_or(0, |r| r.n));
            if failed > 0 {
                let _ = write!(out, " ({failed} failed)");
            }
            out.push('\n');
            out + &mc_summary_table(&s.summaries)
        }
    }
}

fn resolve_point(data: &Dataset, values: &BTreeMap<String, PointValue>) -> Result<BTreeMap<String, f64>> {
    values
        .iter()
        .map(|(k, v)| {
            let x = match v {
                PointValue::Number(x) => *x,
                PointValue::Stat(stat) => {
                    let s = summarize(data.column(k)?)?;
                    match stat {
                        ColumnStat::Mean => s.mean,
                        ColumnStat::Median => s.median,
                    }
                }
            };
            Ok((k.clone(), x))
        })
        .collect()
}

fn generate(cfg: &ScenarioConfig, ctx: &RunContext) -> Result<Option<Dataset>> {
    let mut rng = RngState::new(cfg.seed, 0);
    let mut data = match &cfg.data {
        None => return Ok(None),
        Some(DataSource::Scm(s)) => evaluate_scm(s, &mut rng)?,
        Some(DataSource::Corr(c)) => mvn_exact(&c.target, c.n, &mut rng)?,
        Some(DataSource::Csv(p)) => {
            let path = ctx.base_dir.join(p);
            let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
            Dataset::read_csv(file)?
        }
    };
    for (i, step) in cfg.prepare.iter().enumerate() {
        let mut step_rng = RngState::new(cfg.seed, 1 + i as u64);
        let ctx_err = |e: Error| match e {
            Error::Validation(m) => Error::Validation(format!("prepare[{i}]: {m}")),
            other => other,
        };
        match step {
            PrepareStep::Recode { var, into, rules } => {
                let recoded = apply_rules(data.column(var).map_err(ctx_err)?, rules)?;
                data.set_column(recoded.column.renamed(into.clone().unwrap_or_else(|| var.clone())))?;
            }
            PrepareStep::BlockRandomize { strata, into } => {
                let col = block_randomize(data.column(strata).map_err(ctx_err)?, &mut step_rng)?;
                data.set_column(col.renamed(into.clone()))?;
            }
            PrepareStep::InjectOutlier { values } => {
                let point = resolve_point(&data, values)?;
                data = inject_outlier(&data, &point)?;
            }
            PrepareStep::Filter { conditions } => {
                data = filter_rows(&data, conditions)?;
            }
        }
    }
    Ok(Some(data))
}

fn check_columns(cfg: &ScenarioConfig, labels: &[String], data: &Dataset) -> Result<()> {
    for (a, label) in cfg.analyses.iter().zip(labels) {
        for v in a.op.variables() {
            if !data.has_column(&v) {
                return Err(Error::Validation(format!("analyses '{label}': unknown column '{v}'")));
            }
        }
    }
    Ok(())
}

fn run_analysis(op: &Analysis, data: &Dataset, sample_seed: u64) -> Result<AnalysisOutput> {
    Ok(match op {
        Analysis::Fit { formula, family } => AnalysisOutput::Fit(fit(data, formula, *family)?),
        Analysis::CompareAdjustments { y, x, sets, truth } => {
            AnalysisOutput::Adjustments(compare_adjustments(data, y, x, sets, *truth)?)
        }
        Analysis::Iv { y, x, instrument, allow_weak, confounders } => {
            let opts = IvOptions { allow_weak: *allow_weak, confounders: confounders.clone() };
            AnalysisOutput::Iv(iv_wald(data, y, x, instrument, &opts)?)
        }
        Analysis::Mediation { y, x, m } => AnalysisOutput::Mediation(mediation(data, y, x, m)?),
        Analysis::Moderated { y, x, mo, at } => {
            let f = moderated_fit(data, y, x, mo)?;
            let conditional = at
                .iter()
                .map(|&v| Ok(ConditionalSlope { at: v, slope: conditional_slope(&f, x, mo, v)? }))
                .collect::<Result<_>>()?;
            AnalysisOutput::Moderated(Moderation { fit: f, conditional })
        }
        Analysis::Subgroup { y, x, filter } => AnalysisOutput::Fit(subgroup_effect(data, y, x, filter)?),
        Analysis::Attenuation { y, x, variants } => {
            AnalysisOutput::Attenuation(attenuation_report(data, y, x, variants)?)
        }
        Analysis::Balance { group, covariates } => {
            AnalysisOutput::Balance(balance_diff(data, data.column(group)?, covariates)?)
        }
        Analysis::Collinearity { formula } => AnalysisOutput::Collinearity(collinearity_diagnostics(data, formula)?),
        Analysis::Correlation { vars, method } => {
            let cols: Vec<&Column> = vars.iter().map(|v| data.column(v)).collect::<Result<_>>()?;
            let matrix = cols
                .iter()
                .map(|a| {
                    cols.iter()
                        .map(|b| {
                            match method {
                                CorrMethod::Pearson => pearson(a, b),
                                CorrMethod::Spearman => spearman(a, b),
                            }
                            .ok()
                        })
                        .collect()
                })
                .collect();
            AnalysisOutput::Correlation(CorrelationMatrix { method: *method, vars: vars.clone(), matrix })
        }
        Analysis::Summarize { vars } => AnalysisOutput::Summaries(
            vars.iter()
                .map(|v| Ok(NamedSummary { var: v.clone(), stats: summarize(data.column(v)?)? }))
                .collect::<Result<_>>()?,
        ),
        Analysis::Outliers { y, x, points } => {
            let formula = Formula::linear(y, &[x]);
            let row = |label: String, d: &Dataset, x0, y0| -> Result<OutlierRow> {
                let f = fit(d, &formula, Family::Gaussian)?;
                let j = f.term_index(x)?;
                Ok(OutlierRow { label, x0, y0, b: f.b[j], se: f.se[j], stat: f.stat[j], p: f.p[j], n_used: f.n_used })
            };
            let mut rows = vec![row("baseline".into(), data, None, None)?];
            for (i, p) in points.iter().enumerate() {
                let point = resolve_point(data, p)?;
                let d = inject_outlier(data, &point)?;
                rows.push(row(format!("point{}", i + 1), &d, point.get(x).copied(), point.get(y).copied())?);
            }
            AnalysisOutput::Outliers(rows)
        }
        Analysis::RepeatedSamples { k, reps, filter, record } => {
            let filter = (!filter.is_empty()).then_some(filter.as_slice());
            let result = repeated_samples(data, *k, *reps, filter, record, sample_seed)?;
            let summaries = result
                .series
                .iter()
                .filter_map(|s| summarize_series(&result, s).ok())
                .collect();
            AnalysisOutput::Samples(SampleRun { result, summaries })
        }
    })
}

fn run_mc_section(cfg: &ScenarioConfig) -> Result<Option<(McResult, McReport, String)>> {
    let Some(m) = &cfg.mc else { return Ok(None) };
    let mut template = m.template.clone();
    template.master_seed = cfg.seed;
    let raw = run_mc(&template)?;
    let kept = if m.filters.is_empty() { raw.clone() } else { filter_replicates(&raw, &m.filters)? };
    let mut text = format!(
        "Monte Carlo: {} replicates, {} failed, {} removed by filters\n",
        raw.records.len(),
        raw.n_failed(),
        kept.removed
    );
    let summaries: Vec<McSummary> = m.summaries.iter().map(|s| summarize_series(&kept, s)).collect::<Result<_>>()?;
    if !summaries.is_empty() {
        text.push_str(&mc_summary_table(&summaries));
    }
    let correlations: Vec<SeriesCorrelation> = m
        .correlations
        .iter()
        .map(|(a, b)| match series_correlation(&kept, a, b) {
            Ok(r) => SeriesCorrelation { a: a.clone(), b: b.clone(), r: Some(r), error: None },
            Err(e) => SeriesCorrelation { a: a.clone(), b: b.clone(), r: None, error: Some(e.to_string()) },
        })
        .collect();
    for c in &correlations {
        let _ = writeln!(text, "corr({}, {}) = {}", c.a, c.b, opt_sig(c.r));
    }
    let histograms = m
        .histograms
        .iter()
        .map(|h| Ok(SeriesHistogram { series: h.series.clone(), bins: histogram(&kept, &h.series, h.bins)? }))
        .collect::<Result<_>>()?;
    let report = McReport {
        reps: raw.records.len(),
        failed: raw.n_failed(),
        removed: kept.removed,
        provenance: raw.provenance.clone(),
        summaries,
        correlations,
        histograms,
    };
    Ok(Some((raw, report, text)))
}

/// Generates data, runs analyses and the MC loop, writes declared outputs.
/// Validation problems are returned as errors; analysis failures are
/// recorded per analysis.
pub fn run_scenario(cfg: &ScenarioConfig, ctx: &RunContext) -> Result<RunOutcome> {
    cfg.validate()?;
    let labels = cfg.analysis_labels();
    let data = generate(cfg, ctx)?;
    if let Some(d) = &data {
        check_columns(cfg, &labels, d)?;
    }
    let mut summary = format!("scenario {} (seed {})\n", cfg.id, cfg.seed);
    if let Some(d) = &data {
        let _ = writeln!(summary, "data: {} rows, columns {}", d.n_rows(), d.names().join(", "));
    }
    let mut analyses = Vec::with_capacity(cfg.analyses.len());
    for (i, (spec, label)) in cfg.analyses.iter().zip(&labels).enumerate() {
        let d = data.as_ref().expect("validated: analyses need data");
        let sample_seed = cfg.seed.wrapping_add(1 + i as u64);
        let _ = writeln!(summary, "\n== {label} ({}) ==", spec.op.op_name());
        let rec = match run_analysis(&spec.op, d, sample_seed) {
            Ok(out) => {
                summary.push_str(&render_output(&out));
                AnalysisRecord { label: label.clone(), op: spec.op.op_name().into(), result: Some(out), error: None }
            }
            Err(e) => {
                let _ = writeln!(summary, "error: {e}");
                AnalysisRecord {
                    label: label.clone(),
                    op: spec.op.op_name().into(),
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        };
        analyses.push(rec);
    }
    let (mc, mc_report) = match run_mc_section(cfg)? {
        Some((raw, report, text)) => {
            summary.push('\n');
            summary.push_str(&text);
            (Some(raw), Some(report))
        }
        None => (None, None),
    };
    let report = RunReport {
        id: cfg.id.clone(),
        seed: cfg.seed,
        n_rows: data.as_ref().map(Dataset::n_rows),
        columns: data.as_ref().map_or_else(Vec::new, |d| d.names().into_iter().map(String::from).collect()),
        analyses,
        mc: mc_report,
        outputs: cfg.outputs.iter().map(|o| o.path.clone()).collect(),
    };
    let outcome = RunOutcome { report, summary, data, mc };
    write_outputs(cfg, ctx, &outcome)?;
    Ok(outcome)
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf)
}

fn num(x: f64) -> String {
    format_cell(Some(x))
}

fn opt_num(x: Option<f64>) -> String {
    format_cell(x)
}

fn fit_csv(f: &FitResult, w: &mut csv::Writer<&mut Vec<u8>>) -> Result<()> {
    w.write_record(["term", "b", "se", "stat", "p", "beta"])?;
    for (i, t) in f.terms.iter().enumerate() {
        w.write_record([t.clone(), num(f.b[i]), num(f.se[i]), num(f.stat[i]), num(f.p[i]), num(f.beta[i])])?;
    }
    for (i, c) in f.cutpoint_names.iter().enumerate() {
        let se = f.cutpoint_se[i];
        w.write_record([c.clone(), num(f.cutpoints[i]), num(se), num(f.cutpoints[i] / se), String::new(), String::new()])?;
    }
    Ok(())
}

fn analysis_csv(out: &AnalysisOutput) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let AnalysisOutput::Attenuation(rows) = out {
        write_attenuation_csv(rows, &mut buf)?;
        return Ok(buf);
    }
    if let AnalysisOutput::Samples(s) = out {
        s.result.write_csv(&mut buf)?;
        return Ok(buf);
    }
    {
        let mut w = csv_writer(&mut buf);
        match out {
            AnalysisOutput::Fit(f) => fit_csv(f, &mut w)?,
            AnalysisOutput::Moderated(m) => fit_csv(&m.fit, &mut w)?,
            AnalysisOutput::Adjustments(r) => {
                w.write_record(["label", "covariates", "estimate", "se", "stat", "bias", "error"])?;
                for f in &r.fits {
                    w.write_record([
                        f.label.clone(),
                        f.covariates.join("+"),
                        opt_num(f.estimate),
                        opt_num(f.se),
                        opt_num(f.stat),
                        opt_num(f.bias),
                        f.error.clone().unwrap_or_default(),
                    ])?;
                }
            }
            AnalysisOutput::Iv(iv) => {
                w.write_record(["b_yin", "se_yin", "b_xin", "se_xin", "ratio", "weak", "n_used"])?;
                w.write_record([
                    num(iv.b_yin),
                    num(iv.se_yin),
                    num(iv.b_xin),
                    num(iv.se_xin),
                    num(iv.ratio),
                    iv.weak.to_string(),
                    iv.n_used.to_string(),
                ])?;
            }
            AnalysisOutput::Mediation(m) => {
                let fields = [
                    ("a", m.a),
                    ("se_a", m.se_a),
                    ("b", m.b),
                    ("se_b", m.se_b),
                    ("direct", m.direct),
                    ("se_direct", m.se_direct),
                    ("indirect", m.indirect),
                    ("total", m.total),
                    ("sobel_se", m.sobel_se),
                    ("z_indirect", m.z_indirect),
                    ("p_indirect", m.p_indirect),
                    ("ci_lo", m.ci_lo),
                    ("ci_hi", m.ci_hi),
                ];
                w.write_record(fields.iter().map(|(k, _)| k.to_string()).chain(["n_used".to_string()]))?;
                w.write_record(fields.iter().map(|(_, v)| num(*v)).chain([m.n_used.to_string()]))?;
            }
            AnalysisOutput::Balance(b) => {
                w.write_record(["covariate", "delta_mean", "delta_sd", "delta_skew", "delta_kurtosis"])?;
                for r in &b.rows {
                    w.write_record([
                        r.covariate.clone(),
                        num(r.delta_mean),
                        num(r.delta_sd),
                        opt_num(r.delta_skew),
                        opt_num(r.delta_kurtosis),
                    ])?;
                }
            }
            AnalysisOutput::Collinearity(c) => {
                w.write_record(["kind", "label", "tolerance", "vif", "eigenvalue", "condition_index"])?;
                for (i, t) in c.terms.iter().enumerate() {
                    w.write_record(["term".into(), t.clone(), num(c.tolerance[i]), num(c.vif[i]), String::new(), String::new()])?;
                }
                for (i, e) in c.eigenvalues.iter().enumerate() {
                    w.write_record([
                        "dimension".into(),
                        (i + 1).to_string(),
                        String::new(),
                        String::new(),
                        num(*e),
                        num(c.condition_indices[i]),
                    ])?;
                }
            }
            AnalysisOutput::Correlation(m) => {
                w.write_record(std::iter::once("var".to_string()).chain(m.vars.iter().cloned()))?;
                for (v, row) in m.vars.iter().zip(&m.matrix) {
                    w.write_record(std::iter::once(v.clone()).chain(row.iter().map(|x| opt_num(*x))))?;
                }
            }
            AnalysisOutput::Summaries(s) => {
                w.write_record([
                    "var", "n", "n_missing", "min", "q1", "median", "mean", "q3", "max", "sd", "skew", "excess_kurtosis",
                ])?;
                for x in s {
                    let t = &x.stats;
                    w.write_record([
                        x.var.clone(),
                        t.n.to_string(),
                        t.n_missing.to_string(),
                        num(t.min),
                        num(t.q1),
                        num(t.median),
                        num(t.mean),
                        num(t.q3),
                        num(t.max),
                        num(t.sd),
                        opt_num(t.skew),
                        opt_num(t.excess_kurtosis),
                    ])?;
                }
            }
            AnalysisOutput::Outliers(rows) => {
                w.write_record(["label", "x0", "y0", "b", "se", "stat", "p", "n_used"])?;
                for r in rows {
                    w.write_record([
                        r.label.clone(),
                        opt_num(r.x0),
                        opt_num(r.y0),
                        num(r.b),
                        num(r.se),
                        num(r.stat),
                        num(r.p),
                        r.n_used.to_string(),
                    ])?;
                }
            }
            AnalysisOutput::Attenuation(_) | AnalysisOutput::Samples(_) => unreachable!("handled above"),
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Observed variables, fitted values and residuals for a fitted analysis.
fn points_csv(cfg: &ScenarioConfig, label: &str, outcome: &RunOutcome) -> Result<Vec<u8>> {
    let rec = outcome.report.analyses.iter().find(|a| a.label == label).expect("validated label");
    let idx = outcome.report.analyses.iter().position(|a| a.label == label).expect("validated label");
    let f = match &rec.result {
        Some(AnalysisOutput::Fit(f)) => f,
        Some(AnalysisOutput::Moderated(m)) => &m.fit,
        Some(_) => return Err(Error::Validation(format!("points:{label}: analysis has no fitted model"))),
        None => return Err(Error::Validation(format!("points:{label}: analysis failed"))),
    };
    let data = outcome.data.as_ref().expect("analyses need data");
    let data = match &cfg.analyses[idx].op {
        Analysis::Subgroup { filter, .. } => filter_rows(data, filter)?,
        _ => data.clone(),
    };
    let fitted = predict(f, &data)?;
    let resid = residuals(f, &data)?;
    let vars: Vec<&str> = f.formula.variables();
    let cols: Vec<&Column> = vars.iter().map(|v| data.column(v)).collect::<Result<_>>()?;
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(
            std::iter::once("row".to_string())
                .chain(vars.iter().map(|v| v.to_string()))
                .chain(["fitted".to_string(), "residual".to_string()]),
        )?;
        for r in 0..data.n_rows() {
            w.write_record(
                std::iter::once((r + 1).to_string())
                    .chain(cols.iter().map(|c| opt_num(c.get(r))))
                    .chain([opt_num(fitted.get(r)), opt_num(resid.get(r))]),
            )?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn dataset_json(d: &Dataset) -> serde_json::Value {
    let cols: Vec<serde_json::Value> = d
        .columns()
        .iter()
        .map(|c| serde_json::json!({ "name": c.name(), "values": c.cells().collect::<Vec<_>>() }))
        .collect();
    serde_json::json!({ "n_rows": d.n_rows(), "columns": cols })
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s.into_bytes()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| io_err(&path, e))
}

fn write_outputs(cfg: &ScenarioConfig, ctx: &RunContext, outcome: &RunOutcome) -> Result<()> {
    for o in &cfg.outputs {
        let format = o.format.unwrap_or(ctx.format);
        let bytes = match o.kind()? {
            OutputKind::Data => {
                let d = outcome.data.as_ref().expect("validated: data present");
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        d.write_csv(&mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(&dataset_json(d)),
                }
            }
            OutputKind::Report => json_bytes(&outcome.report),
            OutputKind::Summary => outcome.summary.clone().into_bytes(),
            OutputKind::Mc => {
                let m = outcome.mc.as_ref().expect("validated: mc present");
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        m.write_csv(&mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(m),
                }
            }
            OutputKind::McSummary => {
                let r = outcome.report.mc.as_ref().expect("validated: mc present");
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        write_summaries_csv(&r.summaries, &mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(&r.summaries),
                }
            }
            OutputKind::Histogram(series) => {
                let r = outcome.report.mc.as_ref().expect("validated: mc present");
                let h = r.histograms.iter().find(|h| h.series == series).expect("validated histogram");
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        write_histogram_csv(&h.bins, &mut buf)?;
                        buf
                    }
                    Format::Json => json_bytes(h),
                }
            }
            OutputKind::Analysis(label) => {
                let rec = outcome.report.analyses.iter().find(|a| a.label == label).expect("validated label");
                match (format, &rec.result) {
                    (Format::Json, _) => json_bytes(rec),
                    (Format::Csv, Some(out)) => analysis_csv(out)?,
                    (Format::Csv, None) => {
                        format!("error\n{}\n", rec.error.clone().unwrap_or_default().replace('\n', " ")).into_bytes()
                    }
                }
            }
            OutputKind::Points(label) => match points_csv(cfg, &label, outcome) {
                Ok(b) => b,
                Err(Error::Validation(m)) => format!("error\n{m}\n").into_bytes(),
                Err(e) => return Err(e),
            },
        };
        write_file(&ctx.out_dir.join(&o.path), &bytes)?;
    }
    Ok(())
}
