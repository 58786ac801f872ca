//! Built-in scenarios, one or more per entry of the bias series.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};

struct Entry {
    id: &'static str,
    build: fn() -> Value,
}

const ENTRIES: &[Entry] = &[
    Entry { id: "entry1-linearity", build: entry1 },
    Entry { id: "entry2-homoscedasticity", build: entry2_homo },
    Entry { id: "entry2-heteroscedastic-expanding", build: entry2_expanding },
    Entry { id: "entry2-heteroscedastic-erratic", build: entry2_erratic },
    Entry { id: "entry2-multivariable-heteroscedastic", build: entry2_multivariable },
    Entry { id: "entry3-collinearity-none", build: || entry3("entry3-collinearity-none", 0.0) },
    Entry { id: "entry3-collinearity-small", build: || entry3("entry3-collinearity-small", 0.10) },
    Entry { id: "entry3-collinearity-modsmall", build: || entry3("entry3-collinearity-modsmall", 0.25) },
    Entry { id: "entry3-collinearity-moderate", build: || entry3("entry3-collinearity-moderate", 0.50) },
    Entry { id: "entry3-collinearity-high", build: || entry3("entry3-collinearity-high", 0.75) },
    Entry { id: "entry4-outliers", build: entry4 },
    Entry { id: "entry5-unknown-interactions", build: entry5 },
    Entry { id: "entry6-covariate-balance", build: entry6 },
    Entry { id: "entry7-confounder-pp", build: || entry7("entry7-confounder-pp", 1.0, 1.0) },
    Entry { id: "entry7-confounder-mp", build: || entry7("entry7-confounder-mp", -1.0, 1.0) },
    Entry { id: "entry7-confounder-pm", build: || entry7("entry7-confounder-pm", 1.0, -1.0) },
    Entry { id: "entry7-confounder-mm", build: || entry7("entry7-confounder-mm", -1.0, -1.0) },
    Entry { id: "entry8-collider-pp", build: || entry8("entry8-collider-pp", 1.0, 1.0) },
    Entry { id: "entry8-collider-mp", build: || entry8("entry8-collider-mp", -1.0, 1.0) },
    Entry { id: "entry8-collider-pm", build: || entry8("entry8-collider-pm", 1.0, -1.0) },
    Entry { id: "entry8-collider-mm", build: || entry8("entry8-collider-mm", -1.0, -1.0) },
    Entry { id: "entry9-mediation-moderation", build: entry9 },
    Entry { id: "entry9-mediation-nodirect", build: entry9_nodirect },
    Entry { id: "entry10-descendants", build: entry10 },
    Entry { id: "entry11-iv-valid", build: || entry11(Iv::Valid) },
    Entry { id: "entry11-iv-in-causes-c", build: || entry11(Iv::InCausesC) },
    Entry { id: "entry11-iv-correlated-c", build: || entry11(Iv::CorrelatedC) },
    Entry { id: "entry11-iv-direct-y", build: || entry11(Iv::DirectY) },
    Entry { id: "entry11-iv-via-m", build: || entry11(Iv::ViaM) },
    Entry { id: "entry12-noncausal-covariates", build: || entry12("entry12-noncausal-covariates", Nc::Independent) },
    Entry { id: "entry12-noncausal-correlated-y", build: || entry12("entry12-noncausal-correlated-y", Nc::WithY) },
    Entry { id: "entry12-noncausal-correlated-x", build: || entry12("entry12-noncausal-correlated-x", Nc::WithXy) },
    Entry { id: "entry12-reverse", build: entry12_reverse },
    Entry { id: "entry13-dv-measurement", build: entry13 },
    Entry { id: "entry14-iv-measurement", build: entry14 },
    Entry { id: "entry15-covariate-measurement", build: entry15 },
    Entry { id: "entry15-moderator-measurement", build: entry15_moderator },
];

/// Ids of every built-in scenario, in catalog order.
pub fn catalog_ids() -> Vec<&'static str> {
    ENTRIES.iter().map(|e| e.id).collect()
}

pub fn catalog_entry(id: &str) -> Result<ScenarioConfig> {
    let e = ENTRIES
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::Lookup(format!("catalog id '{id}'")))?;
    Ok(serde_json::from_value((e.build)())?)
}

pub fn catalog() -> Vec<ScenarioConfig> {
    ENTRIES.iter().map(|e| catalog_entry(e.id).expect("catalog entries parse")).collect()
}

fn normal(name: &str, mean: f64, sd: f64) -> Value {
    json!({ "name": name, "kind": "normal", "params": { "mean": mean, "sd": sd } })
}

fn err(coef: f64, mean: f64, sd: f64) -> Value {
    json!({ "coef": coef, "mean": mean, "sd": sd })
}

fn fit(label: &str, formula: &str) -> Value {
    json!({ "label": label, "op": "fit", "formula": formula })
}

/// Summary and report outputs plus one CSV per analysis label.
fn outputs(analyses: &[Value], data: bool, mc: Option<&Value>) -> Value {
    let mut out = vec![
        json!({ "what": "summary", "path": "summary.txt" }),
        json!({ "what": "report", "path": "report.json" }),
    ];
    if data {
        out.push(json!({ "what": "data", "path": "data.csv" }));
    }
    for a in analyses {
        if let Some(l) = a.get("label").and_then(Value::as_str) {
            out.push(json!({ "what": format!("analysis:{l}"), "path": format!("{l}.csv") }));
        }
    }
    if let Some(m) = mc {
        out.push(json!({ "what": "mc", "path": "mc.csv" }));
        out.push(json!({ "what": "mc_summary", "path": "mc_summary.csv" }));
        for h in m["histograms"].as_array().into_iter().flatten() {
            let s = h["series"].as_str().expect("series name");
            out.push(json!({ "what": format!("histogram:{s}"), "path": format!("histogram_{s}.csv") }));
        }
    }
    Value::Array(out)
}

fn scenario(id: &str, description: &str, data: Value, analyses: Vec<Value>, write_data: bool) -> Value {
    let outs = outputs(&analyses, write_data, None);
    json!({
        "id": id,
        "description": description,
        "seed": 1992,
        "data": data,
        "analyses": analyses,
        "outputs": outs,
    })
}

fn with_mc(mut cfg: Value, mc: Value) -> Value {
    let analyses = cfg["analyses"].as_array().cloned().unwrap_or_default();
    cfg["outputs"] = outputs(&analyses, true, Some(&mc));
    cfg["mc"] = mc;
    cfg
}

fn entry1() -> Value {
    let scm = json!({
        "n": 100,
        "sources": [normal("X", 5.0, 1.0)],
        "equations": [{
            "target": "Y",
            "linear": [["X", 0.25]],
            "squares": [["X", -0.025]],
            "error": err(0.025, 5.0, 1.0),
        }],
    });
    scenario(
        "entry1-linearity",
        "Curvilinear association fitted with and without a squared term",
        json!({ "scm": scm }),
        vec![fit("linear", "Y ~ X"), fit("quadratic", "Y ~ X + X^2")],
        true,
    )
}

fn entry2_data(levels: Option<[f64; 5]>) -> Value {
    let mut y = json!({ "target": "Y", "linear": [["X", 2.0]] });
    match levels {
        None => y["error"] = err(1.0, 10.0, 1.0),
        Some(sds) => {
            let lv: BTreeMap<String, Value> =
                sds.iter().enumerate().map(|(i, sd)| ((i + 1).to_string(), err(1.0, 10.0, *sd))).collect();
            y["group_error"] = json!({ "by": "X", "levels": lv });
        }
    }
    json!({ "scm": {
        "n": 1000,
        "sources": [{
            "name": "X", "kind": "repeat",
            "params": { "values": [1, 2, 3, 4, 5], "mode": "each", "k": 200 },
        }],
        "equations": [y],
    }})
}

fn entry2_homo() -> Value {
    scenario(
        "entry2-homoscedasticity",
        "Constant residual variance across X",
        entry2_data(None),
        vec![fit("ols", "Y ~ X")],
        true,
    )
}

fn entry2_expanding() -> Value {
    scenario(
        "entry2-heteroscedastic-expanding",
        "Residual SD grows with X (1, 1.7, 2.4, 3.1, 3.8)",
        entry2_data(Some([1.0, 1.7, 2.4, 3.1, 3.8])),
        vec![fit("ols", "Y ~ X")],
        true,
    )
}

fn entry2_erratic() -> Value {
    scenario(
        "entry2-heteroscedastic-erratic",
        "Residual SD varies erratically across X (.2, 3, 1.4, 4, .4)",
        entry2_data(Some([0.2, 3.0, 1.4, 4.0, 0.4])),
        vec![fit("ols", "Y ~ X")],
        true,
    )
}

fn entry2_multivariable() -> Value {
    let scm = json!({
        "n": 1000,
        "sources": [
            { "name": "C", "kind": "uniform_int", "params": { "lo": 1, "hi": 5 } },
            { "name": "S", "kind": "uniform_int", "params": { "lo": 1, "hi": 5 } },
        ],
        "equations": [
            { "target": "X", "linear": [["C", 0.1], ["S", 2.0]] },
            {
                "target": "Y",
                "linear": [["X", 2.0], ["C", 1.0]],
                "error": { "coef": 2.0, "mean": 15.0, "sd": 0.0, "sd_expr": { "vars": ["X", "C"], "exponent": 0.75 } },
            },
        ],
    });
    scenario(
        "entry2-multivariable-heteroscedastic",
        "Residual SD proportional to (X*C)^.75 in a two-predictor model",
        json!({ "scm": scm }),
        vec![fit("ols", "Y ~ X + C")],
        true,
    )
}

fn entry3(id: &str, rho: f64) -> Value {
    let names = ["Y", "X", "Z1", "Z2", "Z3", "Z4"];
    let mut corr = vec![vec![0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            corr[i][j] = if i == j {
                1.0
            } else if i == 0 || j == 0 {
                if i + j == 1 { 0.5 } else { 0.1 }
            } else {
                rho
            };
        }
    }
    let formula = "Y ~ X + Z1 + Z2 + Z3 + Z4";
    scenario(
        id,
        &format!("Exact-moment data with predictor intercorrelation {rho}"),
        json!({ "corr": { "n": 1000, "names": names, "corr": corr, "empirical_exact": true } }),
        vec![
            fit("ols", formula),
            json!({ "label": "collinearity", "op": "collinearity", "formula": formula }),
        ],
        true,
    )
}

fn entry4() -> Value {
    let scm = json!({
        "n": 100,
        "sources": [normal("X", 10.0, 1.0)],
        "equations": [{ "target": "Y", "linear": [["X", 0.6]], "error": err(0.5, 10.0, 1.0) }],
    });
    scenario(
        "entry4-outliers",
        "Single injected outliers on X, on Y, and at the mean of Y",
        json!({ "scm": scm }),
        vec![
            fit("ols", "Y ~ X"),
            json!({
                "label": "outliers",
                "op": "outliers",
                "y": "Y",
                "x": "X",
                "points": [
                    { "X": 16.0, "Y": "mean" },
                    { "X": 10.0, "Y": 17.0 },
                    { "X": 10.0, "Y": 50.0 },
                    { "X": 50.0, "Y": 100.0 },
                    { "X": 16.0, "Y": 100.0 },
                ],
            }),
        ],
        true,
    )
}

fn entry5() -> Value {
    let scm = json!({
        "n": 500000,
        "sources": [
            { "name": "EP", "kind": "repeat", "params": { "values": [0, 1], "mode": "times", "k": 250000 } },
            { "name": "PEA", "kind": "clamped_int_normal", "params": { "mean": 12.0, "sd": 2.5, "lo": 4.0, "hi": 19.0 } },
        ],
        "equations": [{
            "target": "SIEM",
            "linear": [["EP", 7.0], ["PEA", 0.0]],
            "interactions": [["PEA", "EP", -0.5]],
            "error": err(1.0, 5.0, 0.25),
        }],
    });
    let record = json!([{ "kind": "coef", "name": "b_EP", "formula": "SIEM ~ EP", "term": "EP" }]);
    let samples = |label: &str, filter: Value| {
        json!({ "label": label, "op": "repeated_samples", "k": 1000, "reps": 10000, "filter": filter, "record": record })
    };
    scenario(
        "entry5-unknown-interactions",
        "Treatment effect moderated by an unmeasured characteristic; random and non-random samples",
        json!({ "scm": scm }),
        vec![
            fit("population", "SIEM ~ EP"),
            json!({ "label": "pea_high", "op": "subgroup", "y": "SIEM", "x": "EP",
                    "filter": [{ "var": "PEA", "op": ">=", "value": 15 }] }),
            json!({ "label": "pea_low", "op": "subgroup", "y": "SIEM", "x": "EP",
                    "filter": [{ "var": "PEA", "op": "<=", "value": 8 }] }),
            samples("random_samples", json!([])),
            samples("pea_high_samples", json!([{ "var": "PEA", "op": ">=", "value": 15 }])),
            samples("pea_low_samples", json!([{ "var": "PEA", "op": "<=", "value": 8 }])),
        ],
        false,
    )
}

fn entry6() -> Value {
    let scm = json!({
        "n": 100,
        "sources": [
            { "name": "Tr", "kind": "repeat", "params": { "values": [1, 0], "mode": "each", "k": 50 } },
            { "name": "DI1", "kind": "repeat", "params": { "values": [0, 1], "mode": "times", "k": 50 } },
            { "name": "DV1", "kind": "clamped_int_normal", "params": { "mean": 2.5, "sd": 0.75 } },
            { "name": "SCV1", "kind": "clamped_int_normal", "params": { "mean": 35.0, "sd": 5.0 } },
            { "name": "CV1", "kind": "clamped_int_normal", "params": { "mean": 35000.0, "sd": 5000.0 } },
        ],
        "equations": [{
            "target": "Y",
            "linear": [["Tr", 10.0], ["DI1", 1.25], ["DV1", 0.25], ["SCV1", 0.0075], ["CV1", 0.0075]],
        }],
    });
    let covs = json!(["DI1", "DV1", "SCV1", "CV1"]);
    scenario(
        "entry6-covariate-balance",
        "Covariate differences between treatment and control, simple and blocked assignment",
        json!({ "scm": scm }),
        vec![
            json!({ "label": "balance", "op": "balance", "group": "Tr", "covariates": covs }),
            fit("treatment", "Y ~ Tr"),
            json!({ "label": "blocked_balance", "op": "balance", "group": "blocked", "covariates": covs }),
        ],
        true,
    )
    .pipe(|mut v| {
        v["prepare"] = json!([{ "step": "block_randomize", "strata": "DI1", "into": "blocked" }]);
        v
    })
}

trait Pipe: Sized {
    fn pipe(self, f: impl FnOnce(Self) -> Self) -> Self {
        f(self)
    }
}

impl Pipe for Value {}

/// Placeholder bookkeeping for randomized-specification templates.
#[derive(Default)]
struct Draws {
    ranges: BTreeMap<String, Value>,
}

impl Draws {
    fn p(&mut self, name: &str, lo: f64, hi: f64) -> Value {
        self.ranges.insert(name.to_string(), json!([lo, hi]));
        Value::String(format!("${name}"))
    }

    /// `coef * Normal(mean, sd)` with all three drawn.
    fn noise(&mut self, prefix: &str, coef: (f64, f64), sd: (f64, f64)) -> Value {
        json!({
            "coef": self.p(&format!("{prefix}_coef"), coef.0, coef.1),
            "mean": self.p(&format!("{prefix}_mean"), -5.0, 5.0),
            "sd": self.p(&format!("{prefix}_sd"), sd.0, sd.1),
        })
    }

    fn source(&mut self, name: &str, sd: (f64, f64)) -> Value {
        json!({
            "name": name,
            "kind": "normal",
            "params": {
                "mean": self.p(&format!("{name}_mean"), -5.0, 5.0),
                "sd": self.p(&format!("{name}_sd"), sd.0, sd.1),
            },
        })
    }
}

fn signed(sign: f64, lo: f64, hi: f64) -> (f64, f64) {
    if sign > 0.0 {
        (lo, hi)
    } else {
        (-hi, -lo)
    }
}

fn quadrant(sign: f64) -> &'static str {
    if sign > 0.0 { "+" } else { "-" }
}

fn entry7(id: &str, sx: f64, sy: f64) -> Value {
    let scm = json!({
        "n": 500,
        "sources": [normal("c", 0.0, 2.5)],
        "equations": [
            { "target": "x", "linear": [["c", 2.0 * sx]], "error": err(2.0, 0.0, 2.5) },
            { "target": "y", "linear": [["c", 2.0 * sy]], "error": err(2.0, 0.0, 2.5) },
        ],
    });
    let mut d = Draws::default();
    let c = d.source("c", (1.0, 5.0));
    let (xlo, xhi) = signed(sx, 1.0, 100.0);
    let (ylo, yhi) = signed(sy, 1.0, 100.0);
    let cx = d.p("c_to_x", xlo, xhi);
    let cy = d.p("c_to_y", ylo, yhi);
    let ex = d.noise("ex", (1.0, 100.0), (1.0, 5.0));
    let ey = d.noise("ey", (1.0, 100.0), (1.0, 5.0));
    let template = json!({
        "scm": {
            "sources": [c],
            "equations": [
                { "target": "x", "linear": [["c", cx]], "error": ex },
                { "target": "y", "linear": [["c", cy]], "error": ey },
            ],
        },
        "placeholders": d.ranges,
        // each replicate has 10000 rows, as in the loop that produced the
        // published summaries
        "n": { "lo": 10000, "hi": 10000, "integer": true },
        "analysis": [
            { "kind": "coef", "name": "bXY", "formula": "y ~ x", "term": "x" },
            { "kind": "coef", "name": "bXY_c", "formula": "y ~ x + c", "term": "x" },
        ],
        "reps": 10000,
    });
    let mc = json!({
        "template": template,
        "summaries": ["bXY", "bXY_c"],
        "histograms": [{ "series": "bXY", "bins": 50 }],
    });
    let cfg = scenario(
        id,
        &format!("Omitted confounder with effects ({},{}) on X and Y", quadrant(sx), quadrant(sy)),
        json!({ "scm": scm }),
        vec![json!({
            "label": "adjustments", "op": "compare_adjustments", "y": "y", "x": "x",
            "sets": [[], ["c"]], "truth": 0.0,
        })],
        true,
    );
    with_mc(cfg, mc)
}

fn entry8(id: &str, sx: f64, sy: f64) -> Value {
    let scm = json!({
        "n": 500,
        "sources": [normal("x", 0.0, 2.5), normal("y", 0.0, 2.5)],
        "equations": [
            { "target": "c", "linear": [["x", 2.0 * sx], ["y", 2.0 * sy]], "error": err(1.0, 0.0, 2.5) },
        ],
    });
    let mut d = Draws::default();
    let ex = d.noise("ex", (1.0, 100.0), (1.0, 5.0));
    let ey = d.noise("ey", (1.0, 100.0), (1.0, 5.0));
    let (xlo, xhi) = signed(sx, 1.0, 100.0);
    let (ylo, yhi) = signed(sy, 1.0, 100.0);
    let xc = d.p("x_to_c", xlo, xhi);
    let yc = d.p("y_to_c", ylo, yhi);
    let ec = d.noise("ec", (1.0, 100.0), (1.0, 5.0));
    let template = json!({
        "scm": {
            "equations": [
                { "target": "x", "error": ex },
                { "target": "y", "error": ey },
                { "target": "c", "linear": [["x", xc], ["y", yc]], "error": ec },
            ],
        },
        "placeholders": d.ranges,
        "n": { "lo": 100, "hi": 1000, "integer": true },
        "analysis": [
            { "kind": "coef", "name": "bXY", "formula": "y ~ x", "term": "x" },
            { "kind": "coef", "name": "bXY_c", "formula": "y ~ x + c", "term": "x" },
        ],
        "reps": 10000,
    });
    let mc = json!({
        "template": template,
        "summaries": ["bXY", "bXY_c"],
        "histograms": [{ "series": "bXY_c", "bins": 50 }],
    });
    let cfg = scenario(
        id,
        &format!("Adjusting for a collider caused ({},{}) by X and Y", quadrant(sx), quadrant(sy)),
        json!({ "scm": scm }),
        vec![json!({
            "label": "adjustments", "op": "compare_adjustments", "y": "y", "x": "x",
            "sets": [[], ["c"]], "truth": 0.0,
        })],
        true,
    );
    with_mc(cfg, mc)
}

fn entry9() -> Value {
    let scm = json!({
        "n": 1000,
        "sources": [normal("X", 0.0, 10.0), normal("MO", 0.0, 10.0)],
        "equations": [
            { "target": "ME", "linear": [["X", 1.0]], "interactions": [["X", "MO", 1.0]], "error": err(2.0, 0.0, 10.0) },
            {
                "target": "Y",
                "linear": [["ME", 1.0], ["X", 1.0]],
                "interactions": [["ME", "MO", 1.0], ["X", "MO", 1.0]],
                "error": err(2.0, 0.0, 10.0),
            },
        ],
    });
    scenario(
        "entry9-mediation-moderation",
        "Moderated mediation: X -> ME -> Y with MO moderating both paths",
        json!({ "scm": scm }),
        vec![
            fit("total", "Y ~ X"),
            fit("with_mediator", "Y ~ X + ME"),
            json!({ "label": "moderated", "op": "moderated", "y": "Y", "x": "X", "mo": "MO", "at": [-10.0, 0.0, 10.0] }),
            fit("full", "Y ~ X + ME + MO + X:MO + ME:MO"),
            json!({ "label": "mediation", "op": "mediation", "y": "Y", "x": "X", "m": "ME" }),
        ],
        true,
    )
}

fn entry9_nodirect() -> Value {
    let scm = json!({
        "n": 1000,
        "sources": [normal("X", 0.0, 10.0)],
        "equations": [
            { "target": "ME", "linear": [["X", 1.0]], "error": err(2.0, 0.0, 10.0) },
            { "target": "Y", "linear": [["ME", 1.0]], "error": err(2.0, 0.0, 10.0) },
        ],
    });
    scenario(
        "entry9-mediation-nodirect",
        "Full mediation: X affects Y only through ME",
        json!({ "scm": scm }),
        vec![
            fit("total", "Y ~ X"),
            fit("with_mediator", "Y ~ X + ME"),
            json!({ "label": "mediation", "op": "mediation", "y": "Y", "x": "X", "m": "ME" }),
        ],
        true,
    )
}

fn entry10() -> Value {
    let scm = json!({
        "n": 1000,
        "sources": [normal("Con", 0.0, 10.0)],
        "equations": [
            { "target": "X", "linear": [["Con", 2.0]], "error": err(0.5, 0.0, 10.0) },
            { "target": "Y", "linear": [["Con", 2.0]], "error": err(0.5, 0.0, 10.0) },
            { "target": "Des", "linear": [["Con", 20.0]], "error": err(1.0, 0.0, 10.0) },
        ],
    });
    scenario(
        "entry10-descendants",
        "Adjusting for a descendant of a confounder",
        json!({ "scm": scm }),
        vec![json!({
            "label": "adjustments", "op": "compare_adjustments", "y": "Y", "x": "X",
            "sets": [[], ["Con"], ["Des"], ["Con", "Des"]], "truth": 0.0,
        })],
        true,
    )
}

#[derive(Clone, Copy)]
enum Iv {
    Valid,
    InCausesC,
    CorrelatedC,
    DirectY,
    ViaM,
}

fn entry11(kind: Iv) -> Value {
    let (id, description) = match kind {
        Iv::Valid => ("entry11-iv-valid", "Valid instrument: IN causes X only"),
        Iv::InCausesC => ("entry11-iv-in-causes-c", "Misidentified instrument that also causes the confounder"),
        Iv::CorrelatedC => ("entry11-iv-correlated-c", "Misidentified instrument sharing a cause with the confounder"),
        Iv::DirectY => ("entry11-iv-direct-y", "Misidentified instrument with a direct effect on Y"),
        Iv::ViaM => ("entry11-iv-via-m", "Misidentified instrument affecting Y through a mediator"),
    };
    let u = (0.1, 10.0);
    let sd = (1.0, 30.0);
    let mut d = Draws::default();
    let mut sources = Vec::new();
    let mut equations = Vec::new();
    match kind {
        Iv::InCausesC => {
            sources.push(d.source("IN", sd));
            let a = d.p("in_to_con", u.0, u.1);
            equations.push(json!({ "target": "Con", "linear": [["IN", a]], "error": d.noise("econ", u, sd) }));
        }
        Iv::CorrelatedC => {
            sources.push(d.source("COR", sd));
            let a = d.p("cor_to_in", u.0, u.1);
            equations.push(json!({ "target": "IN", "linear": [["COR", a]], "error": d.noise("ein", u, sd) }));
            let b = d.p("cor_to_con", u.0, u.1);
            equations.push(json!({ "target": "Con", "linear": [["COR", b]], "error": d.noise("econ", u, sd) }));
        }
        _ => {
            sources.push(d.source("IN", sd));
            sources.push(d.source("Con", sd));
        }
    }
    if let Iv::ViaM = kind {
        let a = d.p("in_to_m", u.0, u.1);
        equations.push(json!({ "target": "M", "linear": [["IN", a]], "error": d.noise("em", u, sd) }));
    }
    let (xc, xi) = (d.p("con_to_x", u.0, u.1), d.p("in_to_x", u.0, u.1));
    equations.push(json!({ "target": "X", "linear": [["Con", xc], ["IN", xi]], "error": d.noise("ex", u, sd) }));
    let (yc, yx) = (d.p("con_to_y", u.0, u.1), d.p("x_to_y", u.0, u.1));
    let mut ylin = vec![json!(["Con", yc]), json!(["X", yx])];
    match kind {
        Iv::DirectY => ylin.push(json!(["IN", d.p("in_to_y", u.0, u.1)])),
        Iv::ViaM => ylin.push(json!(["M", d.p("m_to_y", u.0, u.1)])),
        _ => {}
    }
    equations.push(json!({ "target": "Y", "linear": ylin, "error": d.noise("ey", u, sd) }));
    let template = json!({
        "scm": { "sources": sources, "equations": equations },
        "placeholders": d.ranges,
        "n": { "lo": 150, "hi": 10000, "integer": true },
        "analysis": [
            { "kind": "coef", "name": "M1_byx", "formula": "Y ~ X + Con", "term": "X" },
            { "kind": "coef", "name": "M2_byin", "formula": "Y ~ IN", "term": "IN" },
            { "kind": "coef", "name": "M3_bxin", "formula": "X ~ IN", "term": "IN" },
            { "kind": "ratio", "name": "IN_byx", "numerator": "M2_byin", "denominator": "M3_bxin" },
            { "kind": "difference", "name": "D_byx", "a": "IN_byx", "b": "M1_byx" },
            { "kind": "difference", "name": "AD_byx", "a": "IN_byx", "b": "M1_byx", "abs": true },
        ],
        "reps": 10000,
    });
    let mc = json!({
        "template": template,
        "filters": [{ "var": "IN_byx", "op": ">=", "value": 0 }],
        "summaries": ["M1_byx", "IN_byx", "D_byx", "AD_byx"],
        "correlations": [["IN_byx", "M1_byx"]],
        "histograms": [{ "series": "D_byx", "bins": 50 }],
    });

    // the single illustrative dataset for the valid design
    let scm = json!({
        "n": 1000,
        "sources": [normal("C", 0.0, 10.0), normal("IN", 0.0, 10.0)],
        "equations": [
            { "target": "X", "linear": [["C", 1.0], ["IN", 1.0]], "error": err(1.0, 0.0, 10.0) },
            { "target": "Y", "linear": [["C", 1.0], ["X", 1.0]], "error": err(1.0, 0.0, 10.0) },
        ],
    });
    let cfg = scenario(
        id,
        description,
        json!({ "scm": scm }),
        vec![
            json!({
                "label": "adjustments", "op": "compare_adjustments", "y": "Y", "x": "X",
                "sets": [[], ["C"]], "truth": 1.0,
            }),
            json!({ "label": "iv", "op": "iv", "y": "Y", "x": "X", "instrument": "IN", "confounders": ["C"] }),
        ],
        true,
    );
    with_mc(cfg, mc)
}

#[derive(Clone, Copy)]
enum Nc {
    Independent,
    WithY,
    WithXy,
}

fn entry12(id: &str, kind: Nc) -> Value {
    let u = (-10.0, 10.0);
    let sd = (1.0, 30.0);
    let mut d = Draws::default();
    let mut sources = Vec::new();
    let mut equations = Vec::new();
    match kind {
        Nc::Independent => sources.push(d.source("Z", sd)),
        Nc::WithY | Nc::WithXy => {
            sources.push(d.source("Cor", sd));
            let a = d.p("cor_to_z", u.0, u.1);
            equations.push(json!({ "target": "Z", "linear": [["Cor", a]], "error": d.noise("ez", u, sd) }));
        }
    }
    let xlin = match kind {
        Nc::WithXy => vec![json!(["Cor", d.p("cor_to_x", u.0, u.1)])],
        _ => Vec::new(),
    };
    equations.push(json!({ "target": "X", "linear": xlin, "error": d.noise("ex", u, sd) }));
    let mut ylin = vec![json!(["X", d.p("x_to_y", u.0, u.1)])];
    if let Nc::WithY = kind {
        ylin.push(json!(["Cor", d.p("cor_to_y", u.0, u.1)]));
    }
    equations.push(json!({ "target": "Y", "linear": ylin, "error": d.noise("ey", u, sd) }));
    let template = json!({
        "scm": { "sources": sources, "equations": equations },
        "placeholders": d.ranges,
        "n": { "lo": 150, "hi": 10000, "integer": true },
        "analysis": [
            { "kind": "coef", "name": "M1_byx", "formula": "Y ~ X", "term": "X" },
            { "kind": "coef", "name": "M2_byx", "formula": "Y ~ X + Z", "term": "X" },
            { "kind": "difference", "name": "D_byx", "a": "M1_byx", "b": "M2_byx" },
        ],
        "reps": 10000,
    });
    let mc = json!({
        "template": template,
        "summaries": ["M1_byx", "M2_byx", "D_byx"],
        "histograms": [{ "series": "D_byx", "bins": 50 }],
    });
    let (description, extra) = match kind {
        Nc::Independent => ("Adjusting for a construct unrelated to X and Y", None),
        Nc::WithY => ("Adjusting for a construct correlated with Y", Some("Y")),
        Nc::WithXy => ("Adjusting for a construct correlated with X", Some("X")),
    };
    let mut scm = json!({
        "n": 1000,
        "sources": [normal("Z", 0.0, 10.0), normal("X0", 0.0, 10.0)],
        "equations": [
            { "target": "X", "linear": [["X0", 1.0]] },
            { "target": "Y", "linear": [["X", 1.0]], "error": err(1.0, 0.0, 10.0) },
        ],
    });
    if let Some(target) = extra {
        let idx = if target == "X" { 0 } else { 1 };
        scm["equations"][idx]["linear"].as_array_mut().expect("array").push(json!(["Z", 1.0]));
    }
    let cfg = scenario(
        id,
        description,
        json!({ "scm": scm }),
        vec![json!({
            "label": "adjustments", "op": "compare_adjustments", "y": "Y", "x": "X",
            "sets": [[], ["Z"]], "truth": 1.0,
        })],
        true,
    );
    with_mc(cfg, mc)
}

fn entry12_reverse() -> Value {
    let scm = json!({
        "n": 1000,
        "sources": [normal("X", 0.0, 10.0)],
        "equations": [{ "target": "Y", "linear": [["X", 1.0]], "error": err(1.0, 0.0, 10.0) }],
    });
    scenario(
        "entry12-reverse",
        "Correct and reversed causal specification of the same association",
        json!({ "scm": scm }),
        vec![fit("causal", "Y ~ X"), fit("reversed", "X ~ Y")],
        true,
    )
}

fn measurement_data() -> Value {
    json!({ "scm": {
        "n": 10000,
        "sources": [normal("X", 0.0, 10.0)],
        "equations": [{ "target": "Y", "linear": [["X", 1.0]], "error": err(1.0, 0.0, 30.0) }],
    }})
}

fn measurement_variants(side: &str, negate_log: bool) -> Value {
    let mut log = vec![json!({ "kind": "minmax", "pad_lo": 25.0, "pad_hi": 25.0 }), json!({ "kind": "log_e" })];
    if negate_log {
        log.push(json!({ "kind": "scale", "c": -1.0 }));
    }
    json!([
        { "label": "ordinal_quartiles", "target": side, "rules": [{ "kind": "ordinalize_quantiles", "probs": [0.25, 0.5, 0.75] }] },
        { "label": "ordinal_50_60_90", "target": side, "rules": [{ "kind": "ordinalize_quantiles", "probs": [0.5, 0.6, 0.9] }] },
        { "label": "ordinal_10_20_30", "target": side, "rules": [{ "kind": "ordinalize_quantiles", "probs": [0.1, 0.2, 0.3] }] },
        { "label": "dichotomy_median", "target": side, "rules": [{ "kind": "dichotomize_median" }] },
        { "label": "dichotomy_q25", "target": side, "rules": [{ "kind": "dichotomize_quantile", "p": 0.25 }] },
        { "label": "scaled", "target": side, "rules": [{ "kind": "scale", "c": 0.1 }] },
        { "label": "zscore", "target": side, "rules": [{ "kind": "zscore" }] },
        { "label": "log", "target": side, "rules": log },
        { "label": "power_0.2", "target": side, "rules": [{ "kind": "minmax", "pad_lo": 25.0, "pad_hi": 25.0 }, { "kind": "power", "p": 0.2 }] },
        { "label": "rounded", "target": side, "rules": [{ "kind": "round_whole" }] },
        { "label": "window_5", "target": side, "rules": [{ "kind": "window", "lo": -5.0, "hi": 5.0 }] },
    ])
}

fn entry13() -> Value {
    scenario(
        "entry13-dv-measurement",
        "Recoding and transforming the dependent variable",
        measurement_data(),
        vec![json!({
            "label": "attenuation", "op": "attenuation", "y": "Y", "x": "X",
            "variants": measurement_variants("y", false),
        })],
        true,
    )
}

fn entry14() -> Value {
    scenario(
        "entry14-iv-measurement",
        "Recoding and transforming the independent variable",
        measurement_data(),
        vec![json!({
            "label": "attenuation", "op": "attenuation", "y": "Y", "x": "X",
            "variants": measurement_variants("x", true),
        })],
        true,
    )
}

fn entry15() -> Value {
    let scm = json!({
        "n": 10000,
        "sources": [normal("Con", 0.0, 10.0)],
        "equations": [
            { "target": "X", "linear": [["Con", 4.0]], "error": err(1.0, 0.0, 10.0) },
            { "target": "Y", "linear": [["X", 1.0], ["Con", 4.0]], "error": err(1.0, 0.0, 30.0) },
        ],
    });
    scenario(
        "entry15-covariate-measurement",
        "Adjusting for a confounder measured continuously, ordinally, or dichotomously",
        json!({ "scm": scm }),
        vec![json!({
            "label": "adjustments", "op": "compare_adjustments", "y": "Y", "x": "X",
            "sets": [[], ["Con"], ["Con_OR1"], ["Con_DI1"]], "truth": 1.0,
        })],
        true,
    )
    .pipe(|mut v| {
        v["prepare"] = json!([
            { "step": "recode", "var": "Con", "into": "Con_OR1",
              "rules": [{ "kind": "ordinalize_quantiles", "probs": [0.25, 0.5, 0.75] }] },
            { "step": "recode", "var": "Con", "into": "Con_DI1", "rules": [{ "kind": "dichotomize_median" }] },
        ]);
        v
    })
}

fn entry15_moderator() -> Value {
    let scm = json!({
        "n": 10000,
        "sources": [normal("X", 0.0, 10.0), normal("Mod", 0.0, 10.0)],
        "equations": [{
            "target": "Y", "linear": [["X", 1.0]], "interactions": [["X", "Mod", 4.0]], "error": err(1.0, 0.0, 30.0),
        }],
    });
    scenario(
        "entry15-moderator-measurement",
        "Interaction with a moderator measured continuously or ordinally",
        json!({ "scm": scm }),
        vec![
            json!({ "label": "moderated", "op": "moderated", "y": "Y", "x": "X", "mo": "Mod", "at": [-10.0, 0.0, 10.0] }),
            json!({ "label": "moderated_ordinal", "op": "moderated", "y": "Y", "x": "X", "mo": "Mod_OR1", "at": [1.0, 4.0] }),
        ],
        true,
    )
    .pipe(|mut v| {
        v["prepare"] = json!([{ "step": "recode", "var": "Mod", "into": "Mod_OR1",
                                "rules": [{ "kind": "ordinalize_quantiles", "probs": [0.25, 0.5, 0.75] }] }]);
        v
    })
}
