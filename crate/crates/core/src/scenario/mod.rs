//! Config-driven scenario runs and the built-in catalog.

mod catalog;
mod config;
mod run;

pub use catalog::{catalog, catalog_entry, catalog_ids};
pub use config::{
    Analysis, AnalysisSpec, ColumnStat, CorrData, CorrMethod, DataSource, Format, HistogramSpec, McScenario,
    OutputSpec, PointValue, PrepareStep, ScenarioConfig, DEFAULT_SEED,
};
pub use run::{
    fmt_sig, render_fit, run_scenario, AnalysisOutput, AnalysisRecord, ConditionalSlope, CorrelationMatrix, McReport,
    Moderation, NamedSummary, OutlierRow, RunContext, RunOutcome, RunReport, SampleRun, SeriesCorrelation,
    SeriesHistogram,
};
