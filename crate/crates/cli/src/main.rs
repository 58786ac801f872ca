use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biaslab_core::datakit::Dataset;
use biaslab_core::estimators::{fit, Family, Formula};
use biaslab_core::scenario::{
    catalog, catalog_entry, render_fit, run_scenario, Format, RunContext, ScenarioConfig,
};
use biaslab_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ANALYSIS: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "biaslab", version, about = "Simulate and measure regression bias mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file or the built-in catalog.
    Run(RunArgs),
    /// List built-in scenarios, or print one as JSON.
    Catalog {
        /// Print the config of this id instead of the list.
        #[arg(long)]
        show: Option<String>,
    },
    /// Fit a model to a CSV file.
    Fit(FitArgs),
    /// Run only the Monte Carlo section of a scenario.
    Mc(McArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario config (JSON).
    #[arg(long, conflicts_with = "catalog", required_unless_present = "catalog")]
    config: Option<PathBuf>,
    /// Built-in scenario id (see `biaslab catalog`).
    #[arg(long)]
    catalog: Option<String>,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config seed.
    #[arg(long, env = "BIASLAB_SEED")]
    seed: Option<u64>,
    /// Output directory (default: biaslab-out/<id>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default format for outputs that do not name one.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
    /// Worker threads for Monte Carlo loops.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    /// Override the number of replicates.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Model formula, e.g. "Y ~ X + Z + X:Z + X^2".
    #[arg(long)]
    formula: String,
    #[arg(long, default_value = "gaussian", value_parser = parse_family)]
    family: Family,
    /// Also write the fit as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_ANALYSIS
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn load(source: &Source) -> Result<(ScenarioConfig, PathBuf), Error> {
    match (&source.config, &source.catalog) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            let cfg = ScenarioConfig::from_json(&text).map_err(|e| match e {
                Error::Json(j) => Error::Validation(format!(
                    "{}: line {}, column {}: {j}",
                    path.display(),
                    j.line(),
                    j.column()
                )),
                other => other,
            })?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((cfg, base))
        }
        (None, Some(id)) => Ok((catalog_entry(id)?, PathBuf::from("."))),
        (None, None) => Err(Error::Validation("one of --config or --catalog is required".into())),
    }
}

fn setup_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(mut cfg: ScenarioConfig, base: PathBuf, common: &Common) -> Result<ExitCode, Error> {
    setup_threads(common.threads)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out_dir = common.out.clone().unwrap_or_else(|| Path::new("biaslab-out").join(&cfg.id));
    let ctx = RunContext { base_dir: base, out_dir: out_dir.clone(), format: common.format };
    let outcome = run_scenario(&cfg, &ctx)?;
    print!("{}", outcome.summary);
    if !cfg.outputs.is_empty() {
        println!("\nwrote {} file(s) to {}", cfg.outputs.len(), out_dir.display());
    }
    if outcome.all_failed() {
        eprintln!("error: every analysis failed");
        return Ok(ExitCode::from(EXIT_ANALYSIS));
    }
    Ok(ExitCode::SUCCESS)
}

/// Reduces a scenario to its Monte Carlo loop and the outputs that describe it.
fn mc_only(mut cfg: ScenarioConfig, reps: Option<usize>) -> Result<ScenarioConfig, Error> {
    let Some(mc) = cfg.mc.as_mut() else {
        return Err(Error::Validation(format!("scenario '{}' has no mc section", cfg.id)));
    };
    if let Some(r) = reps {
        mc.template.reps = r;
    }
    cfg.data = None;
    cfg.prepare.clear();
    cfg.analyses.clear();
    cfg.outputs.retain(|o| {
        let w = o.what.as_str();
        matches!(w, "mc" | "mc_summary" | "summary" | "report") || w.starts_with("histogram:")
    });
    cfg.validate()?;
    Ok(cfg)
}

fn fit_file(args: &FitArgs) -> Result<ExitCode, Error> {
    let file = fs::File::open(&args.data)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.data.display()))))?;
    let data = Dataset::read_csv(file)?;
    let formula = Formula::parse(&args.formula)?;
    formula.check_names(&data)?;
    let result = fit(&data, &formula, args.family)?;
    print!("{}", render_fit(&result));
    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&result)?;
        text.push('\n');
        fs::write(path, text)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Catalog { show: None } => {
            for cfg in catalog() {
                println!("{:<40} {}", cfg.id, cfg.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog { show: Some(id) } => catalog_entry(id).map(|cfg| {
            println!("{}", cfg.to_json());
            ExitCode::SUCCESS
        }),
        Command::Run(args) => load(&args.source).and_then(|(cfg, base)| execute(cfg, base, &args.common)),
        Command::Mc(args) => load(&args.source)
            .and_then(|(cfg, base)| Ok((mc_only(cfg, args.reps)?, base)))
            .and_then(|(cfg, base)| execute(cfg, base, &args.common)),
        Command::Fit(args) => fit_file(args),
    };
    result.unwrap_or_else(|e| fail(&e))
}
