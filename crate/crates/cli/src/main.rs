use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use turbodb_core::catalog::Catalog;
use turbodb_core::config::Config;
use turbodb_core::scheduler::ServiceLevel;
use turbodb_core::sim::{compare_levels, generate, read_trace, simulate, simulate_scenario, FixtureSize, Scenario, Stop};

#[derive(Parser)]
#[command(name = "turbodb", version, about = "SLA-tiered query service and workload simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP query server.
    Serve {
        /// Flat JSON config file; `TURBODB_*` variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
    },
    /// Simulate a scenario on the virtual clock and print its report.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Force every query to one level: immediate, relaxed or best_of_effort.
        #[arg(long)]
        force_level: Option<ServiceLevel>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: SimArgs,
    },
    /// Replay a JSON-lines trace until every query has finished.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: SimArgs,
    },
    /// Run a scenario once per forced level and compare costs.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: SimArgs,
    },
    /// Write the synthetic dataset and its manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Scales every table relative to the default size.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; a fresh default dataset is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => {
            let mut c = Config::default();
            c.apply_env(std::env::vars())?;
            c.validate()?;
            Ok(c)
        }
    }
}

/// The catalog, plus the temporary directory holding generated data.
fn load_catalog(data: Option<&Path>) -> Result<(Arc<Catalog>, Option<tempfile::TempDir>)> {
    match data {
        Some(p) => Ok((Arc::new(Catalog::load_manifest(p)?), None)),
        None => {
            let dir = tempfile::tempdir()?;
            let manifest = generate(dir.path(), FixtureSize::default(), 42)?;
            Ok((Arc::new(Catalog::load_manifest(&manifest)?), Some(dir)))
        }
    }
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, data } => {
            let config = load_config(config.as_deref())?;
            let catalog = Arc::new(Catalog::load_manifest(&data)?);
            eprintln!("listening on {}", config.gateway.listen);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(turbodb_gateway::serve(config, catalog))?;
        }
        Command::Simulate {
            scenario,
            force_level,
            out,
            common,
        } => {
            let config = load_config(common.config.as_deref())?;
            let (catalog, _tmp) = load_catalog(common.data.as_deref())?;
            let mut scenario = Scenario::load(&scenario)?;
            if let Some(level) = force_level {
                scenario = scenario.forced(level);
            }
            let run = simulate_scenario(&scenario, config, catalog)?;
            emit(&run.report.to_json(), out.as_deref())?;
            if !run.checks.is_clean() {
                bail!("built-in checks failed: {}", run.checks.summary());
            }
        }
        Command::Replay { trace, out, common } => {
            let config = load_config(common.config.as_deref())?;
            let (catalog, _tmp) = load_catalog(common.data.as_deref())?;
            let rows = read_trace(&trace)?;
            let run = simulate("replay", 0, &rows, config, catalog, 100, Stop::Drain)?;
            emit(&run.report.to_json(), out.as_deref())?;
            if !run.checks.is_clean() {
                bail!("built-in checks failed: {}", run.checks.summary());
            }
        }
        Command::Compare { scenario, out, common } => {
            let config = load_config(common.config.as_deref())?;
            let (catalog, _tmp) = load_catalog(common.data.as_deref())?;
            let scenario = Scenario::load(&scenario)?;
            let cmp = compare_levels(&scenario, config, catalog)?;
            print!("{}", cmp.table());
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&cmp)?;
                std::fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::GenData { out, seed, scale } => {
            if scale.is_nan() || scale <= 0.0 {
                bail!("--scale must be positive");
            }
            let base = FixtureSize::default();
            let size = |n: usize| ((n as f64 * scale).round() as usize).max(1);
            let manifest = generate(
                &out,
                FixtureSize {
                    customers: size(base.customers),
                    orders: size(base.orders),
                    lineitems: size(base.lineitems),
                },
                seed,
            )?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
