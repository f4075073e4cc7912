//! `confcurve`: confidence distributions and confidence curves from the
//! command line. Every command writes a CSV (stdout unless `--out`) and a
//! JSON sidecar next to it.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod failure;
mod grid;
mod input;
mod output;
mod reproduce;

use grid::GridSpec;

#[derive(Parser)]
#[command(name = "confcurve", version, about = "Confidence distributions and confidence curves")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sidecar path (default: the CSV path with a .json extension).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Normal,
    Exponential,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseMethod {
    Iiccff,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FuseFocus {
    Common,
    Difference,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    NormalApprox,
    Wilks,
    WilksBartlett,
    Pivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    #[value(name = "table1-study-cds")]
    Table1StudyCds,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    /// Model for the sample.
    #[arg(long, value_enum, default_value = "normal")]
    pub model: ModelKind,
    /// One observation per line (a non-numeric first line is a header).
    #[arg(long)]
    pub input: PathBuf,
    /// Focus parameter: mean or sd (normal), rate (exponential, poisson).
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub grid: Option<GridSpec>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact pivot CD (Student t or chi-squared for normal data, gamma for exponential rates).
    PivotCd {
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Profile deviance mapped through the chi-squared(1) distribution.
    WilksCc {
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Profile deviance with a parametric-bootstrap Bartlett factor.
    BartlettCc {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, default_value_t = 2000)]
        bartlett_reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Optimal conditional CD for a common rate ratio across two-arm count studies.
    OptimalCd {
        /// Built-in dataset (lidocaine).
        #[arg(long, conflicts_with = "input")]
        fixture: Option<String>,
        /// CSV with columns m1,m0,y1,y0 (z optional).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "log:0.2:8:201")]
        grid: GridSpec,
        /// Simulations per grid point.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Evaluate by exact convolution instead of simulation.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Combine CDs listed in a JSON manifest.
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long, value_enum)]
        method: Option<FuseMethod>,
        #[arg(long, value_enum)]
        focus: Option<FuseFocus>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// CD for the random-effects spread tau, with its point mass at zero.
    TauCd {
        /// Raw series CSV `group,x,y`; slopes are fitted per group.
        #[arg(long, conflicts_with_all = ["effects", "fixture"])]
        input: Option<PathBuf>,
        /// Pre-summarized CSV `estimate,std_error`.
        #[arg(long, conflicts_with = "fixture")]
        effects: Option<PathBuf>,
        /// Built-in dataset (demography).
        #[arg(long)]
        fixture: Option<String>,
        /// Sex for the demography fixture.
        #[arg(long, default_value = "female")]
        sex: String,
        #[arg(long)]
        grid: Option<GridSpec>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Order-statistic confidence curves for quantiles.
    QuantileCc {
        #[arg(long)]
        input: PathBuf,
        /// Quantile levels.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
        p: Vec<f64>,
        /// Confidence levels for the reported regions.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.95")]
        levels: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Robust confidence curve from the minimum power-divergence criterion.
    RobustCc {
        #[arg(long, default_value = "binormal")]
        model: String,
        /// CSV `x,y` on the raw scale.
        #[arg(long, conflicts_with = "fixture")]
        input: Option<PathBuf>,
        /// Built-in dataset (animals, log-log scale).
        #[arg(long)]
        fixture: Option<String>,
        /// Take logs of both columns of --input.
        #[arg(long)]
        log_log: bool,
        #[arg(long, default_value = "rho")]
        focus: String,
        /// Tuning parameter.
        #[arg(long, conflicts_with = "downweight")]
        a: Option<f64>,
        /// Pick a so that a typical point is downweighted by this fraction.
        #[arg(long)]
        downweight: Option<f64>,
        #[arg(long)]
        grid: Option<GridSpec>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Coverage simulation for a confidence-curve construction.
    CoverageSim {
        #[arg(long, value_enum, default_value = "normal")]
        model: ModelKind,
        #[arg(long, value_enum, default_value = "wilks")]
        method: Method,
        /// True parameter, comma separated (defaults: normal 0,1; exponential 1; poisson 3).
        #[arg(long, value_delimiter = ',')]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        param: Option<String>,
        /// Sample size.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 2000)]
        bartlett_reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.8,0.9,0.95")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the data behind a figure or table.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Simulations per grid point (fig2).
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Demography CSV replacing the shipped snapshot (fig3).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a command described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::PivotCd { sample, output } => commands::pivot_cd(&sample, &output),
        Command::WilksCc { sample, output } => commands::deviance_cc(&sample, None, &output),
        Command::BartlettCc { sample, bartlett_reps, seed, output } => {
            commands::deviance_cc(&sample, Some((bartlett_reps, seed)), &output)
        }
        Command::OptimalCd { fixture, input, grid, draws, exact, seed, output } => {
            commands::optimal_cd(fixture.as_deref(), input.as_deref(), &grid, draws, exact, seed, &output)
        }
        Command::Fuse { manifest, grid, method, focus, output } => {
            commands::fuse(&manifest, grid, method, focus, &output)
        }
        Command::TauCd { input, effects, fixture, sex, grid, output } => commands::tau_cd(
            input.as_deref(),
            effects.as_deref(),
            fixture.as_deref(),
            &sex,
            grid,
            &output,
        ),
        Command::QuantileCc { input, p, levels, output } => commands::quantile(&input, &p, &levels, &output),
        Command::RobustCc { model, input, fixture, log_log, focus, a, downweight, grid, output } => {
            commands::robust(&commands::RobustArgs {
                model,
                input,
                fixture,
                log_log,
                focus,
                a,
                downweight,
                grid,
                output,
            })
        }
        Command::CoverageSim { model, method, theta, param, n, reps, bartlett_reps, levels, seed, output } => {
            commands::coverage(&commands::CoverageArgs {
                model,
                method,
                theta,
                param,
                n,
                reps,
                bartlett_reps,
                levels,
                seed,
                output,
            })
        }
        Command::Reproduce { figure, out_dir, seed, draws, data } => {
            reproduce::run(figure, &out_dir, seed, draws, data.as_deref())
        }
        Command::Run { config } => {
            let argv = config::argv_from_file(&config)?;
            let cli = Cli::try_parse_from(argv).map_err(|e| failure::config(e.to_string()))?;
            dispatch(cli.command)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")
        {
            eprintln!("error: {e:#}");
            return ExitCode::from(failure::EXIT_CONFIG);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(failure::exit_code(&e))
        }
    }
}
