//! Command-line driver: synthesize data, recover blocks, estimate payoffs,
//! simulate the dynamics and compare partitions. Every command writes flat
//! CSV/JSON files plus a `manifest.json` into its output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "hergm",
    version,
    about = "Strategic network formation with latent blocks"
)]
pub struct Cli {
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker thread cap (0 or unset: all cores).
    #[arg(long, global = true, env = "HERGM_THREADS")]
    pub threads: Option<usize>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true, env = "HERGM_OUT_DIR")]
    pub out: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic network with planted blocks and covariates.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recover blocks, then estimate payoff parameters.
    Estimate(EstimateArgs),
    /// Descriptive statistics of a network.
    Stats {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Block assignment for within/between edge shares.
        #[arg(long)]
        blocks: Option<PathBuf>,
    },
    /// Similarity of two partitions of the same nodes.
    Compare { a: PathBuf, b: PathBuf },
    /// Run the link-formation dynamics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Comma-separated covariate names; all columns by default.
    #[arg(long, value_delimiter = ',')]
    pub use_covariates: Option<Vec<String>>,
    /// Recover blocks from the network alone.
    #[arg(long)]
    pub no_covariates: bool,
    /// Use this block assignment instead of recovering one.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub em_iters: Option<usize>,
    /// `auto`, `all`, `case-control` or `case-control:<ratio>`.
    #[arg(long)]
    pub sampling: Option<String>,
    /// `derived` or `rearranged`.
    #[arg(long)]
    pub quad_form: Option<String>,
    /// Write the variational state after every iteration.
    #[arg(long)]
    pub checkpoint: bool,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Synth { config } => {
            let dir = commands::synth(Some(&config), cli.seed, out)?;
            println!("{}", dir.display());
        }
        Command::Estimate(a) => {
            let o = config::EstimateOverrides {
                edges: a.edges,
                covariates: a.covariates,
                use_covariates: a.use_covariates,
                no_covariates: a.no_covariates,
                blocks: a.blocks,
                k_max: a.k_max,
                em_iters: a.em_iters,
                sampling: a.sampling,
                quad_form: a.quad_form,
                checkpoint: a.checkpoint,
                seed: cli.seed,
            };
            let dir = commands::estimate(a.config.as_deref(), o, out)?;
            println!("{}", dir.display());
        }
        Command::Stats {
            edges,
            covariates,
            blocks,
        } => {
            let dir = commands::stats(
                &edges,
                covariates.as_deref(),
                blocks.as_deref(),
                cli.seed.unwrap_or(0),
                out,
            )?;
            println!("{}", dir.display());
        }
        Command::Compare { a, b } => {
            let (_, r) = commands::compare(&a, &b, cli.seed.unwrap_or(0), out)?;
            println!(
                "yule {:.6} adjusted_rand {:.6} blocks {} vs {}",
                r.yule, r.adjusted_rand, r.a.blocks, r.b.blocks
            );
        }
        Command::Simulate { config } => {
            let dir = commands::simulate(Some(&config), cli.seed, out)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

/// Runs a parsed command inside a pool capped at `--threads`.
pub fn run(cli: Cli) -> CliResult<()> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(cli))
    }
    #[cfg(not(feature = "parallel"))]
    {
        if cli.threads.is_some_and(|t| t > 1) {
            log::warn!("built without the `parallel` feature; --threads is ignored");
        }
        dispatch(cli)
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
