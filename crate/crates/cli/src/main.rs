use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pstar::config::Config;
use pstar::diagnostics::{heatmap_grid, residual_diagnostics, write_grid};
use pstar::estimator::fit;
use pstar::io::{read_panel_file, read_params, write_panel_file, write_params};
use pstar::replicate::{run_replicates, ReplicateOptions};
use pstar::simulate::{simulate, Design};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "pstar", version, about = "Simulate, fit and diagnose space-time autoregressive network models")]
struct Cli {
    /// Worker threads for the parallel backend (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use binary weights instead of row-standardized ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel; writes panel.csv, theta.json and heatmap grids.
    Simulate(Common),
    /// Fit a panel; writes fit.json, fit.txt and diagnostics.json.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Panel CSV with columns t,s,y,x1..xq.
        #[arg(long)]
        panel: PathBuf,
    },
    /// Residual diagnostics of a panel at a given parameter vector.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: PathBuf,
        /// Parameter JSON, e.g. the theta.json written by `simulate`.
        #[arg(long)]
        theta: PathBuf,
    },
    /// Monte-Carlo study: simulate and fit R times.
    Replicate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        /// Reuse one covariate draw in every replicate.
        #[arg(long)]
        fixed_design: bool,
    },
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<pstar::Error>() {
            Some(pstar::Error::NotConverged(_)) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        };
        Self { code, error }
    }
}

impl From<pstar::Error> for Failure {
    fn from(e: pstar::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INPUT);
    }
    let outcome = match cli.command {
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Fit { common, panel } => cmd_fit(&common, &panel),
        Command::Diagnose { common, panel, theta } => cmd_diagnose(&common, &panel, &theta),
        Command::Replicate {
            common,
            replicates,
            fixed_design,
        } => cmd_replicate(&common, replicates, fixed_design),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if threads.is_some_and(|t| t != 1) {
        log::warn!("built without the parallel feature; --threads is ignored");
    }
    Ok(())
}

fn load_config(c: &Common) -> CliResult<Config> {
    Config::from_file(&c.config)
        .with_context(|| format!("reading config {}", c.config.display()))
        .map_err(Failure::from)
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(Failure::from)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| anyhow!(e))?;
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::from)
}

fn cmd_simulate(c: &Common) -> CliResult<u8> {
    let cfg = load_config(c)?;
    let spec = cfg.model_spec(c.no_standardize)?;
    let theta = cfg.theta(&spec)?;
    let covariates = cfg.covariates()?;
    let opts = cfg.simulation_options(c.seed)?;
    let sim = simulate(&spec, &theta, Design::Generate(&covariates), &opts)?;
    prepare_out(&c.out)?;
    write_panel_file(&c.out.join("panel.csv"), &sim.panel)?;
    write_params(&c.out.join("theta.json"), &theta)?;
    let dims = spec.weights.lattice_dims();
    if dims.is_some() {
        let t_len = sim.panel.t_len();
        for t in t_len.saturating_sub(3)..t_len {
            let y = &sim.panel.y[t + spec.p];
            let grid = heatmap_grid(y.as_slice(), dims)?;
            write_grid(&c.out.join(format!("heatmap_t{}.csv", t + 1)), &grid)?;
        }
    }
    println!(
        "simulated n = {}, T = {}, p = {} into {}",
        spec.n(),
        opts.t_len,
        spec.p,
        c.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct FailureReport<'a> {
    converged: bool,
    error: &'a str,
}

fn cmd_fit(c: &Common, panel: &Path) -> CliResult<u8> {
    let cfg = load_config(c)?;
    let spec = cfg.model_spec(c.no_standardize)?;
    let data = read_panel_file(panel, Some(spec.p)).with_context(|| format!("reading panel {}", panel.display()))?;
    data.validate(&spec)?;
    let mut options = cfg.optim.clone();
    if let Some(seed) = c.seed {
        options.seed = seed;
    }
    prepare_out(&c.out)?;
    let result = match fit(&spec, &data, &options) {
        Ok(r) => r,
        Err(e @ pstar::Error::NotConverged(_)) => {
            let msg = e.to_string();
            write_json(
                &c.out.join("fit.json"),
                &FailureReport {
                    converged: false,
                    error: &msg,
                },
            )?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&c.out.join("fit.json"), &result)?;
    let table = result.table();
    fs::write(c.out.join("fit.txt"), &table).context("writing fit.txt")?;
    print!("{table}");
    let diag = residual_diagnostics(&spec, &result.theta, &data)?;
    write_json(&c.out.join("diagnostics.json"), &diag)?;
    println!(
        "residual Moran p-value (median over t): {:.4}; excess kurtosis {:.4}",
        diag.median_moran_pvalue, diag.excess_kurtosis
    );
    if result.converged {
        Ok(0)
    } else {
        eprintln!("error: optimizer did not converge; see {}", c.out.join("fit.json").display());
        Ok(EXIT_NUMERIC)
    }
}

fn cmd_diagnose(c: &Common, panel: &Path, theta: &Path) -> CliResult<u8> {
    let cfg = load_config(c)?;
    let spec = cfg.model_spec(c.no_standardize)?;
    let data = read_panel_file(panel, Some(spec.p)).with_context(|| format!("reading panel {}", panel.display()))?;
    data.validate(&spec)?;
    let theta = read_params(theta).with_context(|| format!("reading parameters {}", theta.display()))?;
    theta.check_shape(&spec)?;
    let diag = residual_diagnostics(&spec, &theta, &data)?;
    prepare_out(&c.out)?;
    write_json(&c.out.join("diagnostics.json"), &diag)?;
    let qq: Vec<String> = std::iter::once("theoretical,residual".to_string())
        .chain(diag.qq.iter().map(|(a, b)| format!("{a:?},{b:?}")))
        .collect();
    fs::write(c.out.join("qq.csv"), qq.join("\n") + "\n").context("writing qq.csv")?;
    println!("{:>4} {:>10} {:>10} {:>10}", "t", "I", "z", "p-value");
    for (t, m) in diag.moran.iter().enumerate() {
        println!("{:>4} {:>10.4} {:>10.4} {:>10.4}", t + 1, m.i, m.z, m.pvalue);
    }
    println!("excess kurtosis {:.4}", diag.excess_kurtosis);
    Ok(0)
}

fn cmd_replicate(c: &Common, replicates: Option<usize>, fixed_design: bool) -> CliResult<u8> {
    let cfg = load_config(c)?;
    let spec = cfg.model_spec(c.no_standardize)?;
    let theta = cfg.theta(&spec)?;
    let covariates = cfg.covariates()?;
    let sim = cfg.simulation_options(c.seed)?;
    let rep = cfg.replicate.clone();
    let replicates = replicates
        .or(rep.as_ref().map(|r| r.replicates))
        .ok_or_else(|| anyhow!("replicate count missing: pass --replicates or set `replicate.R`"))?;
    if replicates < 2 {
        return Err(anyhow!("--replicates must be at least 2").into());
    }
    let opts = ReplicateOptions {
        replicates,
        t_len: sim.t_len,
        burn_in: sim.burn_in,
        seed: sim.seed,
        fixed_design: fixed_design || rep.is_some_and(|r| r.fixed_design),
        fit: cfg.optim.clone(),
    };
    let summary = run_replicates(&spec, &theta, &covariates, &opts)?;
    prepare_out(&c.out)?;
    write_json(&c.out.join("replicates.json"), &summary)?;
    let table = summary.to_string();
    fs::write(c.out.join("summary.txt"), &table).context("writing summary.txt")?;
    print!("{table}");
    if summary.successes == 0 {
        eprintln!("error: no replicate converged");
        return Ok(EXIT_NUMERIC);
    }
    Ok(0)
}
