mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use sobolev_lab::constants::constants_report;
use sobolev_lab::io::{
    function_to_csv, report_plot_data, report_to_csv, spectrum_to_csv, to_json, write_atomic, CriticalPointRecord,
};
use sobolev_lab::optimize::{minimize, minimize_multistart, multistart_inits, MinimizeOptions};
use sobolev_lab::reproduce::{self, ReproduceOptions};
use sobolev_lab::stability::{log_grid, ray_scan, ExperimentReport, Ray};
use sobolev_lab::{rng, DiscreteFunction};

use crate::config::{InitArg, Resolved, Settings};
use crate::error::CliError;

/// Optimal Sobolev constants and stability experiments on S^d and S^1 x S^(d-1).
#[derive(Parser)]
#[command(name = "sobolev-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON file whose keys override the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the optimal constants of a model
    Constants(Common),
    /// Eigenvalues of the reduced Laplace–Beltrami operator
    Spectrum(Common),
    /// Minimize the Sobolev quotient and certify the result
    Minimize(Common),
    /// Deficit versus distance along a ray through the constants
    Scan(Common),
    /// Refit and classify a saved scan report
    Fit {
        /// Report written by `scan`
        #[arg(long)]
        input: PathBuf,
        /// Directory for fit.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite and print a PASS/FAIL table
    Reproduce {
        /// Groups or criterion ids, comma separated
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Resolution override
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = reproduce::DEFAULT_SEED)]
        seed: u64,
        /// Directory for reproduce.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: Settings,
    result: T,
}

fn resolve(common: &Common) -> Result<Resolved, CliError> {
    let mut settings = common.settings.clone();
    if let Some(path) = &common.config {
        settings = settings.overlay(Settings::load(path)?);
    }
    settings.resolve()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    write_atomic(&dir.join(name), contents.as_bytes())?;
    Ok(())
}

fn envelope<T: Serialize>(command: &str, cfg: &Resolved, result: T) -> Result<String, CliError> {
    Ok(to_json(&Envelope {
        schema_version: 1,
        command,
        config: cfg.as_settings(),
        result,
    })?)
}

fn cmd_constants(cfg: &Resolved) -> Result<(), CliError> {
    let budget = (cfg.b_budget > 0).then_some((cfg.b_budget, cfg.seed));
    let report = constants_report(&cfg.manifold()?, Some(cfg.q), cfg.n, budget)?;
    let table = report.to_table();
    write(&cfg.out, "constants.json", &envelope("constants", cfg, &report)?)?;
    write(&cfg.out, "constants.txt", &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_spectrum(cfg: &Resolved) -> Result<(), CliError> {
    let disc = cfg.discretization()?;
    let spectrum = disc.laplace_eigenpairs(cfg.k.max(1))?;
    let csv = spectrum_to_csv(&spectrum)?;
    write(&cfg.out, "spectrum.csv", &csv)?;
    write(&cfg.out, "spectrum.json", &envelope("spectrum", cfg, &spectrum)?)?;
    print!("{csv}");
    Ok(())
}

fn cmd_minimize(cfg: &Resolved) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let opts = MinimizeOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        kernel_threshold: cfg.kernel_threshold,
        spectrum_size: cfg.k,
        ..MinimizeOptions::default()
    };
    let disc = spec.disc();
    let (start, cp) = match cfg.init {
        InitArg::Constant => (0, minimize(&spec, &DiscreteFunction::constant(disc, 1.0), &opts)?),
        InitArg::Random => {
            let init = rng::random_positive_field(disc, &mut rng::stream(cfg.seed, 0), 8, 0.8)?;
            (0, minimize(&spec, &init, &opts)?)
        }
        InitArg::Multistart => minimize_multistart(&spec, &multistart_inits(&spec, cfg.starts, cfg.seed)?, &opts)?,
    };
    #[derive(Serialize)]
    struct Out {
        start_index: usize,
        critical_point: CriticalPointRecord,
    }
    let record = CriticalPointRecord::from(&cp);
    write(&cfg.out, "minimizer.csv", &function_to_csv(&cp.u)?)?;
    write(
        &cfg.out,
        "minimize.json",
        &envelope("minimize", cfg, Out { start_index: start, critical_point: record })?,
    )?;
    println!(
        "value {:.15e}  residual {:.3e}  kernel_dim {}  iterations {}  converged {}",
        cp.value, cp.grad_residual, cp.kernel_dim, cp.iterations, cp.converged
    );
    if !cp.converged {
        return Err(CliError::Numerical(format!(
            "minimizer did not certify: residual {:.3e} > {:.1e}",
            cp.grad_residual, cfg.grad_tol
        )));
    }
    Ok(())
}

fn cmd_scan(cfg: &Resolved) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let ray = Ray::from_constants(spec.disc(), spec.q(), cfg.ray_mode)?
        .with_epsilons(log_grid(cfg.eps_lo, cfg.eps_hi, cfg.eps_count))?
        .signed(cfg.signed);
    let report = ray_scan(&spec, &ray, cfg.family.into(), Some(cfg.seed))?;
    write(&cfg.out, "scan.csv", &report_to_csv(&report)?)?;
    write(&cfg.out, "scan_plot.dat", &report_plot_data(&report))?;
    write(&cfg.out, "scan.json", &envelope("scan", cfg, &report)?)?;
    print_fit(&report);
    Ok(())
}

fn print_fit(report: &ExperimentReport) {
    match (report.fitted_slope, report.slope_stderr) {
        (Some(s), Some(e)) => println!("slope {s:.4} ± {e:.1e}  classification {:?}", report.classification),
        _ => println!("slope -  classification {:?}", report.classification),
    }
}

fn cmd_fit(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let inner = value.get("result").cloned().unwrap_or(value);
    let report: ExperimentReport =
        serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let refit = report.refit();
    print_fit(&refit);
    if let Some(dir) = out {
        #[derive(Serialize)]
        struct Fit<'a> {
            schema_version: u32,
            input: String,
            fitted_slope: Option<f64>,
            slope_stderr: Option<f64>,
            fit_window: Option<[f64; 2]>,
            classification: &'a sobolev_lab::stability::Classification,
        }
        let fit = Fit {
            schema_version: 1,
            input: input.display().to_string(),
            fitted_slope: refit.fitted_slope,
            slope_stderr: refit.slope_stderr,
            fit_window: refit.fit_window,
            classification: &refit.classification,
        };
        write(dir, "fit.json", &to_json(&fit)?)?;
    }
    Ok(())
}

fn cmd_reproduce(only: Vec<String>, n: Option<usize>, seed: u64, out: Option<&Path>) -> Result<bool, CliError> {
    reproduce::validate_selection(&only)?;
    if let Some(n) = n {
        if n < sobolev_lab::discretization::MIN_NODES {
            return Err(CliError::Config(format!("n = {n} below {}", sobolev_lab::discretization::MIN_NODES)));
        }
    }
    let opts = ReproduceOptions { n, only, seed };
    let outcomes = reproduce::run(&opts, |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} passed, {} failed", outcomes.len() - failed, failed);
    if let Some(dir) = out {
        write(dir, "reproduce.json", &to_json(&outcomes)?)?;
    }
    Ok(failed == 0)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SOBOLEV_LAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("SOBOLEV_LAB_THREADS='{v}' is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Constants(c) => cmd_constants(&resolve(&c)?)?,
        Command::Spectrum(c) => cmd_spectrum(&resolve(&c)?)?,
        Command::Minimize(c) => cmd_minimize(&resolve(&c)?)?,
        Command::Scan(c) => cmd_scan(&resolve(&c)?)?,
        Command::Fit { input, out } => cmd_fit(&input, out.as_deref())?,
        Command::Reproduce { only, n, seed, out } => return cmd_reproduce(only, n, seed, out.as_deref()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let code = e.exit_code();
            let diag = serde_json::json!({ "error": e.to_string(), "exit_code": code });
            eprintln!("{diag}");
            ExitCode::from(code as u8)
        }
    }
}
