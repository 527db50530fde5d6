//! `psmix` command-line tool.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use psmix::estimate::{checked, Estimator};
use psmix::io::{load_counts, write_ci_csv, write_cv_csv, write_records_csv, FitRecord};
use psmix::kernels::theory_constants;
use psmix::npmle::{fit_npmle_data, FitConfig};
use psmix::resampling::{bootstrap_ci, two_fold_cv, CiMode};
use psmix::simlab::{run_convergence_study, scenario, REGISTRY};
use psmix::wlse::fit_wlse_data;
use psmix::{EmpiricalPmf, KernelSpec};

#[derive(Parser)]
#[command(name = "psmix", version, about = "Mixtures of power series distributions for count data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator and write result.json
    Fit {
        /// Count file, or `earthquakes` for the builtin dataset
        #[arg(long)]
        data: String,
        /// poisson, geometric, negbinomial:<r> or logarithmic
        #[arg(long, default_value = "poisson")]
        kernel: KernelSpec,
        /// mle, wlse:<alpha>, hybrid or empirical
        #[arg(long, default_value = "mle")]
        estimator: Estimator,
        /// Recorded in the output; fitting itself is deterministic
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo convergence study; writes records.csv
    Simulate {
        #[arg(long, help = scenario_help())]
        scenario: String,
        /// Sample sizes, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "empirical,mle,hybrid,wlse:0.4")]
        estimators: Vec<Estimator>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percentile bootstrap bands for the NPMLE pmf; writes ci.csv
    Bootstrap {
        #[arg(long)]
        data: String,
        #[arg(long, default_value = "poisson")]
        kernel: KernelSpec,
        /// np (resample the data) or param (sample the fitted mixture)
        #[arg(long, default_value = "param")]
        mode: CiMode,
        /// Number of bootstrap samples
        #[arg(short = 'B', default_value_t = 200)]
        b: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Inclusive range `lo:hi` of counts to report
        #[arg(long, default_value = "0:20", value_parser = parse_k_range)]
        k_range: RangeInclusive<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated two-fold cross-validation; writes cv.csv
    Cv {
        #[arg(long)]
        data: String,
        #[arg(long, default_value = "poisson")]
        kernel: KernelSpec,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, value_delimiter = ',', default_value = "empirical,mle,hybrid,wlse:0,wlse:0.4,wlse:0.8")]
        estimators: Vec<Estimator>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the tail-bound constants as JSON
    Theory {
        #[arg(long)]
        kernel: KernelSpec,
        /// M for Poisson, q0 * R for the other families
        #[arg(long)]
        support_bound: f64,
        #[arg(long)]
        delta0: f64,
        #[arg(long, default_value_t = 0.5)]
        eta0: f64,
    },
}

fn scenario_help() -> String {
    format!("Scenario name: {}", REGISTRY.join(", "))
}

fn parse_k_range(s: &str) -> std::result::Result<RangeInclusive<u64>, String> {
    let (lo, hi) = match s.split_once(':') {
        Some((lo, hi)) => (lo, hi),
        None => (s, s),
    };
    let lo: u64 = lo.trim().parse().map_err(|_| format!("bad range start `{lo}`"))?;
    let hi: u64 = hi.trim().parse().map_err(|_| format!("bad range end `{hi}`"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok(lo..=hi)
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(data: &str) -> Result<EmpiricalPmf> {
    let dataset = load_counts(data).with_context(|| format!("loading {data}"))?;
    Ok(EmpiricalPmf::from_observations(&dataset.observations)?)
}

fn fit(data: &str, kernel: KernelSpec, estimator: Estimator, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let data = load(data)?;
    let record = if estimator == Estimator::Empirical {
        FitRecord::empirical(kernel, &data, seed)
    } else {
        let config = FitConfig::for_data(&kernel, &data);
        let npmle = checked(fit_npmle_data(&data, &kernel, &config)?).context("NPMLE fit")?;
        match estimator {
            Estimator::Wlse { alpha } => {
                let wlse = fit_wlse_data(&data, &kernel, alpha, &npmle, &config)?;
                if !wlse.converged {
                    eprintln!("warning: WLSE did not converge: {}", wlse.notes.join("; "));
                }
                FitRecord::from_fit(kernel, estimator, &wlse, &data, seed)
            }
            _ => FitRecord::from_fit(kernel, estimator, &npmle, &data, seed),
        }
    };
    let mut w = output(out)?;
    writeln!(w, "{}", record.to_json())?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            data,
            kernel,
            estimator,
            seed,
            out,
        } => fit(&data, kernel, estimator, seed, &out),
        Command::Simulate {
            scenario: name,
            ns,
            reps,
            estimators,
            seed,
            out,
        } => {
            let sc = scenario(&name)?;
            let records = run_convergence_study(&sc, &ns, &estimators, reps, seed)?;
            write_records_csv(&records, output(&out)?)?;
            Ok(())
        }
        Command::Bootstrap {
            data,
            kernel,
            mode,
            b,
            level,
            k_range,
            seed,
            out,
        } => {
            let data = load(&data)?;
            let table = bootstrap_ci(&data.observations(), &kernel, mode, b, level, k_range, None, seed)?;
            if table.dropped > 0 {
                eprintln!("note: {} of {b} bootstrap replicates dropped", table.dropped);
            }
            write_ci_csv(&table, output(&out)?)?;
            Ok(())
        }
        Command::Cv {
            data,
            kernel,
            runs,
            estimators,
            seed,
            out,
        } => {
            let data = load(&data)?;
            let table = two_fold_cv(&data.observations(), &kernel, &estimators, runs, seed)?;
            if table.skipped > 0 {
                eprintln!("note: {} of {runs} runs skipped after a failed fit", table.skipped);
            }
            write_cv_csv(&table, output(&out)?)?;
            Ok(())
        }
        Command::Theory {
            kernel,
            support_bound,
            delta0,
            eta0,
        } => {
            let constants = theory_constants(&kernel, support_bound, delta0, eta0)?;
            println!("{}", serde_json::to_string_pretty(&constants)?);
            Ok(())
        }
    }
}

/// Usage line of the subcommand named on the command line, if any.
fn usage_for_args() -> String {
    let mut cmd = Cli::command();
    let name = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    match name.and_then(|n| cmd.find_subcommand_mut(&n).cloned()) {
        Some(mut sub) => sub.render_usage().to_string().replacen("Usage: ", "Usage: psmix ", 1),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for_args());
            }
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_range_forms() {
        assert_eq!(parse_k_range("0:20").unwrap(), 0..=20);
        assert_eq!(parse_k_range("7").unwrap(), 7..=7);
        assert!(parse_k_range("5:2").is_err());
        assert!(parse_k_range("a:2").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
