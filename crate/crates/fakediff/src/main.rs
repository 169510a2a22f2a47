//! Thin command-line wrapper over the library's `cli` module.

use clap::{Args as ClapArgs, Parser, Subcommand};
use fakediff::cli::{cmd_inspect, cmd_madan_yor, cmd_simulate, cmd_verify, RunConfig};
use fakediff::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fakediff",
    version,
    about = "Construct, simulate and verify fake diffusions: martingales with the \
             marginals of (exponential) Brownian motion that are not those processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapArgs, Debug, Default)]
struct CommonFlags {
    /// Reference law: ebm | bm
    #[arg(long)]
    law: Option<String>,
    /// Clock ratio bound in (0, 1)
    #[arg(long = "K")]
    k: Option<f64>,
    /// Mixing weight in (0, K)
    #[arg(long)]
    c: Option<f64>,
    /// Time horizon
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Number of Monte Carlo paths
    #[arg(long)]
    paths: Option<usize>,
    /// Scheme steps over the horizon
    #[arg(long)]
    steps: Option<usize>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CommonFlags {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(law) = self.law {
            cfg.law = law.parse()?;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        if let Some(n) = self.steps {
            cfg.n_steps = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.out {
            cfg.out_dir = o;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dump the clock, local-volatility surface and residual density as CSV
    Inspect {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Simulate the fake ensemble; writes paths.csv and qv.csv
    Simulate {
        #[command(flatten)]
        common: CommonFlags,
        /// Write every k-th grid time to paths.csv
        #[arg(long, default_value_t = 20)]
        report_every: usize,
    },
    /// Run the verification battery; writes report.json
    Verify {
        #[command(flatten)]
        common: CommonFlags,
        /// Marginal check times (comma separated, must lie on the grid)
        #[arg(long, value_delimiter = ',')]
        report_times: Option<Vec<f64>>,
        /// Also run the embedded-process checks
        #[arg(long)]
        with_madan_yor: bool,
    },
    /// Simulate the embedded (stopped Brownian) process; writes embedded.csv
    MadanYor {
        #[command(flatten)]
        common: CommonFlags,
        /// Report times for the stopped values (comma separated)
        #[arg(long, value_delimiter = ',')]
        report_times: Option<Vec<f64>>,
        /// Brownian Euler step
        #[arg(long, default_value_t = 1e-4)]
        bm_step: f64,
        /// Per-path cap on Brownian steps
        #[arg(long, default_value_t = 10_000_000)]
        step_budget: u64,
    },
}

fn print_report(report: &fakediff::verify::VerificationReport) {
    for c in &report.checks {
        let status = if c.pass {
            "PASS"
        } else if c.warning {
            "WARN"
        } else {
            "FAIL"
        };
        println!(
            "{status} {:<42} statistic {:>12.5e}  threshold {:>12.5e}",
            c.check, c.statistic, c.threshold
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Inspect { common } => {
            let cfg = common.into_config()?;
            print!("{}", cfg.echo_header());
            for f in cmd_inspect(&cfg)? {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { common, report_every } => {
            let mut cfg = common.into_config()?;
            cfg.report_every = report_every;
            print!("{}", cfg.echo_header());
            for f in cmd_simulate(&cfg)? {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, report_times, with_madan_yor } => {
            let mut cfg = common.into_config()?;
            if let Some(ts) = report_times {
                cfg.report_times = ts;
            }
            cfg.with_madan_yor = with_madan_yor;
            print!("{}", cfg.echo_header());
            let report = cmd_verify(&cfg)?;
            print_report(&report);
            println!("wrote {}", cfg.out_dir.join("report.json").display());
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::MadanYor { common, report_times, bm_step, step_budget } => {
            let mut cfg = common.into_config()?;
            if let Some(ts) = report_times {
                cfg.report_times = ts;
            }
            cfg.bm_step = bm_step;
            cfg.step_budget = step_budget;
            print!("{}", cfg.echo_header());
            let report = cmd_madan_yor(&cfg)?;
            print_report(&report);
            if report.checks.iter().all(|c| c.pass || c.warning) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
