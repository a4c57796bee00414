use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gtpbet::experiment::run_experiment;
use gtpbet::ingest::{transform_returns, PriceTable};
use gtpbet::output::fmt_float;

#[derive(Parser)]
#[command(version, about = "Sequential optimizing strategies for bounded forecasting games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a key = value config file.
    Run { config: PathBuf },
    /// Print the game outcomes (training rows first) for a price table.
    Transform {
        prices: PathBuf,
        /// Fraction of the series used only to estimate the centring.
        #[arg(long, default_value_t = 0.17)]
        c: f64,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn run(cli: Cli) -> gtpbet::Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let report = run_experiment(&config)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            Ok(true)
        }
        Command::Transform { prices, c } => {
            let table = PriceTable::read_csv(&prices)?;
            let tr = transform_returns(&table.rows, c)?;
            let mut out = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(std::io::stdout().lock());
            let mut header = vec!["n".to_string()];
            header.extend(table.names.iter().cloned());
            out.write_record(&header)?;
            let n0 = tr.training.n0() as i64;
            let rows = tr.training.points().iter().chain(&tr.outcomes);
            for (i, x) in rows.enumerate() {
                let mut rec = vec![(i as i64 - n0 + 1).to_string()];
                rec.extend(x.iter().map(|v| fmt_float(*v)));
                out.write_record(&rec)?;
            }
            out.flush().map_err(|e| gtpbet::Error::InvalidArgument(e.to_string()))?;
            eprintln!("{}", serde_json::to_string(&tr.transform)?);
            Ok(true)
        }
        Command::Selftest => {
            let checks = gtpbet::selftest::run_all();
            let mut stdout = std::io::stdout().lock();
            for c in &checks {
                let tag = if c.passed { "ok  " } else { "FAIL" };
                let _ = writeln!(stdout, "{tag} {:<28} {}", c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
