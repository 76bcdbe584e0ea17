use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmgsim_cli::{fit_csv, load_config, output_dir, run_experiment, DEFAULT_OUTPUT_DIR, EXIT_INVALID, EXIT_RUNTIME, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "lmgsim", version, about = "Collective-spin LMG dynamics, scrambling and SATIN metrology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Root for relative output paths.
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
        out_dir: PathBuf,
        /// Worker threads; all cores when absent. Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config and print its fully explicit form.
    Validate { config: PathBuf },
    /// Fit exponential growth rates to the columns of an output CSV.
    Fit {
        csv: PathBuf,
        /// Fit window in S chi t, as `a,b`.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
        /// Only this column; otherwise every positive data column.
        #[arg(long)]
        column: Option<String>,
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(format!("window [{a}, {b}] must be finite with a < b"));
    }
    Ok((a, b))
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("lmgsim: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out_dir, threads } => {
            let raw = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_INVALID, e),
            };
            let resolved = match raw.resolve() {
                Ok(r) => r,
                Err(e) => return fail(EXIT_INVALID, e),
            };
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return fail(EXIT_RUNTIME, e);
                }
            }
            let dir = output_dir(&raw, &resolved, &out_dir);
            match run_experiment(&resolved, &dir) {
                Ok(manifest) => {
                    for o in &manifest.outputs {
                        println!("{}", dir.join(&o.file).display());
                    }
                    println!("{}", dir.join(lmgsim_cli::MANIFEST_FILE).display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_RUNTIME, e),
            }
        }
        Command::Validate { config } => match load_config(&config).and_then(|c| c.resolve()) {
            Ok(resolved) => {
                print!("{}", resolved.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_INVALID, e),
        },
        Command::Fit { csv, window, column } => {
            let file = match File::open(&csv) {
                Ok(f) => f,
                Err(e) => return fail(EXIT_RUNTIME, format!("{}: {e}", csv.display())),
            };
            let report = match fit_csv(file, window, column.as_deref()) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_RUNTIME, e),
            };
            for name in &report.skipped {
                eprintln!("lmgsim: skipped `{name}` (non-positive values in window)");
            }
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            for row in &report.fits {
                if let Err(e) = w.serialize(row) {
                    return fail(EXIT_RUNTIME, e);
                }
            }
            if let Err(e) = w.flush().and_then(|_| io::stdout().flush()) {
                return fail(EXIT_RUNTIME, e);
            }
            ExitCode::SUCCESS
        }
    }
}
