//! Experiment driver for `lmgsim`: TOML configs naming a figure dataset (or a
//! custom grid), deterministic execution, and CSV output with a run manifest.

pub mod config;
pub mod fit;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentId, ExperimentKind, ResolvedConfig};
pub use fit::{fit_csv, FitError, FitReport, FitRow};
pub use run::{compute, run_experiment, Manifest, RunError, Table, MANIFEST_FILE};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output root.
pub const OUTPUT_DIR_ENV: &str = "LMGSIM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "lmgsim-output";

/// Exit status for configs that fail to parse or validate.
pub const EXIT_INVALID: u8 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: u8 = 1;

/// Where a run writes: the config's `output` (absolute, or under `root`),
/// otherwise `root/<name>`.
pub fn output_dir(config: &ExperimentConfig, resolved: &ResolvedConfig, root: &std::path::Path) -> std::path::PathBuf {
    match &config.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(&resolved.name),
    }
}
