//! File formats, settings and subcommands behind the `copaint` binary.
//!
//! Every subcommand is a plain function from resolved [`settings::Settings`]
//! and an output directory to a written set of artifacts, so the binary
//! only parses flags and the same code paths are testable in-process.

pub mod commands;
pub mod error;
pub mod formats;
pub mod methods;
pub mod model;
pub mod settings;

use std::path::Path;

pub use error::{CliError, Result};
pub use settings::Settings;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Subcommand names accepted by [`run`].
pub const COMMANDS: [&str; 4] = ["train-toy", "inpaint", "compare", "gap-plot"];

/// Dispatches `command` and returns its summary text.
pub fn run(command: &str, settings: &Settings, out: &Path) -> Result<String> {
    match command {
        "train-toy" => commands::train_toy(settings, out),
        "inpaint" => commands::inpaint(settings, out),
        "compare" => commands::compare(settings, out),
        "gap-plot" => commands::gap_plot(settings, out),
        other => Err(CliError::usage(format!("unknown command '{other}'"))),
    }
}
