//! Front end for the bigsur metadata catalog: one binary hosting the CLI and
//! the HTTP service, with feature selection per installation.

pub mod app;
pub mod cli;
pub mod config;
pub mod ingest;
pub mod serve;

pub use app::{App, InitOptions};
pub use serve::{serve_background, HttpTransport, ServiceHandle};

use clap::Parser;

/// Run the CLI against real stdout/stderr. `argv[0]` is the program name.
pub fn run_cli(argv: &[String]) -> i32 {
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    run_cli_io(argv, &mut stdout, &mut stderr)
}

/// Run the CLI with explicit output streams; returns the exit code.
pub fn run_cli_io(
    argv: &[String],
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> i32 {
    match cli::Cli::try_parse_from(argv) {
        Ok(parsed) => cli::run(parsed, stdout, stderr),
        Err(e) => {
            // help and version requests are successes; everything else is a
            // usage error on stderr with the grammar
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                2
            } else {
                let _ = write!(stdout, "{e}");
                0
            }
        }
    }
}
