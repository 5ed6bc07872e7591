//! `resmono`: resource monotones, convertibility and catalysis from the
//! command line.
//!
//! Every subcommand prints one JSON document on stdout (or a table rendering
//! of it with `--table`). Exit codes: 0 for a definite result, 2 when a
//! convertibility question stays undecided, 1 for any input error.
//! Arguments taking a document accept either inline JSON or a file path.

mod commands;
mod table;

use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "resmono", version, about = "Resource monotones and state convertibility")]
pub struct Cli {
    /// Seed for every randomised step (oracle restarts, sampling).
    #[arg(long, global = true, env = "RESMONO_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Oracle feasibility tolerance; commands without an oracle ignore it
    /// and report the fixed tolerance they use.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Print JSON (the default).
    #[arg(long, global = true, conflicts_with = "table")]
    pub json: bool,

    /// Print a table rendering of the JSON output.
    #[arg(long, global = true)]
    pub table: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every monotone of a theory on a state.
    Eval {
        #[arg(long)]
        theory: String,
        #[arg(long)]
        state: String,
    },
    /// Decide whether `from` can be converted into `to` by free operations.
    Decide {
        #[arg(long)]
        theory: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Minimise `||Λ(from) - to||_1` over free channels.
    Oracle {
        #[arg(long)]
        theory: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 3000)]
        max_iters: usize,
        #[arg(long, default_value_t = 30)]
        depth: usize,
        /// Include the optimal Choi matrix in the output.
        #[arg(long)]
        emit_channel: bool,
    },
    /// Simulate the catalytic coherence protocol on `n` copies.
    Catalysis {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Include the intermediate states of the protocol.
        #[arg(long)]
        emit_trace: bool,
    },
    /// Find a pure state that a list of continuous monotones cannot
    /// separate from a full-rank state, and check it is unreachable.
    Theorem1 {
        #[arg(long)]
        theory: String,
        #[arg(long)]
        state: String,
        /// Comma-separated monotone names; defaults to the theory's
        /// continuous monotones.
        #[arg(long, value_delimiter = ',')]
        monotones: Option<Vec<String>>,
    },
    /// Estimate how often random qubit pairs are ordered by convertibility.
    TotalOrder {
        #[arg(long)]
        theory: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Validate a state and/or theory document.
    #[command(group(ArgGroup::new("input").required(true).multiple(true).args(["state", "theory"])))]
    Validate {
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        theory: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(out) => {
            if cli.table {
                print!("{}", table::render(&out.value));
            } else {
                println!("{}", serde_json::to_string_pretty(&out.value).expect("JSON values serialise"));
            }
            ExitCode::from(out.exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
