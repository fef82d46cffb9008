use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dickman", version, about = "Dickman-limit samplers, distance checks and Stein solutions")]
pub struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,

    /// Falls back to DICKMAN_SEED, then 0.
    #[arg(long, env = "DICKMAN_SEED", default_value_t = 0, global = true)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UtilityKind {
    Identity,
    Exp,
    Log,
    PowerMixture,
    Tabulated,
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub theta: f64,

    #[arg(long, value_enum, default_value = "identity")]
    pub utility: UtilityKind,

    /// CARA coefficient for `exp`, top exponent for `power-mixture`.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    /// Number of atoms in a uniform power mixture.
    #[arg(long, default_value_t = 16)]
    pub atoms: usize,

    /// Two-column `x,s(x)` file for `tabulated`.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a batch from the truncated recursion.
    Sample {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 60)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Distances between depth `n` and a deep batch on shared uniforms.
    Distance {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Run a named bound check and report its verdict.
    BoundCheck {
        #[arg(long, required_unless_present = "list")]
        claim: Option<String>,
        /// List claim ids with the statements they check.
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Sample the prime-indexed weighted sum.
    PrimeSum {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value = "geometric")]
        marks: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        table_cache: Option<PathBuf>,
    },
    /// Solve the Stein equation for a test function.
    Stein {
        #[command(flatten)]
        spec: SpecArgs,
        /// linear, sin:W, cos:W, hinge:B or smooth-hinge:C:W
        #[arg(long, default_value = "sin:1")]
        test_fn: String,
        #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
        epsilon: f64,
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        x_max: f64,
    },
    /// Contraction constant of the averaging recursion.
    Rho {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Build or load the prime table and summarize it.
    PrimeTable {
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long)]
        table_cache: Option<PathBuf>,
    },
}
