//! `sut`: command-line access to the unified skew-t library.

mod args;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use args::{GridSpec, RangeSpec};
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "sut", version, about = "Multivariate unified skew-t distribution")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for QMC randomisation and sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Lattice points per randomisation (power of two)
    #[arg(long = "qmc-points", global = true, default_value_t = 1 << 13)]
    pub qmc_points: usize,
    /// Number of QMC randomisations
    #[arg(long = "qmc-rand", global = true, default_value_t = 8)]
    pub qmc_rand: usize,
    /// Tolerance for structural checks (zero blocks, equal correlations)
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Parameter file in JSON
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Density on a grid or at listed points
    Pdf {
        #[command(flatten)]
        points: PointArgs,
        /// Report the log density in the value column
        #[arg(long)]
        log: bool,
    },
    /// Distribution function on a grid or at listed points
    Cdf {
        #[command(flatten)]
        points: PointArgs,
    },
    /// Draw a sample
    Sample {
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        /// selection, convolution or sun-mixture
        #[arg(long, default_value = "convolution")]
        method: String,
    },
    /// Moments up to order four and Mardia measures
    Moments {
        #[arg(long, value_enum, default_value_t = Route::Convolution)]
        route: Route,
        /// Draws for the Monte-Carlo route
        #[arg(short, long, default_value_t = 1_000_000)]
        n: usize,
    },
    /// Mardia measures against the latent dimension for directional loadings
    MardiaSweep {
        #[arg(long, default_value_t = 1)]
        m_min: usize,
        #[arg(long, default_value_t = 10)]
        m_max: usize,
        /// Skew direction of every latent loading
        #[arg(long, default_value = "1,1", allow_hyphen_values = true)]
        direction: String,
        /// Degrees of freedom (a number or "inf")
        #[arg(long, default_value = "5")]
        nu: String,
        /// Fraction of the positive-definiteness boundary (0 gives Δ = 0)
        #[arg(long, default_value_t = sut_core::presets::BOUNDARY_FRACTION)]
        fraction: f64,
    },
    /// Apply a closure operation and print the resulting parameters
    Transform {
        #[command(subcommand)]
        op: TransformOp,
    },
    /// Validity and identifiability report
    Check,
    /// Bivariate density grid for a figure preset or a parameter file
    Contour {
        /// fig1-{sun,sut}-m{1,2,3}
        #[arg(long)]
        preset: Option<String>,
        /// lo:hi for both axes
        #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
        range: RangeSpec,
        #[arg(long, default_value_t = 101)]
        steps: usize,
    },
    /// Density of Q = (Y − ξ)ᵀΩ⁻¹(Y − ξ)
    Quadform {
        /// lo:hi:steps; the default spans the 0.001 to 0.999 quantiles of the symmetric case
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
        /// Sphere directions for the averaging step
        #[arg(long, default_value_t = 4096)]
        directions: usize,
    },
}

#[derive(Args, Debug, Clone)]
pub struct PointArgs {
    /// lo:hi:steps, once for all axes or once per axis
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Vec<GridSpec>,
    /// Comma-separated point; repeatable
    #[arg(long, allow_hyphen_values = true)]
    pub point: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Convolution,
    Mixture,
    Mc,
}

#[derive(Subcommand, Debug, Clone)]
pub enum TransformOp {
    /// AY + b; rows of A separated by ';'
    Linear {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<String>,
    },
    /// Law of the first d1 or the last d − d1 coordinates
    Marginal {
        #[arg(long)]
        d1: usize,
        #[arg(long, value_enum, default_value_t = BlockArg::First)]
        block: BlockArg,
    },
    /// Y₁ + Y₂ for the two halves of Y
    AddMarginals,
    /// Law of Y₂ given Y₁ = y1
    Conditional {
        #[arg(long)]
        d1: usize,
        #[arg(long, allow_hyphen_values = true)]
        y1: String,
    },
    /// Law of Y₂ given Y₁ > 0
    ConditionPositive {
        #[arg(long)]
        d1: usize,
    },
    /// Drop the first m1 latent components
    ReduceLatent {
        #[arg(long)]
        m1: usize,
    },
    /// Canonical form: the transform C and the law of CY
    Canonical,
    /// Reorder latent components (zero-based)
    Permute {
        #[arg(long)]
        perm: String,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockArg {
    First,
    Second,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
    Output(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Output(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numeric(m) | CliError::Output(m) => m,
        }
    }
}

impl From<sut_core::SutError> for CliError {
    fn from(e: sut_core::SutError) -> Self {
        use sut_core::SutError::*;
        match e {
            DenominatorUnderflow { .. } | AcceptanceTooLow { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
