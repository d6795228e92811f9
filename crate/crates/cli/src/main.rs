//! `qhmr`: generate, inspect, reduce and verify quantum hidden Markov models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qhmr_core::generators::Structure;
use qhmr_core::Order;

#[derive(Parser, Debug)]
#[command(name = "qhmr", version, about = "Exact CPTP-preserving reduction of quantum hidden Markov models")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Relative tolerance for rank, PSD and equivalence decisions.
    #[arg(long, global = true, env = "QHMR_TOL", default_value_t = 1e-9)]
    pub tol: f64,
    /// Seed for randomized decompositions and generators.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 16)]
    pub max_iters: usize,
    #[arg(long, global = true, value_enum, default_value_t = OrderArg::ReachableFirst)]
    pub order: OrderArg,
    /// Horizon of the trajectory checks.
    #[arg(long, global = true, default_value_t = 64)]
    pub horizon: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    ReachableFirst,
    ObservableFirst,
}

impl From<OrderArg> for Order {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::ReachableFirst => Order::ReachableFirst,
            OrderArg::ObservableFirst => Order::ObservableFirst,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Reachable,
    Observable,
    Iterative,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a built-in model to a JSON file (stdout when no output is given).
    Generate {
        #[command(subcommand)]
        model: GenerateModel,
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Print dimensions, CPTP residuals and subspace ranks of a model.
    Info { model: PathBuf },
    /// Reduce a model and write the reduction certificate.
    Reduce {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Algorithm::Iterative)]
        algorithm: Algorithm,
        /// Certificate path; defaults to `<model>.cert.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a certificate against the model it claims to reduce.
    Verify { model: PathBuf, certificate: PathBuf },
}

#[derive(Subcommand, Debug, Clone)]
pub enum GenerateModel {
    /// Grover search on N items with M marked items.
    Grover {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
    /// System, interface qubit and environment with random Hamiltonians.
    Interface {
        #[arg(long, default_value_t = 2)]
        d_s: usize,
        #[arg(long, default_value_t = 3)]
        d_e: usize,
        #[arg(long, default_value_t = 0.1)]
        p_i: f64,
        #[arg(long, default_value_t = 0.05)]
        p_s: f64,
        #[arg(long, default_value_t = 0.05)]
        p_e: f64,
        #[arg(long, default_value_t = 0.5)]
        dt: f64,
        /// Number of random initial densities.
        #[arg(long, default_value_t = 1)]
        states: usize,
    },
    /// Four-dimensional abelian model with trivial dynamics.
    Appendix,
    /// Two qubits with a product initial state set and output σz⊗σz.
    Example3 {
        /// Bloch vector `x,y,z` of the second-qubit state τ.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.5])]
        tau: Vec<f64>,
    },
    /// Seeded random CPTP model.
    Random {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        kraus: usize,
        #[arg(long, default_value_t = 1)]
        outputs: usize,
        #[arg(long, default_value_t = 1)]
        states: usize,
        #[arg(long, value_enum, default_value_t = StructureArg::None)]
        structure: StructureArg,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum StructureArg {
    None,
    Classical,
    Block,
    FixedPoint,
    Product,
}

impl From<StructureArg> for Structure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::None => Structure::None,
            StructureArg::Classical => Structure::Classical,
            StructureArg::Block => Structure::Block,
            StructureArg::FixedPoint => Structure::FixedPoint,
            StructureArg::Product => Structure::Product,
        }
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for CPTP failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
