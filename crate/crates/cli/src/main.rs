mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wegner::analysis::{AnalysisError, ExtrapolationMode};
use wegner::css::CssError;
use wegner::exact::ExactError;
use wegner::gf2::Gf2Error;
use wegner::mc::{Algorithm, Direction, McError};
use wegner::model::ModelError;
use wegner::tiling::TilingError;

/// Pipelines over coupling-matrix Ising models: build tilings, inspect
/// their codes, solve small models exactly, simulate large ones, and fit
/// the results. Every command writes a manifest listing its outputs.
#[derive(Parser)]
#[command(name = "wegner", version, max_term_width = 100)]
struct Cli {
    /// Directory for outputs (defaults to $WEGNER_DATA_DIR, then ".").
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a tiling: a square torus, an {f,d} quotient from relators, or
    /// a random search over relators.
    Tiling(TilingArgs),
    /// Report the CSS code of a stored tiling: n, r, k, R and a distance.
    Code(CodeArgs),
    /// Exact checks on a stored graph: dualities, homological difference,
    /// or a full report.
    Exact(ExactArgs),
    /// Monte Carlo temperature sweeps writing the measurement CSV.
    Mc(McArgs),
    /// Closed-form bounds: critical-coupling gaps, duality map, freezing
    /// region, series radius, cumulant coefficients.
    Bounds {
        #[command(subcommand)]
        cmd: BoundsCmd,
    },
    /// Fits and transforms over measurement CSVs.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Serialize)]
pub struct TilingArgs {
    /// Face order of the {f,d} tiling.
    #[arg(long, default_value_t = 4)]
    pub f: usize,
    /// Vertex order of the {f,d} tiling.
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Build the L x L square torus instead of a group quotient.
    #[arg(long, conflicts_with_all = ["relator", "pinned", "search"])]
    pub torus: Option<usize>,
    /// Extra relator word (letters a, A, b, B); repeatable.
    #[arg(long)]
    pub relator: Vec<String>,
    /// Use a pinned {5,5} quotient by edge count: 80, 150 or 900.
    #[arg(long, conflicts_with = "relator")]
    pub pinned: Option<usize>,
    /// Random relator search instead of a single build.
    #[arg(long, conflicts_with_all = ["relator", "pinned"])]
    pub search: bool,
    #[arg(long, default_value_t = 200)]
    pub attempts: usize,
    #[arg(long, default_value_t = 6)]
    pub min_len: usize,
    #[arg(long, default_value_t = 14)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_edges: usize,
    /// Coset cap for the enumeration; exceeded means no closure.
    #[arg(long, default_value_t = 50_000)]
    pub max_cosets: usize,
    /// Output stem.
    #[arg(long, default_value = "tiling")]
    pub out: String,
}

#[derive(Args, Serialize)]
pub struct CodeArgs {
    /// Tiling JSON produced by the tiling command.
    #[arg(long)]
    pub graph: PathBuf,
    /// Exhaustive distance (small codes only) instead of the randomized
    /// upper bound.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 400)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "code")]
    pub out: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Duality,
    EmDuality,
    DeltaF,
    Report,
}

#[derive(Args, Serialize)]
pub struct ExactArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub check: CheckKind,
    /// Coupling K at which to evaluate.
    #[arg(long, default_value_t = 0.5)]
    pub coupling: f64,
    /// Longitudinal field (report only).
    #[arg(long, default_value_t = 0.0)]
    pub field: f64,
    /// Spin-count cap for exact enumeration.
    #[arg(long, default_value_t = 24)]
    pub cap: u32,
    /// Bernoulli defect probability for em-duality.
    #[arg(long, default_value_t = 0.0)]
    pub defect_p: f64,
    #[arg(long, default_value_t = 1)]
    pub defect_seed: u64,
    #[arg(long, default_value = "exact")]
    pub out: String,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s {
        "metropolis" => Ok(Algorithm::Metropolis),
        "wolff" => Ok(Algorithm::Wolff),
        other => Err(format!("unknown algorithm '{other}' (metropolis|wolff)")),
    }
}

#[derive(Args, Serialize)]
pub struct McArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_parser = parse_algorithm, default_value = "wolff")]
    pub algorithm: Algorithm,
    /// Comma-separated temperature list (any order; stored hottest first).
    #[arg(long)]
    pub t_list: Option<String>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub cycles: usize,
    /// Sweeps (or cluster updates) per temperature visit.
    #[arg(long, default_value_t = 4096)]
    pub sweeps: usize,
    /// Independent chains averaged together.
    #[arg(long, default_value_t = 64)]
    pub runs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0.0)]
    pub field: f64,
    /// Bernoulli bond-flip probability (quenched disorder).
    #[arg(long, default_value_t = 0.0)]
    pub disorder_p: f64,
    #[arg(long, default_value_t = 1)]
    pub disorder_seed: u64,
    /// Fraction of sweeps discarded after each temperature move.
    #[arg(long, default_value_t = 0.25)]
    pub discard: f64,
    /// Worker threads; 1 keeps runs bit-exact in sequence (outputs are
    /// identical for any value because runs merge in index order).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "series")]
    pub out: String,
}

#[derive(Subcommand, Serialize)]
pub enum BoundsCmd {
    /// Critical-coupling gap of the {f,d} family; temperature bound when
    /// f = d.
    Tc {
        #[arg(long)]
        f: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value = "bounds")]
        out: String,
    },
    /// Dual coupling K* of K and the self-dual fixed point.
    Dual {
        #[arg(long)]
        coupling: f64,
        #[arg(long, default_value = "bounds")]
        out: String,
    },
    /// Freezing-region membership, optionally with the homological
    /// difference bound at a given code distance.
    Freeze {
        /// Maximum bond weight m.
        #[arg(long)]
        m: usize,
        /// Disorder probability.
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long)]
        coupling: f64,
        #[arg(long)]
        distance: Option<usize>,
        #[arg(long, default_value = "bounds")]
        out: String,
    },
    /// High-temperature analyticity radius for (l,m)-sparse interactions.
    Hts {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value = "bounds")]
        out: String,
    },
    /// Per-bond cumulant coefficient bound of order s.
    Cumulant {
        #[arg(long)]
        s: u32,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        coupling: f64,
        #[arg(long, default_value_t = 0.0)]
        field_strength: f64,
        /// Spin-to-bond ratio r/n entering the with-field case.
        #[arg(long, default_value_t = 1.0)]
        spin_density: f64,
        #[arg(long, default_value = "bounds")]
        out: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    M,
    Chi,
    Eps,
    C,
    U4,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::M => "m",
            Quantity::Chi => "chi",
            Quantity::Eps => "eps",
            Quantity::C => "C",
            Quantity::U4 => "U4",
        }
    }
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "cool" => Ok(Direction::Cool),
        "heat" => Ok(Direction::Heat),
        other => Err(format!("unknown direction '{other}' (cool|heat)")),
    }
}

fn parse_mode(s: &str) -> Result<ExtrapolationMode, String> {
    match s {
        "linear" => Ok(ExtrapolationMode::Linear),
        "quadratic" => Ok(ExtrapolationMode::Quadratic),
        other => Err(format!("unknown mode '{other}' (linear|quadratic)")),
    }
}

#[derive(Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub cmd: AnalyzeCmd,
}

#[derive(Subcommand, Serialize)]
pub enum AnalyzeCmd {
    /// Quartic fit of a peak in one measured quantity.
    Peak {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        quantity: Quantity,
        #[arg(long, value_parser = parse_direction, default_value = "cool")]
        direction: Direction,
        /// Half-width of the fit window around the discrete maximum.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value = "analysis")]
        out: String,
    },
    /// Map the energy curve through the coupling duality.
    Dualize {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_parser = parse_direction, default_value = "cool")]
        direction: Direction,
        #[arg(long, default_value = "analysis")]
        out: String,
    },
    /// Infinite-size intercept from per-size peak positions.
    Extrapolate {
        /// One point as n:value:err; repeatable.
        #[arg(long)]
        point: Vec<String>,
        #[arg(long, value_parser = parse_mode, default_value = "linear")]
        mode: ExtrapolationMode,
        #[arg(long, default_value = "analysis")]
        out: String,
    },
    /// Crossings of one quantity between two measurement files.
    Crossing {
        #[arg(long)]
        csv_a: PathBuf,
        #[arg(long)]
        csv_b: PathBuf,
        #[arg(long, value_enum, default_value = "u4")]
        quantity: Quantity,
        #[arg(long, value_parser = parse_direction, default_value = "cool")]
        direction: Direction,
        #[arg(long, default_value = "analysis")]
        out: String,
    },
}

/// Exit codes: 0 ok, 2 config error, 3 infeasible size, 4 numerical
/// failure, 5 invariant violation.
fn classify(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<TilingError>() {
            return match e {
                TilingError::DidNotClose { .. } => 3,
                TilingError::InvariantViolation(_) => 5,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ExactError>() {
            return match e {
                ExactError::CapExceeded { .. } => 3,
                ExactError::Numerical(_) => 4,
                ExactError::Css(CssError::NotOrthogonal { .. }) => 5,
                ExactError::Css(CssError::InfeasibleSize { .. }) => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<CssError>() {
            return match e {
                CssError::NotOrthogonal { .. } => 5,
                CssError::InfeasibleSize { .. } => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return match e {
                AnalysisError::NonConvergence { .. } | AnalysisError::Singular => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<McError>().is_some()
            || cause.downcast_ref::<ModelError>().is_some()
            || cause.downcast_ref::<Gf2Error>().is_some()
        {
            return 2;
        }
    }
    2
}

fn main() {
    let cli = Cli::parse();
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("WEGNER_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let result = match &cli.cmd {
        Cmd::Tiling(args) => commands::cmd_tiling(&out_dir, args),
        Cmd::Code(args) => commands::cmd_code(&out_dir, args),
        Cmd::Exact(args) => commands::cmd_exact(&out_dir, args),
        Cmd::Mc(args) => commands::cmd_mc(&out_dir, args),
        Cmd::Bounds { cmd } => commands::cmd_bounds(&out_dir, cmd),
        Cmd::Analyze(args) => commands::cmd_analyze(&out_dir, args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(classify(&err));
    }
}
