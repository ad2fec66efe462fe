use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "kpzlab",
    version,
    about = "Moment Lyapunov exponents and upper-tail rate functions for the KPZ equation",
    after_help = "Rate functions are reported as positive numbers: `rate(s)` means \
                  lim −(1/t) log P(H(t,0) > s t), so the probability decays like e^{−t·rate}."
)]
pub struct Cli {
    /// Print JSON instead of a human-readable table.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Upper-tail rate function sup_p {s p − p³/24 − g(p)} (reported positive).
    #[command(
        after_help = "Sign convention: the printed rate is positive. The large-deviation limit \
                      lim (1/t) log P(H(t,0) > s t) equals minus this value."
    )]
    Rate(RateArgs),
    /// Lyapunov exponent (p³ − p)/24 + g(p).
    Lyapunov(LyapunovArgs),
    /// Variational estimate of g(p) = lim (1/t) sup_x φ_t(x).
    GEstimate(GEstimateArgs),
    /// Check every admissibility condition for a profile.
    VerifyHyp(VerifyHypArgs),
    /// Monte Carlo moments from the lattice scheme.
    Simulate(SimulateArgs),
    /// Exact first or second moments of the lattice scheme.
    Oracle(OracleArgs),
    /// Gaussian random-walk check of the Legendre engine.
    LdpToy(LdpToyArgs),
    /// Merge output files into one JSON bundle with a status summary.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    /// g ≡ 0 (deterministic initial data).
    Deterministic,
    /// g(p) = (p/2) max(p/2 + a, 0)².
    Brownian,
    /// g interpolated from a (p, g) table given by --g-table.
    Table,
}

#[derive(Debug, Args, Serialize)]
pub struct FamilySel {
    #[arg(long, value_enum, default_value = "deterministic")]
    pub family: FamilyArg,
    /// Brownian drift (a₊ = a₋ = a).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    /// CSV table with columns p and g, e.g. written by `g-estimate`.
    #[arg(long, value_name = "FILE")]
    pub g_table: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilySel,
    /// Single value of s.
    #[arg(long, conflicts_with = "s_grid")]
    pub s: Option<f64>,
    /// Grid `lo:hi:step`.
    #[arg(long, value_name = "GRID")]
    pub s_grid: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LyapunovArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub family: FamilySel,
    #[arg(long, conflicts_with = "p_grid")]
    pub p: Option<f64>,
    /// Grid `lo:hi:step`.
    #[arg(long, value_name = "GRID")]
    pub p_grid: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GEstimateArgs {
    /// Profile descriptor: a JSON file or inline JSON.
    #[arg(long)]
    pub profile: String,
    /// Grid `lo:hi:step`.
    #[arg(long, default_value = "0.25:4:0.25")]
    pub p_grid: String,
    /// `geom:lo:hi:n`.
    #[arg(long, default_value = "geom:10:1e5:9")]
    pub t_schedule: String,
    #[arg(long, env = "KPZLAB_LIMIT_TOL", default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyHypArgs {
    #[arg(long)]
    pub profile: String,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value = "geom:10:1e5:9")]
    pub t_schedule: String,
    /// Claimed g(p); defaults to the family's known value.
    #[arg(long, allow_hyphen_values = true)]
    pub g_claimed: Option<f64>,
    /// Sampled paths per cell for random profiles.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "KPZLAB_LIMIT_TOL", default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, env = "KPZLAB_K_SIGMA", default_value_t = 3.0)]
    pub k_sigma: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LatticeArgs {
    /// Profile descriptor: a JSON file or inline JSON.
    #[arg(
        long,
        required_unless_present = "narrow_wedge",
        conflicts_with = "narrow_wedge"
    )]
    pub profile: Option<String>,
    /// Start from Z(0, ·) = δ₀.
    #[arg(long)]
    pub narrow_wedge: bool,
    #[arg(long, default_value_t = 0.25)]
    pub dx: f64,
    /// Final time.
    #[arg(long)]
    pub t: f64,
    /// Time step (default dx²/8).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Half-width W of the domain [−W, W].
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub periodic: bool,
    /// Observation times (`lo:hi:step` or a single value; default: t).
    #[arg(long, value_name = "GRID")]
    pub times: Option<String>,
    /// Observation sites, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0",
        allow_hyphen_values = true
    )]
    pub x: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Moment orders, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub moments: Vec<f64>,
    /// Standard errors allowed when comparing with the exact moments.
    #[arg(long, env = "KPZLAB_K_SIGMA", default_value_t = 3.0)]
    pub k_sigma: f64,
    /// Also save the final fields as a binary ensemble file.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    FirstMoment,
    SecondMoment,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value = "second-moment")]
    pub mode: OracleMode,
    #[command(flatten)]
    #[serde(flatten)]
    pub lattice: LatticeArgs,
    /// Fit the slope of log(value) at x = 0 over `lo:hi`.
    #[arg(long, value_name = "LO:HI")]
    pub fit_window: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LdpToyArgs {
    /// Thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub s: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub t: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 41)]
    pub seed: u64,
    /// Allowed relative error of the slope rate against s²/2.
    #[arg(long, env = "KPZLAB_LDP_REL_TOL", default_value_t = 0.1)]
    pub rel_tol: f64,
    #[arg(long, env = "KPZLAB_K_SIGMA", default_value_t = 3.0)]
    pub k_sigma: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// CSV tables or JSON reports written by other subcommands.
    pub inputs: Vec<PathBuf>,
    /// Bundle JSON output.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Summary table as CSV.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub summary_csv: Option<PathBuf>,
}
