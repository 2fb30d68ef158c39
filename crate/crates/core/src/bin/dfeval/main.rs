//! `dfeval`: batch evaluation of direction-finding antennas.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "dfeval",
    version,
    about = "Statistical evaluation of direction-finding antennas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo RMSE of MUSIC over a DoA grid.
    Eval(EvalArgs),
    /// Enumerate admissible characteristic-mode sets and rank them by RMSE.
    RankModes(RankArgs),
    /// Post-process a recorded or synthetic track.
    Replay(ReplayArgs),
    /// Sample analytic port patterns onto a lattice and write a pattern file.
    GenPattern(GenPatternArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads [default: $DFEVAL_WORKERS, else all cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// True-DoA grid: `hemisphere:<n>` or `equiangular:<step>` [default: hemisphere:341].
    #[arg(long)]
    pub grid: Option<String>,
    /// Candidate grid for the spectrum search [default: the true grid].
    #[arg(long)]
    pub candidate_grid: Option<String>,
    /// SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// `per-port` (default) or `total`.
    #[arg(long)]
    pub snr_reference: Option<String>,
    /// Trials per DoA [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Histogram bin width in degrees [default: 5].
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sim: SimArgs,
    /// `fourier:<P>`, `cupola-analytic`, `file:<pattern.csv>`, or analytic
    /// patterns joined with `+`.
    #[arg(long)]
    pub ports: Option<String>,
    /// Also write every trial to eval_trials.csv.
    #[arg(long)]
    pub keep_trials: bool,
    /// Double the trial count until the error histogram is stable.
    #[arg(long)]
    pub adaptive_stop: bool,
    /// Histogram stability tolerance for --adaptive-stop [default: 0.02].
    #[arg(long)]
    pub adaptive_tol: Option<f64>,
    /// Trial cap for --adaptive-stop [default: 8 × trials].
    #[arg(long)]
    pub max_trials: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Structure JSON file; repeat to rank several structures together.
    #[arg(long = "structure", required = false)]
    pub structures: Vec<PathBuf>,
    /// Eigenvalue magnitude bound [default: 3].
    #[arg(long)]
    pub max_eigenvalue: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub common: Common,
    /// Track CSV.
    #[arg(long)]
    pub track: Option<PathBuf>,
    /// Port patterns for steering-vector tracks.
    #[arg(long)]
    pub ports: Option<String>,
    /// Candidate grid [default: equiangular:5].
    #[arg(long)]
    pub candidate_grid: Option<String>,
    /// Azimuth outlier threshold in degrees [default: 90].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Elevation bin width in degrees [default: 10].
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct GenPatternArgs {
    /// Port set to sample (same forms as --ports, except file:).
    pub ports: Option<String>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lattice step in degrees [default: 5].
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest theta in degrees [default: 180].
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// Output pattern file [default: pattern.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::RankModes(a) => commands::rank_modes(a),
        Command::Replay(a) => commands::replay(a),
        Command::GenPattern(a) => commands::gen_pattern(a),
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
        Err(_) => ExitCode::from(3),
    }
}
