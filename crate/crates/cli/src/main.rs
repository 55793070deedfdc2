mod args;
mod commands;
mod error;
mod output;
mod scripts;

use args::{Common, QuatArg, Span};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

/// Relative equilibria, stability and handling of magnetic swimmers in a
/// rotating field.
#[derive(Debug, Parser, Serialize)]
#[command(name = "magswim", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// List the bundled swimmers.
    List,
    /// Decomposition coefficients, chirality and existence ranges.
    #[command(allow_negative_numbers = true)]
    Info {
        #[command(flatten)]
        common: Common,
    },
    /// Chart grid over (θ, φ), fold and Hopf curves, self-intersections.
    #[command(allow_negative_numbers = true)]
    Atlas {
        #[command(flatten)]
        common: Common,
        /// θ grid points over [−π, π].
        #[arg(long, default_value_t = 361)]
        theta: usize,
        /// φ grid points over [0, π].
        #[arg(long, default_value_t = 181)]
        phi: usize,
        /// Resolution of the bifurcation-curve tracer.
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Mark the equilibria at this drive, as `MA,COSPSI`.
        #[arg(long, value_name = "MA,COSPSI")]
        mark: Option<String>,
    },
    /// Regime diagram: equilibrium counts over (Ma, cos ψ).
    #[command(allow_negative_numbers = true)]
    Regimes {
        #[command(flatten)]
        common: Common,
        /// Ma cells as LO:HI:N; default 0 to 1.1·max Ma in 200 cells.
        #[arg(long)]
        ma: Option<Span>,
        #[arg(long, default_value = "-1:1:200", allow_hyphen_values = true)]
        cospsi: Span,
    },
    /// Integrate one orientation (and lab position) at a fixed drive.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ma: f64,
        #[arg(long)]
        cospsi: f64,
        /// Initial orientation `w,x,y,z`; random from --seed when absent.
        #[arg(long, value_name = "W,X,Y,Z")]
        q0: Option<QuatArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        /// Sampling interval of the trajectory CSV.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Sample random orientations and classify where each one settles.
    #[command(allow_negative_numbers = true)]
    Basins {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ma: f64,
        #[arg(long)]
        cospsi: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Optimal drive, optimal magnetisation and v_ax(Ma) curves.
    #[command(allow_negative_numbers = true)]
    Optimize {
        #[command(flatten)]
        common: Common,
        /// cos ψ levels for the v_ax(Ma) curves.
        #[arg(long, default_value = "-0.3:0.3:7", allow_hyphen_values = true)]
        cospsi: Span,
        /// Points per level-set curve.
        #[arg(long, default_value_t = 400)]
        points: usize,
        /// Also count unstable equilibria.
        #[arg(long)]
        include_unstable: bool,
    },
    /// Constant-period branches of periodic orbits from Hopf points.
    #[command(allow_negative_numbers = true)]
    Periodic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Seeds per Hopf curve, spread evenly along it.
        #[arg(long, default_value_t = 1)]
        per_curve: usize,
        #[arg(long, default_value_t = 0.1)]
        ds_max: f64,
        #[arg(long, default_value_t = 2000)]
        max_steps: usize,
        /// Also write the sampled orbits.
        #[arg(long)]
        dump_orbits: bool,
    },
    /// Quasi-static drive schedules that select a stable branch.
    #[command(allow_negative_numbers = true)]
    Handling {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        strategy: Strategy,
        /// Target Ma.
        #[arg(long)]
        ma: Option<f64>,
        /// Target cos ψ.
        #[arg(long)]
        cospsi: Option<f64>,
        /// Turning point of the fold sweep.
        #[arg(long)]
        c_turn: Option<f64>,
        /// cos ψ used at low Ma (low-ma and loop).
        #[arg(long)]
        side: Option<f64>,
        /// Low Ma used by low-ma, loop and seven-step; default 0.1·σ2.
        #[arg(long)]
        ma_low: Option<f64>,
        /// Starting branch for fold-sweep and loop, by decreasing |v_ax|.
        #[arg(long, default_value_t = 0)]
        branch: usize,
        /// Schedule JSON for `--strategy schedule`.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, value_name = "W,X,Y,Z")]
        q0: Option<QuatArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ramp rate bound.
        #[arg(long, default_value_t = 1e-5)]
        rate: f64,
        /// Minimum hold after each ramp.
        #[arg(long, default_value_t = 3000.0)]
        settle: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FoldSweep,
    LowMa,
    Loop,
    SevenStep,
    Schedule,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magswim: {e}");
            e.code()
        }
    }
}
