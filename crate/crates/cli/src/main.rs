use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use platoon_cli::config::Profile;
use platoon_cli::{cmd_optimize, cmd_oracle, cmd_simulate, cmd_sweep, CliError, Common};

/// Saturated DCF chain simulator and contention window optimizer.
#[derive(Parser)]
#[command(name = "platoon", version)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config; unset keys take the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "full")]
    profile: Profile,

    /// Master seed, overriding the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, env = "PLATOON_OUT_DIR")]
    out: PathBuf,

    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            config: a.config,
            profile: a.profile,
            seed: a.seed,
            out: a.out,
            force: a.force,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one window vector and write per-node metrics.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated minimum contention windows, one per node.
        #[arg(long)]
        cw: String,
    },
    /// Two-step optimization against the standard window.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Optimize several chain lengths (even n in 4..=24).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// `4,6,8`, `4..24` (step 2) or `4..24:4`.
        #[arg(long, default_value = "4..24")]
        n_list: String,
    },
    /// Exhaustive grid over uniform candidate windows.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "8,16,32,64")]
        candidates: String,
        /// Objective target; defaults to the Step A goal.
        #[arg(long)]
        target_us: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, cw } => cmd_simulate(&common.into(), &cw),
        Command::Optimize { common } => cmd_optimize(&common.into()).map(|r| {
            println!(
                "optimal cw {:?}: mean one-hop delay {:.3} ms (standard {:.3} ms)",
                r.optimal_cw.0,
                r.optimized_report.avg_delay_us / 1e3,
                r.baseline_report.avg_delay_us / 1e3
            );
        }),
        Command::Sweep { common, n_list } => cmd_sweep(&common.into(), &n_list).map(|_| ()),
        Command::Oracle {
            common,
            candidates,
            target_us,
        } => cmd_oracle(&common.into(), &candidates, target_us),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
