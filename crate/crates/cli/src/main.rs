use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coded_mv::coding::Scheme;
use coded_mv_cli::config::MatrixSpec;
use coded_mv_cli::{
    cmd_fl_demo, cmd_plan, cmd_simulate, cmd_verify, CliError, ExperimentConfig, RosterSpec,
    VerifyMode,
};

#[derive(Parser)]
#[command(
    name = "coded-mv",
    version,
    about = "Straggler-resilient coded matrix-vector experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Divides synthetic row counts.
    #[arg(long, global = true)]
    scale: Option<usize>,
    /// Restrict to these schemes (repeatable).
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Vec<Scheme>,
    /// Roster shorthand: active multipliers, '|', passive multipliers.
    #[arg(long, global = true, conflicts_with_all = ["k_a", "s"])]
    roster: Option<String>,
    /// Homogeneous roster: number of active clients.
    #[arg(long, global = true, requires = "s")]
    k_a: Option<usize>,
    /// Homogeneous roster: number of passive clients.
    #[arg(long, global = true, requires = "k_a")]
    s: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build coding plans and allocation tables.
    Plan,
    /// Certify a plan's straggler resilience.
    Verify {
        plan: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
        mode: Mode,
        /// Subsets drawn in sampled mode.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Simulate rounds, communication, privacy and sparse products.
    Simulate {
        #[arg(long)]
        trials: Option<usize>,
        /// Exit with code 4 if any round cannot be decoded.
        #[arg(long)]
        require_success: bool,
    },
    /// Gradient descent with coded products.
    FlDemo {
        /// Fail unless the coded run matches uncoded descent.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        stepsize: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Sampled,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn load_config(common: &Common, command: &Command) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(k) = common.scale {
        cfg.scale = k;
    }
    if !common.scheme.is_empty() {
        cfg.schemes = common.scheme.clone();
    }
    let roster = match (&common.roster, common.k_a, common.s) {
        (Some(r), _, _) => Some(RosterSpec::parse_shorthand(r)?),
        (None, Some(k_a), Some(s)) => Some(RosterSpec::Homogeneous { k_a, s }),
        _ => None,
    };
    match command {
        Command::FlDemo {
            steps, stepsize, ..
        } => {
            if let Some(r) = roster {
                cfg.fl.roster = r;
            }
            if let Some(n) = steps {
                cfg.fl.steps = *n;
            }
            if stepsize.is_some() {
                cfg.fl.stepsize = *stepsize;
            }
        }
        Command::Simulate {
            trials,
            require_success,
        } => {
            if let Some(r) = roster {
                cfg.roster = r;
            }
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            cfg.require_success |= require_success;
        }
        _ => {
            if let Some(r) = roster {
                cfg.roster = r;
            }
        }
    }
    if let (MatrixSpec::File { path }, Some(dir)) = (
        &mut cfg.matrix,
        common.config.as_ref().and_then(|p| p.parent()),
    ) {
        if path.is_relative() {
            *path = dir.join(&*path);
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Verify {
            plan,
            mode,
            samples,
        } => {
            let mode = match mode {
                Mode::Exhaustive => VerifyMode::Exhaustive,
                Mode::Sampled => VerifyMode::Sampled { samples: *samples },
            };
            let out = cli
                .common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            let (report, _) = cmd_verify(plan, mode, cli.common.seed.unwrap_or(0), &out)?;
            let r = &report.resilience;
            println!(
                "{}/{} subsets pass",
                r.subsets_checked - r.failures.len(),
                r.subsets_checked
            );
            if let Some(p) = &report.patterns {
                println!("patterns: {}", p.summary);
            }
        }
        Command::Plan => {
            let cfg = load_config(&cli.common, &cli.command)?;
            let m = cmd_plan(&cfg)?;
            for f in m.outputs.iter().filter(|f| f.starts_with("allocation_")) {
                println!("{}", std::fs::read_to_string(cfg.out_dir.join(f))?);
            }
        }
        Command::Simulate { .. } => {
            let cfg = load_config(&cli.common, &cli.command)?;
            let o = cmd_simulate(&cfg)?;
            println!(
                "wrote {} files to {}",
                o.manifest.outputs.len() + 1,
                cfg.out_dir.display()
            );
            if o.failed_rounds > 0 {
                println!("{} round(s) could not be decoded", o.failed_rounds);
            }
        }
        Command::FlDemo { check, .. } => {
            let cfg = load_config(&cli.common, &cli.command)?;
            let (s, _) = cmd_fl_demo(&cfg, *check)?;
            println!(
                "loss {:e} -> {:e} in {} steps; max deviation from uncoded descent {:e}",
                s.initial_loss, s.final_loss, s.steps, s.max_deviation
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
