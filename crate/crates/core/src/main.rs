use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use love_decay::cli::{self, EXIT_USAGE};
use love_decay::config::RunConfig;

#[derive(Parser)]
#[command(name = "love-decay", version, about = "Love equation with infinite memory: simulation and energy-decay checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the memory kernel (and modulus, when given)
    CheckKernel(Common),
    /// Run a simulation and write its trace and report
    Simulate(Common),
    /// Simulate, then fit and check the decay bound
    VerifyDecay(Common),
    /// Manufactured-solution convergence study
    Mms(Common),
    /// Parameter sweep over kernels, exponents and amplitudes
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Concurrent sweep cells
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Reserved; runs are deterministic
    #[arg(long)]
    seed: Option<u64>,
    /// Configuration override, `dotted.key=value` (value read as JSON when possible)
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (common, run): (&Common, fn(&RunConfig, &Common) -> cli::Outcome) = match &cli.command {
        Command::CheckKernel(c) => (c, |cfg, c| cli::cmd_check_kernel(cfg, &c.out)),
        Command::Simulate(c) => (c, |cfg, c| cli::cmd_simulate(cfg, &c.out)),
        Command::VerifyDecay(c) => (c, |cfg, c| cli::cmd_verify_decay(cfg, &c.out)),
        Command::Mms(c) => (c, |cfg, c| cli::cmd_mms(cfg, &c.out)),
        Command::Sweep(c) => (c, |cfg, c| cli::cmd_sweep(cfg, &c.out, c.jobs)),
    };
    let cfg = match RunConfig::load(&common.config, &common.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("love-decay: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let outcome = run(&cfg, common);
    if let Some(err) = outcome.report.get("error").and_then(|e| e.as_str()) {
        eprintln!("love-decay: {err}");
    }
    ExitCode::from(outcome.code as u8)
}
