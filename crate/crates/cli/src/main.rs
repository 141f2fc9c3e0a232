//! `holdback` command-line driver.

mod config;
mod experiments;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Kind, Settings};

#[derive(Parser)]
#[command(
    name = "holdback",
    version,
    about = "Exclusion-with-holdback ring experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory (or several replicates): flux, clusters, distance to equilibrium.
    Run(Flags),
    /// Fundamental diagram over a density grid.
    Sweep(Flags),
    /// Survival of a cluster created by one relocation.
    Survival(Flags),
    /// Zero-range flux curve from the fugacity equation.
    #[command(name = "zr-curve")]
    ZrCurve(Flags),
    /// Fluid-limit trajectory of a single cluster.
    Fluid(Flags),
    /// Occupancy and product series after a run.
    Snapshot(Flags),
}

/// Flags override the config file; every flag has a config key of the same
/// name with `-` replaced by `_`.
#[derive(Args, Default)]
struct Flags {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    pi: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Explicit per-slot perturbation probability, replacing lambda / n.
    #[arg(long)]
    perturb_prob: Option<String>,
    /// on | off.
    #[arg(long)]
    allow_return: Option<String>,
    /// tasep_h | zero_range | slow_to_start | csma.
    #[arg(long)]
    variant: Option<String>,
    /// none | A | I.
    #[arg(long)]
    policy: Option<String>,
    /// uniform_random | single_cluster | equally_spaced | random_ideal | mes.
    #[arg(long)]
    init: Option<String>,
    /// Total horizon, burn-in included.
    #[arg(long)]
    slots: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    sample_every: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Comma list or start:stop:step.
    #[arg(long)]
    grid: Option<String>,
    /// quarters (0.25, 0.5, 0.75) | spread (0.1, 0.5, 0.9).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    horizon_factor: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// on | off: fluid output as density breakpoints.
    #[arg(long)]
    profile: Option<String>,
    /// on | off.
    #[arg(long)]
    include_perturb_flux: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<String>,
    /// Output path; stdout when absent or `-`.
    #[arg(long)]
    out: Option<String>,
    /// csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Print the resolved configuration and exit without running.
    #[arg(long)]
    print_config: bool,
}

impl Flags {
    fn settings(&self) -> Result<Settings, config::ConfigError> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let pairs = [
            ("n", &self.n),
            ("rho", &self.rho),
            ("p", &self.p),
            ("pi", &self.pi),
            ("lambda", &self.lambda),
            ("perturb_prob", &self.perturb_prob),
            ("allow_return", &self.allow_return),
            ("variant", &self.variant),
            ("policy", &self.policy),
            ("init", &self.init),
            ("slots", &self.slots),
            ("burn_in", &self.burn_in),
            ("sample_every", &self.sample_every),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("grid", &self.grid),
            ("preset", &self.preset),
            ("horizon_factor", &self.horizon_factor),
            ("t_end", &self.t_end),
            ("dt", &self.dt),
            ("profile", &self.profile),
            ("include_perturb_flux", &self.include_perturb_flux),
            ("threads", &self.threads),
            ("out", &self.out),
            ("format", &self.format),
        ];
        let mut flags = Settings::default();
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, v.clone())?;
            }
        }
        s.merge(&flags);
        Ok(s)
    }
}

fn write_output(cfg: &ExperimentConfig, out: &experiments::Output) -> io::Result<()> {
    match &cfg.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            out.table.write(cfg, &out.overrides, &mut w)?;
            w.flush()
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            out.table.write(cfg, &out.overrides, &mut w)?;
            w.flush()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match &cli.command {
        Command::Run(f) => (Kind::Run, f),
        Command::Sweep(f) => (Kind::Sweep, f),
        Command::Survival(f) => (Kind::Survival, f),
        Command::ZrCurve(f) => (Kind::ZrCurve, f),
        Command::Fluid(f) => (Kind::Fluid, f),
        Command::Snapshot(f) => (Kind::Snapshot, f),
    };
    let cfg = match flags
        .settings()
        .and_then(|s| ExperimentConfig::resolve(kind, &s))
    {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("holdback: config error: {e}");
            return ExitCode::from(2);
        }
    };
    if flags.print_config {
        print!("{}", cfg.to_config_text());
        return ExitCode::SUCCESS;
    }
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
        {
            eprintln!("holdback: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let out = match experiments::execute(&cfg) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("holdback: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_output(&cfg, &out) {
        eprintln!("holdback: cannot write output: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
