//! `gem-mix`: config-driven experiments for gradient EM on isotropic
//! Gaussian mixtures. Every output is a pure function of the spec file and
//! the master seed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use gem_mix::experiments::{self, Ctx};
use gem_mix::spec::{self, Kind};
use gem_mix::{suite, AppError};

#[derive(Parser)]
#[command(name = "gem-mix", version, about = "Gradient EM mixture experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment spec file (TOML or JSON).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Master seed; overrides the spec file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the spec file's out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the rayon pool. Results never depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Measure errors against the fixed point of a truth-initialized run on
    /// the same sample instead of the true means.
    #[arg(long, global = true)]
    against_best_fixed_point: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Log-error-per-iteration curves over an SNR grid.
    Convergence,
    /// Final error for starts straddling the midpoint of two centers.
    RegionProbe,
    /// Closed-form certificates plus a companion population run.
    Bounds,
    /// Empirical gradient-stability certificate.
    VerifyGs,
    /// Sup gradient-deviation scaling in n and d.
    DeviationScaling,
    /// Empirical Rademacher complexity scaling in n and d.
    RademacherScaling,
    /// Projected stochastic gradient EM decay.
    Stochastic,
    /// Run every experiment in a suite file and write a manifest.
    Suite,
}

impl Command {
    fn kind(&self) -> Option<Kind> {
        match self {
            Command::Convergence => Some(Kind::Convergence),
            Command::RegionProbe => Some(Kind::RegionProbe),
            Command::Bounds => Some(Kind::Bounds),
            Command::VerifyGs => Some(Kind::VerifyGs),
            Command::DeviationScaling => Some(Kind::DeviationScaling),
            Command::RademacherScaling => Some(Kind::RademacherScaling),
            Command::Stochastic => Some(Kind::Stochastic),
            Command::Suite => None,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ AppError::Spec(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e @ AppError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        eprintln!("note: built without the parallel feature; --threads is ignored");
    }

    let spec_path = cli.spec.as_deref().ok_or_else(|| {
        let _ = Cli::command();
        AppError::Spec("--spec <FILE> is required".into())
    })?;

    if let Command::Suite = cli.command {
        return suite::run_suite(spec_path, cli.seed, cli.out, cli.against_best_fixed_point);
    }

    let expected = cli.command.kind().expect("non-suite command");
    let spec = spec::load_experiment(spec_path)?;
    if spec.kind != expected {
        return Err(AppError::Spec(format!(
            "spec file declares kind {:?} but the {} subcommand was invoked",
            spec.kind.as_str(),
            expected.as_str()
        )));
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(spec.seed),
        out: cli
            .out
            .clone()
            .or_else(|| spec.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        against_best_fixed_point: cli.against_best_fixed_point,
    };
    let label = spec.label(0);
    let artifacts = experiments::run_experiment(&spec, &label, &ctx)?;
    for a in artifacts {
        println!("wrote {}", a.display());
    }
    Ok(())
}
