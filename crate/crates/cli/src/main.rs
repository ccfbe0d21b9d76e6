use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use experiments::settings::parse_lambda_range;
use experiments::{run_all, Experiment, Report, Settings};

/// Batch experiments for directional Haar projections, ring operators,
/// mollified layers and Riesz transforms on the discrete torus.
///
/// Exit status: 0 when every acceptance band passes, 1 on any band
/// violation, 2 on usage, config or parameter errors.
#[derive(Parser, Debug)]
#[command(name = "hrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dimension.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Grid level (2^J cells per axis).
    #[arg(long = "J", global = true)]
    level: Option<u32>,
    /// Integrability exponent
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Exponent of the value space.
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Dimension of the value space.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Ring depth range `lo..hi` (inclusive).
    #[arg(long, global = true, value_parser = lambda_range)]
    lambda: Option<(u32, u32)>,
    /// Largest ring depth
    #[arg(long, global = true)]
    lambda_max: Option<u32>,
    /// Largest layer index
    #[arg(long, global = true)]
    l_max: Option<i32>,
    /// Probe seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory [default: $HRL_OUTPUT_DIR or ./hrl-output].
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Caps the worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn lambda_range(s: &str) -> Result<(u32, u32), String> {
    parse_lambda_range(s).map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Haar analysis/synthesis, Parseval and projection identities.
    HaarRoundtrip,
    /// Norm of the ring operator against its depth λ.
    RingDecay,
    /// Spread of the shifted ring operator norms over the shifts m.
    RingEquivalence,
    /// Shift decomposition of the ring operator.
    Tiling,
    /// Exact checks of the shifted-atom combinatorics.
    AtomsVerify,
    /// Growth of the coefficient shift norm in the shift size.
    ShiftNorm,
    /// Norm of the mollified layers against l.
    LayerDecay,
    /// Aggregated negative layer across grid levels.
    NegativeLayer,
    /// Haar coefficients of the mollified layer functions.
    CoeffScan,
    /// Kernel expansion against the dense operator.
    KernelCheck,
    /// Riesz inverse, sum of squares and layer split identities.
    RieszIdentity,
    /// Norm of layer-times-inverse-Riesz against l.
    RieszLayer,
    /// Ratio of the layered inequality's two sides across levels.
    Interpolation,
    /// Every experiment in sequence.
    All,
    /// Runs a subcommand by name, e.g. `run all`.
    Run { name: String },
}

/// `None` means all.
fn target(c: &Command) -> Result<Option<Experiment>, String> {
    let e = match c {
        Command::HaarRoundtrip => Experiment::HaarRoundtrip,
        Command::RingDecay => Experiment::RingDecay,
        Command::RingEquivalence => Experiment::RingEquivalence,
        Command::Tiling => Experiment::Tiling,
        Command::AtomsVerify => Experiment::AtomsVerify,
        Command::ShiftNorm => Experiment::ShiftNorm,
        Command::LayerDecay => Experiment::LayerDecay,
        Command::NegativeLayer => Experiment::NegativeLayer,
        Command::CoeffScan => Experiment::CoeffScan,
        Command::KernelCheck => Experiment::KernelCheck,
        Command::RieszIdentity => Experiment::RieszIdentity,
        Command::RieszLayer => Experiment::RieszLayer,
        Command::Interpolation => Experiment::Interpolation,
        Command::All => return Ok(None),
        Command::Run { name } if name == "all" => return Ok(None),
        Command::Run { name } => return name.parse::<Experiment>().map(Some).map_err(|e| e.to_string()),
    };
    Ok(Some(e))
}

fn settings(f: &Flags) -> Result<Settings, String> {
    let base = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Settings::parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => Settings::default(),
    };
    let flags = Settings {
        n: f.n,
        level: f.level,
        p: f.p,
        q: f.q,
        d: f.d,
        lambda_min: f.lambda.map(|r| r.0),
        lambda_max: f.lambda.map(|r| r.1).or(f.lambda_max),
        l_max: f.l_max,
        seed: f.seed,
        output_dir: f.output_dir.clone(),
        threads: f.threads,
    };
    let s = base.overlay(&flags);
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn announce(r: &Report, dir: &std::path::Path) -> anyhow::Result<()> {
    r.write(dir)?;
    eprintln!("{:<18} {}", r.subcommand, if r.pass { "PASS" } else { "FAIL" });
    for v in &r.violations {
        eprintln!("    {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (target, s) = match target(&cli.command).and_then(|t| Ok((t, settings(&cli.flags)?))) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = s.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let dir = s.output_dir();
    let result = match target {
        Some(e) => e.run(&s).and_then(|r| {
            announce(&r, &dir)?;
            Ok(r.pass)
        }),
        None => {
            let mut write_err = None;
            run_all(&s, |r| {
                if let Err(e) = announce(r, &dir) {
                    write_err.get_or_insert(e);
                }
            })
            .and_then(|reports| {
                if let Some(e) = write_err {
                    return Err(e);
                }
                let summary = reports.last().expect("summary report");
                announce(summary, &dir)?;
                Ok(summary.pass)
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
