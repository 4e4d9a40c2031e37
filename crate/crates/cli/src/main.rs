mod commands;
mod config;
mod csv_out;
mod failure;
mod plot;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use commands::{DetectOptions, FitOptions, Target};
use config::RunConfig;
use failure::{Failure, Outcome};

#[derive(Parser)]
#[command(
    name = "ppg",
    about = "Envelope decomposition, state-space pulse modelling and premature-beat detection for PPG signals",
    disable_version_flag = true
)]
struct Cli {
    /// Flat `key = value` config file; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override any config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Random seed for anything stochastic (the generator).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Process this many input files at once.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Print the version and the table of model defaults.
    #[arg(long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Inputs {
    /// Signal CSV files (`time,value` or `value` with `# fs=<Hz>`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output directory; one subdirectory per input when there are several.
    #[arg(long, short)]
    out: PathBuf,

    /// Sampling rate for single-column input (key io.fs).
    #[arg(long)]
    fs: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Extrema, lower envelope and normalised pulses.
    Decompose {
        #[command(flatten)]
        io: Inputs,
    },
    /// Register pulses and run the state-space filter.
    Fit {
        #[command(flatten)]
        io: Inputs,
        /// Also write registered.csv and warps.csv.
        #[arg(long)]
        dump_registration: bool,
        /// Write SVG diagnostics.
        #[arg(long)]
        plots: bool,
    },
    /// Threshold detection of premature beats, optionally classified.
    Detect {
        #[command(flatten)]
        io: Inputs,
        #[arg(long)]
        lambda: Option<usize>,
        #[arg(long)]
        rho: Option<usize>,
        #[arg(long)]
        pi: Option<f64>,
        /// innovation or standardized.
        #[arg(long)]
        scale: Option<String>,
        /// Label detections with an SVM trained on --train pairs.
        #[arg(long, requires = "train")]
        classify: bool,
        /// Training pair `SIGNAL.csv,ANNOTATIONS.csv` (repeatable).
        #[arg(long, value_name = "SIGNAL,ANNOTATIONS")]
        train: Vec<String>,
        /// Subset of Y,eps,X.
        #[arg(long)]
        features: Option<String>,
        /// linear, polynomial or sigmoid.
        #[arg(long)]
        kernel: Option<String>,
        /// current, next or paired-next.
        #[arg(long)]
        pairing: Option<String>,
        #[arg(long)]
        plots: bool,
    },
    /// Inter-beat intervals from the detected minima.
    Ibis {
        #[command(flatten)]
        io: Inputs,
        /// Reference beat annotations to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Generate a synthetic signal with annotations and true minima.
    Synth {
        /// Output prefix; writes <prefix>_signal.csv, _annotations.csv, _minima.csv.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score detected beat labels against a reference annotation.
    Eval {
        #[arg(long)]
        detected: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
}

fn build_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("cli: --set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> Outcome<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn targets(io: &Inputs) -> Outcome<Vec<Target>> {
    if io.inputs.len() == 1 {
        return Ok(vec![Target {
            input: io.inputs[0].clone(),
            dir: io.out.clone(),
        }]);
    }
    let mut seen = HashSet::new();
    io.inputs
        .iter()
        .map(|input| {
            let stem = input
                .file_stem()
                .ok_or_else(|| Failure::input(format!("cli: input `{}` has no file name", input.display())))?;
            if !seen.insert(stem.to_owned()) {
                return Err(Failure::input(format!(
                    "cli: two inputs share the name `{}`; their outputs would collide",
                    stem.to_string_lossy()
                )));
            }
            Ok(Target {
                input: input.clone(),
                dir: io.out.join(stem),
            })
        })
        .collect()
}

/// Runs `job` on every target with up to `jobs` workers and reports in
/// input order. The first failure decides the exit code.
fn run_all(targets: &[Target], jobs: usize, job: impl Fn(&Target) -> Outcome<String> + Sync) -> Outcome<()> {
    let results: Vec<Mutex<Option<Outcome<String>>>> = targets.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= targets.len() {
            break;
        }
        let r = commands::ensure_dir(&targets[i].dir).and_then(|()| job(&targets[i]));
        *results[i].lock().expect("result slot poisoned") = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.clamp(1, targets.len().max(1)) {
            s.spawn(work);
        }
        work();
    });
    let single = targets.len() == 1;
    let mut failed = 0;
    let mut first_failure = None;
    for (t, slot) in targets.iter().zip(results) {
        let r = slot
            .into_inner()
            .expect("result slot poisoned")
            .expect("every target is processed");
        let name = t.input.display();
        match r {
            Ok(summary) if single => println!("{summary}"),
            Ok(summary) => println!("{name}: {summary}"),
            Err(e) => {
                if !single {
                    eprintln!("error: {name}: {e}");
                }
                failed += 1;
                first_failure.get_or_insert(e);
            }
        }
    }
    match first_failure {
        None => Ok(()),
        Some(e) if single => Err(e),
        Some(e) => {
            let msg = format!("cli: {failed} of {} inputs failed", targets.len());
            Err(match e {
                Failure::Input(_) => Failure::Input(msg),
                Failure::Numerical(_) => Failure::Numerical(msg),
            })
        }
    }
}

fn parse_train(specs: &[String]) -> Outcome<Vec<(PathBuf, PathBuf)>> {
    specs
        .iter()
        .map(|s| {
            let (sig, ann) = s
                .rsplit_once(',')
                .ok_or_else(|| Failure::input(format!("cli: --train expects SIGNAL,ANNOTATIONS, got `{s}`")))?;
            Ok((PathBuf::from(sig), PathBuf::from(ann)))
        })
        .collect()
}

fn run(cli: Cli) -> Outcome<()> {
    let mut cfg = build_config(&cli)?;
    if cli.version {
        println!(
            "ppg {}\n\nModel defaults:\n{}",
            env!("CARGO_PKG_VERSION"),
            RunConfig::default().table()
        );
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::input("cli: no subcommand given (see --help)"));
    };
    let jobs = cli.jobs.max(1);
    if let Some(seed) = cli.seed {
        cfg.set("synth.seed", &seed.to_string())?;
    }
    match command {
        Command::Decompose { io } => {
            set_opt(&mut cfg, "io.fs", &io.fs)?;
            run_all(&targets(&io)?, jobs, |t| commands::decompose(&cfg, t))
        }
        Command::Fit {
            io,
            dump_registration,
            plots,
        } => {
            set_opt(&mut cfg, "io.fs", &io.fs)?;
            let opts = FitOptions {
                dump_registration,
                plots,
            };
            run_all(&targets(&io)?, jobs, |t| commands::fit(&cfg, t, &opts))
        }
        Command::Detect {
            io,
            lambda,
            rho,
            pi,
            scale,
            classify,
            train,
            features,
            kernel,
            pairing,
            plots,
        } => {
            set_opt(&mut cfg, "io.fs", &io.fs)?;
            set_opt(&mut cfg, "detect.lambda", &lambda)?;
            set_opt(&mut cfg, "detect.rho", &rho)?;
            set_opt(&mut cfg, "detect.pi", &pi)?;
            set_opt(&mut cfg, "detect.scale", &scale)?;
            set_opt(&mut cfg, "classify.features", &features)?;
            set_opt(&mut cfg, "classify.kernel", &kernel)?;
            set_opt(&mut cfg, "classify.pairing", &pairing)?;
            cfg.detector()?;
            let classifier = if classify {
                Some(commands::train_classifier(&cfg, &parse_train(&train)?)?)
            } else {
                None
            };
            let opts = DetectOptions { classifier, plots };
            run_all(&targets(&io)?, jobs, |t| commands::detect_cmd(&cfg, t, &opts))
        }
        Command::Ibis { io, reference, tol } => {
            set_opt(&mut cfg, "io.fs", &io.fs)?;
            set_opt(&mut cfg, "match.tol", &tol)?;
            let targets = targets(&io)?;
            if reference.is_some() && targets.len() > 1 {
                return Err(Failure::input("cli: --reference applies to a single input"));
            }
            run_all(&targets, jobs, |t| commands::ibis(&cfg, t, reference.as_deref()))
        }
        Command::Synth { out } => {
            let summary = commands::synth(&cfg, cli.seed, &out)?;
            println!("{summary}");
            Ok(())
        }
        Command::Eval {
            detected,
            reference,
            out,
            tol,
        } => {
            set_opt(&mut cfg, "match.tol", &tol)?;
            println!("{}", commands::eval(&cfg, &detected, &reference, Path::new(&out))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
