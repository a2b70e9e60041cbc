use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motif_forge_core::pipeline::{
    config_hash, default_output_dir, load_config, report, run_discover, run_evaluate, run_preprocess, run_simulate,
    ContextSource, DiscoverConfig, DiscoverMethod, EvaluateConfig, EvaluateOutput, PreprocessConfig, SimulateConfig,
};
use motif_forge_core::signal::InputFormat;
use motif_forge_core::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "motif-forge", version, about = "Contextual motif discovery pipelines")]
struct Cli {
    /// Base seed; overrides the seed of the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// TOML or JSON configuration for the subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output directory (default: under $MOTIF_FORGE_CACHE).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load raw sensor data and cut it into fully observed days.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        max_gap_minutes: Option<i64>,
        /// csv, json or auto.
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Discover motifs: derived, mmm, cmmm, two-stage-expert, two-stage-hmm, two-stage-topic.
    Discover {
        method: String,
        /// Directory written by `preprocess`.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        motifs: Option<usize>,
        #[arg(long)]
        lm: Option<usize>,
        #[arg(long)]
        lc: Option<usize>,
        #[arg(long)]
        contexts: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        /// For `derived`: discover per context (expert or hmm).
        #[arg(long)]
        derived_context: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Draw a labeled dataset from a random ground-truth CMMM.
    Simulate {
        #[arg(long)]
        signals: Option<usize>,
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run a simulation sweep or a real-data experiment (requires --config).
    Evaluate {
        #[command(flatten)]
        out: OutArg,
    },
    /// Summarize an output directory.
    Report { dir: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => EXIT_USAGE,
        Error::MissingArtifact(_) => EXIT_MISSING,
        _ => EXIT_RUNTIME,
    }
}

fn base_config<T: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T, Error> {
    match path {
        Some(p) => load_config(p),
        None => Ok(T::default()),
    }
}

fn out_dir(out: &OutArg, command: &str, cfg: &impl serde::Serialize) -> Result<PathBuf, Error> {
    match &out.out {
        Some(p) => Ok(p.clone()),
        None => Ok(default_output_dir(command, &config_hash(cfg)?)),
    }
}

fn parse_format(s: &str) -> Result<InputFormat, Error> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(InputFormat::Csv),
        "json" => Ok(InputFormat::Json),
        "auto" => Ok(InputFormat::Auto),
        _ => Err(Error::Config(format!("unknown input format `{s}`"))),
    }
}

fn parse_context_source(s: &str) -> Result<ContextSource, Error> {
    match s {
        "expert" => Ok(ContextSource::Expert),
        "hmm" => Ok(ContextSource::Hmm),
        _ => Err(Error::Config(format!("unknown context source `{s}` (expected expert or hmm)"))),
    }
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Preprocess {
            input,
            max_gap_minutes,
            format,
            out,
        } => {
            let mut cfg: PreprocessConfig = base_config(&cli.config)?;
            set(&mut cfg.input, input);
            set(&mut cfg.max_gap_minutes, max_gap_minutes);
            if let Some(f) = format {
                cfg.load.format = parse_format(&f)?;
            }
            if cfg.input.as_os_str().is_empty() {
                return Err(Error::Config("preprocess needs --input".into()));
            }
            let dir = out_dir(&out, "preprocess", &cfg)?;
            let (kept, excluded) = run_preprocess(&cfg, &dir)?;
            Ok(format!("{}: {kept} days kept, {excluded} excluded", dir.display()))
        }
        Command::Discover {
            method,
            segments,
            motifs,
            lm,
            lc,
            contexts,
            samples,
            burn_in,
            chains,
            derived_context,
            out,
        } => {
            let mut cfg: DiscoverConfig = base_config(&cli.config)?;
            cfg.method = DiscoverMethod::parse(&method)?;
            set(&mut cfg.segments, segments);
            set(&mut cfg.n_motifs, motifs);
            set(&mut cfg.motif_len, lm);
            set(&mut cfg.context_len, lc);
            set(&mut cfg.n_contexts, contexts);
            set(&mut cfg.n_samples, samples);
            set(&mut cfg.burn_in, burn_in);
            set(&mut cfg.n_chains, chains);
            set(&mut cfg.seed, cli.seed);
            if let Some(s) = derived_context {
                cfg.derived_context = Some(parse_context_source(&s)?);
            }
            if cfg.segments.as_os_str().is_empty() {
                return Err(Error::Config("discover needs --segments".into()));
            }
            let dir = out_dir(&out, "discover", &cfg)?;
            let s = run_discover(&cfg, &dir)?;
            Ok(format!(
                "{}: {} motif ids over {} segments",
                dir.display(),
                s.n_motifs,
                s.segment_ids.len()
            ))
        }
        Command::Simulate {
            signals,
            windows,
            beta,
            out,
        } => {
            let mut cfg: SimulateConfig = base_config(&cli.config)?;
            set(&mut cfg.n_signals, signals);
            set(&mut cfg.windows_per_signal, windows);
            set(&mut cfg.beta, beta);
            set(&mut cfg.seed, cli.seed);
            let dir = out_dir(&out, "simulate", &cfg)?;
            let sim = run_simulate(&cfg, &dir)?;
            let pos = sim.outcomes.iter().filter(|&&y| y).count();
            Ok(format!("{}: {} signals, {pos} positive", dir.display(), sim.signals.len()))
        }
        Command::Evaluate { out } => {
            if cli.config.is_none() {
                return Err(Error::Config("evaluate needs --config".into()));
            }
            let mut cfg: EvaluateConfig = base_config(&cli.config)?;
            if let Some(seed) = cli.seed {
                if let Some(s) = cfg.simulation.as_mut() {
                    s.seed = seed;
                    s.experiment.seed = seed;
                }
                if let Some(r) = cfg.real.as_mut() {
                    r.experiment.seed = seed;
                }
            }
            let dir = out_dir(&out, "evaluate", &cfg)?;
            let n = match run_evaluate(&cfg, &dir)? {
                EvaluateOutput::Simulation(r) => r.rows.len(),
                EvaluateOutput::Real(t) => t.entries.len(),
            };
            Ok(format!("{}: {n} result rows", dir.display()))
        }
        Command::Report { dir } => report(Path::new(&dir)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be >= 1");
        return ExitCode::from(EXIT_USAGE);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
