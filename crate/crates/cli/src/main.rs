use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chronoface::assignment::{DEFAULT_ASSIGNMENT_CAP, DEFAULT_COVERAGE, DEFAULT_K_MAX};
use chronoface::dating::{DatingConfig, Model};
use chronoface::priors::PriorKind;
use clap::{Args, Parser, Subcommand};

mod annotate_cmd;
mod batch;
mod config;
mod date_cmd;
mod evaluate_cmd;
mod gallery_cmd;
mod synth_cmd;

use config::Config;

/// Capture-year inference for multi-face photographs.
#[derive(Debug, Parser)]
#[command(name = "chronoface", version)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "CHRONO_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a gallery (prototypes and kappa) from raw identity portraits.
    BuildGallery {
        /// Raw identities prefix: PREFIX.jsonl manifest, PREFIX.bin matrix.
        #[arg(long)]
        input: PathBuf,
        /// Output gallery prefix.
        #[arg(long)]
        output: PathBuf,
    },
    /// Date every scene of a JSON-lines file.
    Date(DateArgs),
    /// Match faces to linked identities and summarize the annotation run.
    Annotate {
        #[arg(long)]
        problems: PathBuf,
        /// Gallery prefix.
        #[arg(long)]
        gallery: PathBuf,
        /// Face embedding matrix referenced by `embedding_row`.
        #[arg(long)]
        faces: PathBuf,
        /// Match results (JSON lines); stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Summary JSON; stderr when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score date results against scene truths.
    Evaluate {
        /// Output of `date`; may be repeated.
        #[arg(long, requires = "scenes")]
        results: Vec<PathBuf>,
        /// Scenes carrying truth years.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Previously written records CSV, instead of results and scenes.
        #[arg(long, conflicts_with_all = ["results", "scenes"])]
        records: Option<PathBuf>,
        /// Report JSON; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Flat strata CSV.
        #[arg(long)]
        strata: Option<PathBuf>,
        /// Joined per-image records CSV.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// Sample a synthetic world and write all of its inputs.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// World spec overrides (JSON, or TOML by extension).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Labels drawn for the prior statistics.
        #[arg(long, default_value_t = 10_000)]
        prior_samples: usize,
        /// Random extra identities linked to each annotation problem.
        #[arg(long, default_value_t = 3)]
        extra_links: usize,
    },
}

#[derive(Debug, Args)]
struct DateArgs {
    /// Scenes (JSON lines); `-` for stdin.
    #[arg(long)]
    scenes: PathBuf,
    /// Gallery prefix.
    #[arg(long)]
    gallery: PathBuf,
    /// Results (JSON lines); stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Count statistics for non-uniform priors.
    #[arg(long)]
    prior_stats: Option<PathBuf>,
    #[arg(long, conflicts_with = "closed_set")]
    open_set: bool,
    #[arg(long)]
    closed_set: bool,
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Largest number of assignments enumerated per scene.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Include the full year posterior in each line.
    #[arg(long)]
    emit_posterior: bool,
    /// Include per-scene wall time, which makes output nondeterministic.
    #[arg(long)]
    timing: bool,
}

fn date(config: &Config, a: DateArgs) -> Result<usize> {
    let open_set = if a.open_set {
        true
    } else if a.closed_set {
        false
    } else {
        config.open_set.unwrap_or(false)
    };
    let coverage = a.coverage.or(config.coverage).unwrap_or(DEFAULT_COVERAGE);
    config::check_coverage(coverage)?;
    let lambda = a.lambda.or(config.lambda).unwrap_or(0.0);
    config::check_lambda(lambda)?;
    let kind = a.prior.or(config.prior).unwrap_or(PriorKind::Uniform);
    let stats = a.prior_stats.or_else(|| config.prior_stats.clone());
    let dating = DatingConfig {
        support: config.support()?,
        prior: date_cmd::prior_spec(kind, lambda, stats.as_ref())?,
        open_set,
        coverage,
        k_max: a.k_max.or(config.k_max).unwrap_or(DEFAULT_K_MAX),
        assignment_cap: a
            .cap
            .or(config.assignment_cap)
            .unwrap_or(DEFAULT_ASSIGNMENT_CAP),
    };
    dating.pool_config().validate()?;
    let gallery = gallery_cmd::load_gallery(&a.gallery, config.dim)?;
    let opts = date_cmd::DateOptions {
        scenes: a.scenes,
        output: a.output,
        model: a.model.or(config.model).unwrap_or(Model::Full),
        config: dating,
        workers: workers(a.workers, config)?,
        emit_posterior: a.emit_posterior || config.emit_posterior.unwrap_or(false),
        timing: a.timing,
    };
    date_cmd::run(&gallery, &opts)
}

fn workers(flag: Option<usize>, config: &Config) -> Result<usize> {
    let n = flag
        .or(config.workers)
        .unwrap_or_else(batch::default_workers);
    anyhow::ensure!(n > 0, "workers must be positive");
    Ok(n)
}

/// Runs a command, returning the number of failed records.
fn run(cli: Cli) -> Result<usize> {
    let config = config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::BuildGallery { input, output } => {
            let report = gallery_cmd::build_gallery(&input, &output, config.dim)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(0)
        }
        Command::Date(a) => date(&config, a),
        Command::Annotate {
            problems,
            gallery,
            faces,
            output,
            summary,
            workers: w,
        } => {
            let g = gallery_cmd::load_gallery(&gallery, config.dim)?;
            let opts = annotate_cmd::AnnotateOptions {
                problems,
                faces,
                output,
                workers: workers(w, &config)?,
            };
            let (s, failures) = annotate_cmd::run(&g, &opts)?;
            let text = serde_json::to_string_pretty(&s)? + "\n";
            match summary {
                Some(p) => std::fs::write(p, text)?,
                None => eprint!("{text}"),
            }
            Ok(failures)
        }
        Command::Evaluate {
            results,
            scenes,
            records,
            output,
            strata,
            records_out,
        } => {
            let opts = evaluate_cmd::EvaluateOptions {
                results,
                scenes,
                records,
                output,
                strata,
                records_out,
            };
            Ok(evaluate_cmd::run(&opts)?.1)
        }
        Command::Synth {
            output,
            seed,
            spec,
            prior_samples,
            extra_links,
        } => {
            let overrides = spec
                .as_deref()
                .map(synth_cmd::read_spec_overrides)
                .transpose()?;
            let opts = synth_cmd::SynthOptions {
                spec: config.world_spec(overrides)?,
                seed: seed.or(config.seed).unwrap_or(0),
                out_dir: output,
                prior_samples,
                extra_links,
            };
            synth_cmd::run(&opts)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} record(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
