use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use storyline::candidates::filter_candidates;
use storyline::corpus::{parse_corpus, Corpus, CorpusFormat};
use storyline::evaluation::parse_grid;
use storyline::objective::{ObjectiveContext, SegmentationConfig};
use storyline::optimizer::{extract_story, fit_story, OptimizerConfig, Story, StoryResult};
use storyline::pipeline::{
    build_chains, dispersion_csv, dispersion_table, predict_from_story, read_json,
    read_topics_file, repeatability_sweep, run_pipeline, significance_sweep, sweep_csv, write_json,
    write_topics_file, CandidateSettings, CandidatesArtifact, MethodChains, RunConfig,
};
use storyline::synth::{write_synthetic_corpus, SynthSpec};
use storyline::topics::{fit_reference_lda, LdaConfig};
use storyline::{Error, Result};

#[derive(Parser)]
#[command(
    name = "storyline",
    version,
    about = "Mine how a news story evolved from a document corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a JSONL corpus and print a summary.
    Ingest(IngestArgs),
    /// Fit topic distributions with the built-in LDA sampler.
    Topics(TopicsArgs),
    /// Select candidate documents for a set of seeds.
    Candidates(CandidatesArgs),
    /// Fit turning points and document weights, then extract the story.
    Fit(FitArgs),
    /// Evaluation sweeps written as CSV.
    Evaluate {
        #[command(subcommand)]
        what: EvaluateCommand,
    },
    /// Predict future entity weights from a story.
    Predict(PredictArgs),
    /// Generate a synthetic corpus with planted event boundaries.
    Synth(SynthArgs),
    /// Run the whole pipeline from a JSON config.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write the parsed corpus back out, sorted by date.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    lda_k: usize,
    #[arg(long, default_value_t = 200)]
    lda_iters: usize,
    #[arg(long, default_value_t = 0)]
    lda_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CandidatesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    seed_ids: Vec<String>,
    /// KL threshold; omit to skip the topical filter.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "lookback_days")]
    t_min: Option<NaiveDate>,
    #[arg(long)]
    lookback_days: Option<u64>,
    #[arg(long, default_value_t = 100.0)]
    date_max: f64,
    /// JSON object of document id to topic distribution.
    #[arg(long)]
    topics_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4.0)]
    sigma_hat2: f64,
    #[arg(long, default_value_t = 5.0)]
    overlap_sigma: f64,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Story JSON.
    #[arg(long)]
    out: PathBuf,
    /// Every restart's solution, for repeatability analysis.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Each factor of the objective at the best solution.
    #[arg(long)]
    dump_terms: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// Mean dispersion per method over a threshold grid.
    Dispersion(DispersionArgs),
    /// Monte-Carlo p-value of the turning points per tolerance.
    Significance(SignificanceArgs),
    /// Bucket count of restart solutions per distance threshold.
    Repeatability(RepeatabilityArgs),
}

#[derive(Args)]
struct DispersionArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Chains JSON as written by `run`.
    #[arg(long, required_unless_present = "story", conflicts_with = "story")]
    chains: Option<PathBuf>,
    /// Build the story chain and both baselines from a story JSON.
    #[arg(long)]
    story: Option<PathBuf>,
    #[arg(long, default_value = "0:1:0.05")]
    theta_grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    story: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value = "1:20:1")]
    beta_grid: String,
    /// Rescale the turning points to this maximum date first.
    #[arg(long)]
    date_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RepeatabilityArgs {
    /// Fit result JSON written by `fit --result`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long, default_value = "0:100:1")]
    zeta_grid: String,
    /// Defaults to the number of interior turning points.
    #[arg(long)]
    min_matches: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    story: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    gap_days: f64,
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Inclusive day ranges, one per cluster.
    #[arg(long, default_value = "0:30,35:65,70:100")]
    time_ranges: String,
    #[arg(long, default_value_t = 20)]
    docs_per_cluster: usize,
    #[arg(long, default_value_t = 12)]
    vocab_size: usize,
    #[arg(long, default_value_t = 4)]
    entities_per_doc: usize,
    #[arg(long, default_value_t = 6)]
    background_vocab: usize,
    #[arg(long, default_value_t = 1)]
    background_per_doc: usize,
    #[arg(long, default_value_t = 0)]
    carryover_per_doc: usize,
    #[arg(long, default_value_t = 100.0)]
    date_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(path, CorpusFormat::Jsonl)
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct IngestSummary {
    documents: usize,
    entities: usize,
    first_date: Option<NaiveDate>,
    last_date: Option<NaiveDate>,
}

fn ingest(args: IngestArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    if let Some(out) = &args.out {
        corpus.write_jsonl(out)?;
    }
    let docs = corpus.documents();
    emit_json(
        None,
        &IngestSummary {
            documents: corpus.len(),
            entities: corpus.vocabulary().len(),
            first_date: docs.first().map(|d| d.timestamp),
            last_date: docs.last().map(|d| d.timestamp),
        },
    )
}

fn topics(args: TopicsArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let cfg = LdaConfig {
        num_topics: args.lda_k,
        iterations: args.lda_iters,
        rng_seed: args.lda_seed,
    };
    let topics = fit_reference_lda(&corpus, &cfg)?;
    write_topics_file(&args.out, &corpus, &topics)
}

fn candidates(args: CandidatesArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let settings = CandidateSettings {
        alpha: args.alpha,
        t_min: args.t_min,
        lookback_days: args.lookback_days,
    };
    let filter = settings.filter_config(&corpus, &args.seed_ids, args.date_max)?;
    let topics = args
        .topics_file
        .as_deref()
        .map(|p| read_topics_file(p, &corpus))
        .transpose()?;
    let set = filter_candidates(&corpus, topics.as_deref(), &args.seed_ids, &filter)?;
    log::info!("{} candidates", set.len());
    write_json(&args.out, &CandidatesArtifact::from_set(&set))
}

fn fit(args: FitArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let artifact: CandidatesArtifact = read_json(&args.candidates)?;
    let set = artifact.to_set(&corpus)?;
    let seg = SegmentationConfig {
        num_segments: args.segments,
        gamma_variance: args.sigma_hat2,
        overlap_sigma: args.overlap_sigma,
        date_max: artifact.date_max,
    };
    seg.validate()?;
    let opt = OptimizerConfig {
        restarts: args.restarts,
        rng_seed: args.seed,
        max_iterations: args.max_iterations,
        ..Default::default()
    };
    let result = fit_story(&set, &seg, &opt)?;
    let story = extract_story(&result, &set, &seg, args.top_k)?;
    write_json(&args.out, &story)?;
    if let Some(path) = &args.result {
        write_json(path, &result)?;
    }
    if let Some(path) = &args.dump_terms {
        let terms = ObjectiveContext::new(&set, &seg)?.breakdown(&result.best_solution)?;
        write_json(path, &terms)?;
    }
    Ok(())
}

fn interior(story: &Story) -> &[f64] {
    let tp = &story.turning_points;
    if tp.len() < 2 {
        &[]
    } else {
        &tp[1..tp.len() - 1]
    }
}

fn evaluate(what: EvaluateCommand) -> Result<()> {
    match what {
        EvaluateCommand::Dispersion(args) => {
            let corpus = load_corpus(&args.corpus)?;
            let thetas = parse_grid(&args.theta_grid)?;
            let chains: Vec<MethodChains> = match (&args.chains, &args.story) {
                (Some(path), _) => read_json(path)?,
                (None, Some(path)) => build_chains(&read_json(path)?, &corpus, args.seed)?,
                (None, None) => {
                    return Err(Error::InvalidConfig("pass --chains or --story".into()))
                }
            };
            let rows = dispersion_table(&chains, &corpus, &thetas)?;
            emit_text(args.out.as_deref(), &dispersion_csv(&rows)?)
        }
        EvaluateCommand::Significance(args) => {
            let story: Story = read_json(&args.story)?;
            let story_max = story.turning_points.last().copied().unwrap_or(0.0);
            let (points, date_max) = match args.date_max {
                Some(m) if story_max > 0.0 => (
                    interior(&story).iter().map(|t| t / story_max * m).collect(),
                    m,
                ),
                _ => (interior(&story).to_vec(), story_max),
            };
            let betas = parse_grid(&args.beta_grid)?;
            let rows = significance_sweep(&points, date_max, args.samples, &betas, args.seed)?;
            emit_text(args.out.as_deref(), &sweep_csv(["beta", "p_value"], &rows)?)
        }
        EvaluateCommand::Repeatability(args) => {
            let result: StoryResult = read_json(&args.result)?;
            let vectors = result.turning_point_vectors();
            let width = vectors.first().map_or(0, Vec::len);
            let min_matches = args.min_matches.unwrap_or(width.max(1));
            let rows = repeatability_sweep(&vectors, &parse_grid(&args.zeta_grid)?, min_matches)?;
            emit_text(args.out.as_deref(), &sweep_csv(["zeta", "buckets"], &rows)?)
        }
    }
}

fn predict(args: PredictArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let story: Story = read_json(&args.story)?;
    let report = predict_from_story(&story, &corpus, args.gap_days, args.top)?;
    if report.no_overlap {
        log::warn!(
            "{}",
            report
                .note
                .as_deref()
                .unwrap_or("nothing could be predicted")
        );
    }
    emit_json(args.out.as_deref(), &report)
}

fn parse_ranges(spec: &str) -> Result<Vec<(u32, u32)>> {
    spec.split(',')
        .map(|r| {
            let (a, b) = r.split_once(':').ok_or_else(|| {
                Error::InvalidConfig(format!("time range {r:?} is not start:end"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidConfig(format!("bad day {s:?}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        time_ranges: parse_ranges(&args.time_ranges)?,
        docs_per_cluster: args.docs_per_cluster,
        vocab_size: args.vocab_size,
        entities_per_doc: args.entities_per_doc,
        background_vocab: args.background_vocab,
        background_per_doc: args.background_per_doc,
        carryover_per_doc: args.carryover_per_doc,
        rng_seed: args.seed,
        ..Default::default()
    };
    let truth = write_synthetic_corpus(&spec, args.date_max, &args.out)?;
    log::info!(
        "planted boundaries {:?}, seed {}",
        truth.boundaries,
        truth.seed_id
    );
    Ok(())
}

fn run(args: RunArgs) -> std::result::Result<(), (i32, String)> {
    let fail = |e: Error| (2, e.to_string());
    let mut config = RunConfig::load(&args.config).map_err(fail)?;
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        config.optimizer.rng_seed = seed;
    }
    if let Some(r) = args.restarts {
        config.optimizer.restarts = r;
    }
    if let Some(s) = args.segments {
        config.segmentation.num_segments = s;
    }
    match run_pipeline(&config) {
        Ok(summary) => {
            log::info!(
                "wrote {} artifacts to {}",
                summary.artifacts.len(),
                summary.output_dir.display()
            );
            Ok(())
        }
        Err(e) => Err((e.exit_code(), e.to_string())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        other => {
            let r = match other {
                Command::Ingest(a) => ingest(a),
                Command::Topics(a) => topics(a),
                Command::Candidates(a) => candidates(a),
                Command::Fit(a) => fit(a),
                Command::Evaluate { what } => evaluate(what),
                Command::Predict(a) => predict(a),
                Command::Synth(a) => synth(a),
                Command::Run(_) => unreachable!("handled above"),
            };
            r.map_err(|e| (if e.is_config_error() { 2 } else { 3 }, e.to_string()))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
