use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use okbcanon::config::PipelineConfig;
use okbcanon::kselect::{KCandidateRange, KMeansOptions, LogJumpRule, Regime};
use okbcanon::pipeline;
use okbcanon::{Error, Result};

#[derive(Parser)]
#[command(name = "okbcanon", version, about = "Canonicalize open knowledge base phrases")]
struct Cli {
    /// More log output; repeat for debug messages.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write cluster files.
    Canonicalize(ConfigArgs),
    /// Estimate the number of clusters of a CSV benchmark.
    EstimateK(EstimateArgs),
    /// Train the fact view and write its embeddings.
    TrainFact(ConfigArgs),
    /// Train the context view and write its embeddings.
    TrainContext(ConfigArgs),
    /// Collect seed pairs from the configured resources.
    Seeds(ConfigArgs),
    /// Score a cluster file against a gold cluster file.
    Evaluate(EvaluateArgs),
}

/// Settings; flags override the config file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    triples: Option<String>,
    #[arg(long)]
    sources: Option<String>,
    #[arg(long)]
    word_vectors: Option<String>,
    #[arg(long)]
    dictionary: Option<String>,
    #[arg(long)]
    urls: Option<String>,
    #[arg(long)]
    np_seeds: Option<String>,
    #[arg(long)]
    rp_seeds: Option<String>,
    #[arg(long)]
    np_context: Option<String>,
    #[arg(long)]
    rp_context: Option<String>,
    #[arg(long, short)]
    out_dir: Option<String>,
    #[arg(long)]
    margin: Option<String>,
    #[arg(long)]
    lr_fact: Option<String>,
    #[arg(long)]
    lr_ctx: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    icp_rounds: Option<String>,
    #[arg(long)]
    icp_epochs: Option<String>,
    #[arg(long)]
    phases: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    negatives: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    linkage: Option<String>,
    #[arg(long)]
    url_threshold: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    restarts: Option<String>,
    #[arg(long)]
    k_np: Option<String>,
    #[arg(long)]
    k_rp: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let flags = [
            ("triples", &self.triples),
            ("sources", &self.sources),
            ("word_vectors", &self.word_vectors),
            ("dictionary", &self.dictionary),
            ("urls", &self.urls),
            ("np_seeds", &self.np_seeds),
            ("rp_seeds", &self.rp_seeds),
            ("np_context", &self.np_context),
            ("rp_context", &self.rp_context),
            ("out_dir", &self.out_dir),
            ("margin", &self.margin),
            ("lr_fact", &self.lr_fact),
            ("lr_ctx", &self.lr_ctx),
            ("max_iter", &self.max_iter),
            ("tol", &self.tol),
            ("icp_rounds", &self.icp_rounds),
            ("icp_epochs", &self.icp_epochs),
            ("phases", &self.phases),
            ("epochs", &self.epochs),
            ("negatives", &self.negatives),
            ("workers", &self.workers),
            ("dim", &self.dim),
            ("hidden", &self.hidden),
            ("norm", &self.norm),
            ("linkage", &self.linkage),
            ("url_threshold", &self.url_threshold),
            ("regime", &self.regime),
            ("rule", &self.rule),
            ("restarts", &self.restarts),
            ("k_np", &self.k_np),
            ("k_rp", &self.k_rp),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with feature columns and a final gold-label column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "traditional")]
    regime: Regime,
    /// Candidate range `lo:hi` or `lo:hi:gap`, replacing the regime heuristic.
    #[arg(long)]
    range: Option<String>,
    #[arg(long, default_value = "steepest-drop")]
    rule: LogJumpRule,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the `K,d_K,LJ_K` curve here.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    json: bool,
}

fn parse_range(s: &str) -> Result<KCandidateRange> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad range `{s}`")))?;
    match parts[..] {
        [lo, hi] => KCandidateRange::new(lo, hi, 1),
        [lo, hi, gap] => KCandidateRange::new(lo, hi, gap),
        _ => Err(Error::Config(format!("bad range `{s}`, expected lo:hi[:gap]"))),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let file = File::open(&args.data).map_err(io_err(&args.data))?;
    let data = pipeline::read_benchmark(BufReader::new(file), &args.data)?;
    let range = args.range.as_deref().map(parse_range).transpose()?;
    let opts = KMeansOptions {
        restarts: args.restarts,
        ..KMeansOptions::default()
    };
    let report = pipeline::cmd_estimate_k(&data, args.regime, range, args.rule, &opts, args.seed)?;
    if let Some(path) = &args.curve {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        report
            .curve
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        println!("n={} p={} gold_k={}", report.n, report.p, report.gold_k);
        println!(
            "log_jump_k={} relative_error={:.6}",
            report.log_jump_k, report.log_jump_error
        );
        println!("jump_k={} relative_error={:.6}", report.jump_k, report.jump_error);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Canonicalize(a) => {
            let report = pipeline::cmd_canonicalize(&a.resolve()?)?;
            println!("np_clusters={} rp_clusters={}", report.np.k, report.rp.k);
            if let Some(m) = report.metrics {
                print!("{m}");
            }
        }
        Command::EstimateK(a) => estimate(&a)?,
        Command::TrainFact(a) => {
            let out = pipeline::cmd_train_fact(&a.resolve()?)?;
            if let Some(last) = out.log.last() {
                println!("final {last}");
            }
        }
        Command::TrainContext(a) => {
            let [np, rp] = pipeline::cmd_train_context(&a.resolve()?)?;
            println!("np_embeddings={} rp_embeddings={}", np.len(), rp.len());
        }
        Command::Seeds(a) => {
            let s = pipeline::cmd_seeds(&a.resolve()?)?;
            println!("np_pairs={} rp_pairs={}", s.np.len(), s.rp.len());
        }
        Command::Evaluate(a) => {
            let m = pipeline::cmd_evaluate(&a.pred, &a.gold)?;
            if a.json {
                println!("{}", m.to_json());
            } else {
                print!("{m}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
