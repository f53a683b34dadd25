//! End-to-end commands: seed collection, view training, cluster-count
//! estimation, fusion and evaluation. The command-line front end is a thin
//! layer over these functions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::clustering::{mv_ch_kmeans, FusionResult, MvcConfig};
use crate::config::PipelineConfig;
use crate::context_view::{context_bases, icp_run, phrase_contexts, IcpConfig};
use crate::data::{Dataset, PhraseId, PhraseKind, PhraseTable};
use crate::embedding::{load_embeddings, load_word_vectors, phrase_base_vectors, EmbeddingTable, View, WordVectors};
use crate::error::{Error, Result};
use crate::eval::{evaluate, relative_error, MetricReport};
use crate::fact_view::{augment, train_alternating, EpochLoss, FactEmbeddings, KemParams, TripleSet};
use crate::kselect::{
    candidate_range, estimate_k_with, select_jump, select_log_jump_with, DistortionCurve, KCandidateRange,
    KMeansOptions, LogJumpRule, Regime,
};
use crate::partition::{read_clusters, write_clusters, Clustering, GoldLabels};
use crate::rng::{derive_seed, seeded};
use crate::seeds::{seeds_from_dictionary, seeds_from_urls, MentionDictionary, SeedPairSet, UrlProfile};

/// Sub-seeds of the pipeline, so each stage draws from its own stream.
mod stream {
    pub const FACT_INIT: u64 = 1;
    pub const FACT_TRAIN: u64 = 2;
    pub const CONTEXT: u64 = 3;
    pub const BASE: u64 = 4;
    pub const KSELECT: u64 = 5;
    pub const FUSION: u64 = 6;
}

fn kind_index(kind: PhraseKind) -> u64 {
    match kind {
        PhraseKind::Np => 0,
        PhraseKind::Rp => 1,
    }
}

fn kind_name(kind: PhraseKind) -> &'static str {
    match kind {
        PhraseKind::Np => "np",
        PhraseKind::Rp => "rp",
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.require("out_dir", &cfg.out_dir)?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_inputs(cfg: &PipelineConfig) -> Result<(Dataset, WordVectors<f64>)> {
    let triples = cfg.require("triples", &cfg.triples)?;
    let sources = cfg.require("sources", &cfg.sources)?;
    let words = cfg.require("word_vectors", &cfg.word_vectors)?;
    cfg.validate()?;
    let ds = Dataset::load(triples, sources)?;
    let words = load_word_vectors(words)?;
    log::info!(
        "loaded {} triples, {} noun phrases, {} relation phrases",
        ds.triples.len(),
        ds.nps.len(),
        ds.rps.len()
    );
    Ok((ds, words))
}

/// Noun- and relation-phrase seed pairs from every configured resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds {
    pub np: SeedPairSet,
    pub rp: SeedPairSet,
}

pub fn collect_seeds(cfg: &PipelineConfig, ds: &Dataset) -> Result<Seeds> {
    let mut np = SeedPairSet::new(PhraseKind::Np);
    let mut rp = SeedPairSet::new(PhraseKind::Rp);
    if let Some(path) = &cfg.dictionary {
        np.extend(&seeds_from_dictionary(&ds.nps, &MentionDictionary::load(path)?));
    }
    if let Some(path) = &cfg.urls {
        np.extend(&seeds_from_urls(
            PhraseKind::Np,
            &UrlProfile::load(path, &ds.nps)?,
            cfg.url_threshold,
        )?);
        rp.extend(&seeds_from_urls(
            PhraseKind::Rp,
            &UrlProfile::load(path, &ds.rps)?,
            cfg.url_threshold,
        )?);
    }
    if let Some(path) = &cfg.np_seeds {
        np.extend(&SeedPairSet::load(path, &ds.nps)?);
    }
    if let Some(path) = &cfg.rp_seeds {
        rp.extend(&SeedPairSet::load(path, &ds.rps)?);
    }
    log::info!("{} noun-phrase and {} relation-phrase seed pairs", np.len(), rp.len());
    Ok(Seeds { np, rp })
}

/// `seeds`: writes `np_seeds.tsv` and `rp_seeds.tsv`.
pub fn cmd_seeds(cfg: &PipelineConfig) -> Result<Seeds> {
    let dir = out_dir(cfg)?;
    let triples = cfg.require("triples", &cfg.triples)?;
    let sources = cfg.require("sources", &cfg.sources)?;
    cfg.validate()?;
    let ds = Dataset::load(triples, sources)?;
    let seeds = collect_seeds(cfg, &ds)?;
    write_with(&dir.join("np_seeds.tsv"), |w| seeds.np.write(w, &ds.nps))?;
    write_with(&dir.join("rp_seeds.tsv"), |w| seeds.rp.write(w, &ds.rps))?;
    Ok(seeds)
}

fn fact_view(
    cfg: &PipelineConfig,
    ds: &Dataset,
    words: &WordVectors<f64>,
    seeds: &Seeds,
) -> Result<FactEmbeddings<f64>> {
    let mut rng = seeded(cfg.seed, stream::FACT_INIT);
    let mut params = KemParams::from_base(&ds.nps, &ds.rps, words, cfg.dim, &mut rng)?;
    params.margin = cfg.margin;
    params.lr = cfg.lr_fact;
    params.epochs = cfg.epochs;
    params.negatives = cfg.negatives;
    params.workers = cfg.workers;
    params.norm = cfg.norm;
    let original = TripleSet::original(ds);
    let augmented = augment(&original, &seeds.np);
    log::info!(
        "fact view: {} original and {} augmented triples",
        original.len(),
        augmented.len()
    );
    train_alternating(
        &original,
        &augmented,
        &mut params,
        cfg.phases,
        derive_seed(cfg.seed, stream::FACT_TRAIN),
    )
}

fn write_fact(dir: &Path, fact: &FactEmbeddings<f64>) -> Result<()> {
    fact.entities.save(dir.join("fact_np.emb"))?;
    fact.relations.save(dir.join("fact_rp.emb"))?;
    write_with(&dir.join("fact_train.log"), |w| {
        writeln!(w, "phase,epoch,mean_loss")?;
        fact.log.iter().try_for_each(|l: &EpochLoss| writeln!(w, "{l}"))
    })
}

/// `train-fact`: writes `fact_np.emb`, `fact_rp.emb` and `fact_train.log`.
pub fn cmd_train_fact(cfg: &PipelineConfig) -> Result<FactEmbeddings<f64>> {
    let dir = out_dir(cfg)?;
    let (ds, words) = load_inputs(cfg)?;
    let seeds = collect_seeds(cfg, &ds)?;
    let fact = fact_view(cfg, &ds, &words, &seeds)?;
    write_fact(&dir, &fact)?;
    cfg.save(dir.join("config.txt"))?;
    Ok(fact)
}

fn kmeans_options(cfg: &PipelineConfig) -> KMeansOptions {
    KMeansOptions {
        restarts: cfg.restarts,
        ..KMeansOptions::default()
    }
}

fn context_view(
    cfg: &PipelineConfig,
    ds: &Dataset,
    words: &WordVectors<f64>,
    kind: PhraseKind,
    seeds: &SeedPairSet,
) -> Result<EmbeddingTable<f64>> {
    let ids = ds.table(kind).ids();
    let preset = match kind {
        PhraseKind::Np => &cfg.np_context,
        PhraseKind::Rp => &cfg.rp_context,
    };
    if let Some(path) = preset {
        let table: EmbeddingTable<f64> = load_embeddings(path, View::Context)?;
        table.rows(&ids)?;
        return Ok(table);
    }
    let contexts = phrase_contexts(ds, kind);
    let unmatched = contexts.iter().flatten().filter(|c| c.unmatched).count();
    if unmatched > 0 {
        log::warn!("{unmatched} {} contexts do not contain their phrase", kind_name(kind));
    }
    let mut rng = seeded(cfg.seed, stream::CONTEXT * 2 + kind_index(kind));
    let (bases, fallbacks) = context_bases(&contexts, words, cfg.norm, &mut rng);
    if fallbacks > 0 {
        log::info!("{fallbacks} {} phrases have no usable context", kind_name(kind));
    }
    let icp = IcpConfig {
        rounds: cfg.icp_rounds,
        epochs: cfg.icp_epochs,
        hidden: cfg.hidden,
        lr: cfg.lr_ctx,
        linkage: cfg.linkage,
        k: None,
        kmeans: kmeans_options(cfg),
        norm: cfg.norm,
        ..IcpConfig::default()
    };
    let out = icp_run(
        &ids,
        &bases,
        seeds,
        &icp,
        derive_seed(cfg.seed, stream::CONTEXT * 2 + kind_index(kind)),
    )?;
    Ok(out.embeddings)
}

/// `train-context`: writes `context_np.emb` and `context_rp.emb`.
pub fn cmd_train_context(cfg: &PipelineConfig) -> Result<[EmbeddingTable<f64>; 2]> {
    let dir = out_dir(cfg)?;
    let (ds, words) = load_inputs(cfg)?;
    let seeds = collect_seeds(cfg, &ds)?;
    let np = context_view(cfg, &ds, &words, PhraseKind::Np, &seeds.np)?;
    let rp = context_view(cfg, &ds, &words, PhraseKind::Rp, &seeds.rp)?;
    np.save(dir.join("context_np.emb"))?;
    rp.save(dir.join("context_rp.emb"))?;
    cfg.save(dir.join("config.txt"))?;
    Ok([np, rp])
}

/// Clustering of one phrase kind.
#[derive(Debug, Clone)]
pub struct KindOutcome {
    pub k: usize,
    pub clustering: Clustering,
    pub fusion: Option<FusionResult<f64>>,
}

#[derive(Debug, Clone)]
pub struct CanonicalizeReport {
    pub np: KindOutcome,
    pub rp: KindOutcome,
    pub metrics: Option<MetricReport>,
}

fn choose_k(cfg: &PipelineConfig, table: &PhraseTable, words: &WordVectors<f64>, kind: PhraseKind) -> Result<usize> {
    let n = table.len();
    let preset = match kind {
        PhraseKind::Np => cfg.k_np,
        PhraseKind::Rp => cfg.k_rp,
    };
    if let Some(k) = preset {
        return Ok(k.clamp(1, n));
    }
    if n < 2 {
        return Ok(n);
    }
    let mut rng = seeded(cfg.seed, stream::BASE * 2 + kind_index(kind));
    let (base, _) = phrase_base_vectors(table, words, words.dim(), cfg.norm, &mut rng);
    let range = candidate_range(n, cfg.regime)?;
    let rule = cfg.rule;
    let (k, _) = estimate_k_with(
        &base,
        range,
        &kmeans_options(cfg),
        derive_seed(cfg.seed, stream::KSELECT * 2 + kind_index(kind)),
        |c| select_log_jump_with(c, rule).map(|r| r.0),
    )?;
    Ok(k)
}

fn fuse(
    cfg: &PipelineConfig,
    ids: &[PhraseId],
    fact: &EmbeddingTable<f64>,
    context: &EmbeddingTable<f64>,
    k: usize,
    kind: PhraseKind,
) -> Result<KindOutcome> {
    let n = ids.len();
    if k < 2 || n < 2 {
        let labels = if k == n { (0..n).collect() } else { vec![0; n] };
        return Ok(KindOutcome {
            k: k.min(n),
            clustering: Clustering::from_assignment(ids.to_vec(), &labels),
            fusion: None,
        });
    }
    let view1 = fact.rows(ids)?;
    let view2 = context.rows(ids)?;
    let mvc = MvcConfig {
        k,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        norm: cfg.norm,
    };
    let mut rng = seeded(cfg.seed, stream::FUSION * 2 + kind_index(kind));
    let fusion = mv_ch_kmeans(&view1, &view2, &mvc, &mut rng)?;
    Ok(KindOutcome {
        k,
        clustering: Clustering::from_assignment(ids.to_vec(), &fusion.assignment),
        fusion: Some(fusion),
    })
}

fn write_loss(path: &Path, fusion: Option<&FusionResult<f64>>) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "iter,view,loss")?;
        for r in fusion.map(|f| f.trace.as_slice()).unwrap_or_default() {
            writeln!(w, "{},{},{}", r.iter, r.view, r.loss)?;
        }
        Ok(())
    })
}

/// `canonicalize`: the full pipeline.
///
/// Writes `np_clusters.txt`, `rp_clusters.txt`, the fusion loss traces, the
/// effective configuration, and metrics when the triples carry gold labels.
pub fn cmd_canonicalize(cfg: &PipelineConfig) -> Result<CanonicalizeReport> {
    for (field, value) in [
        ("triples", &cfg.triples),
        ("sources", &cfg.sources),
        ("word_vectors", &cfg.word_vectors),
        ("out_dir", &cfg.out_dir),
    ] {
        cfg.require(field, value)?;
    }
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let (ds, words) = load_inputs(cfg)?;
    let seeds = collect_seeds(cfg, &ds)?;
    let fact = fact_view(cfg, &ds, &words, &seeds)?;
    let mut outcomes = Vec::new();
    for (kind, kind_seeds, fact_table) in [
        (PhraseKind::Np, &seeds.np, &fact.entities),
        (PhraseKind::Rp, &seeds.rp, &fact.relations),
    ] {
        let table = ds.table(kind);
        let context = context_view(cfg, &ds, &words, kind, kind_seeds)?;
        let k = choose_k(cfg, table, &words, kind)?;
        log::info!("{}: {} phrases into {k} clusters", kind_name(kind), table.len());
        let outcome = fuse(cfg, &table.ids(), fact_table, &context, k, kind)?;
        let name = kind_name(kind);
        write_with(&dir.join(format!("{name}_clusters.txt")), |w| {
            write_clusters(w, &outcome.clustering, table)
        })?;
        write_loss(&dir.join(format!("{name}_loss.csv")), outcome.fusion.as_ref())?;
        outcomes.push(outcome);
    }
    let gold = ds.np_gold();
    let metrics = if gold.is_empty() {
        None
    } else {
        let report = evaluate(&outcomes[0].clustering, &gold)?;
        write_metrics(&dir, &report)?;
        Some(report)
    };
    cfg.save(dir.join("config.txt"))?;
    let rp = outcomes.pop().expect("two outcomes");
    let np = outcomes.pop().expect("two outcomes");
    Ok(CanonicalizeReport { np, rp, metrics })
}

fn write_metrics(dir: &Path, report: &MetricReport) -> Result<()> {
    write_with(&dir.join("metrics.txt"), |w| write!(w, "{report}"))?;
    write_with(&dir.join("metrics.json"), |w| writeln!(w, "{}", report.to_json()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// `evaluate`: compares two cluster files keyed by phrase surface.
pub fn cmd_evaluate(pred: &Path, gold_path: &Path) -> Result<MetricReport> {
    let p = read_clusters(open(pred)?, pred)?;
    let g = read_clusters(open(gold_path)?, gold_path)?;
    if p.is_empty() {
        return Err(Error::domain(format!("{} holds no clusters", pred.display())));
    }
    let gold: GoldLabels<String> = GoldLabels::from_clustering(&g);
    evaluate(&p, &gold).map_err(|e| match e {
        Error::Domain(_) => Error::domain(format!(
            "{} and {} share no elements",
            pred.display(),
            gold_path.display()
        )),
        other => other,
    })
}

/// A benchmark table: numeric feature rows and a gold class per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl Benchmark {
    pub fn gold_k(&self) -> usize {
        let mut l: Vec<&String> = self.labels.iter().collect();
        l.sort();
        l.dedup();
        l.len()
    }
}

/// Reads comma-separated feature columns followed by a label column. A first
/// line whose features do not parse as numbers is taken as a header.
pub fn read_benchmark<R: BufRead>(reader: R, origin: &Path) -> Result<Benchmark> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        if fields.len() < 2 {
            return Err(parse_err("expected feature columns and a label".into()));
        }
        let (label, features) = fields.split_last().expect("two fields");
        let values: std::result::Result<Vec<f64>, _> = features.iter().map(|f| f.parse::<f64>()).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(parse_err("non-numeric feature".into())),
        };
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(parse_err(format!(
                "expected {} features, found {}",
                width.unwrap_or(0),
                values.len()
            )));
        }
        rows.push(values);
        labels.push(label.to_string());
    }
    Ok(Benchmark { rows, labels })
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub p: usize,
    pub gold_k: usize,
    pub log_jump_k: usize,
    pub jump_k: usize,
    pub log_jump_error: f64,
    pub jump_error: f64,
    /// First curve computed for the log-jump estimate.
    #[serde(skip)]
    pub curve: DistortionCurve,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `estimate-k`: log-jump and jump estimates on a benchmark table.
///
/// Uses `range` when given, else the candidate range of `regime`.
pub fn cmd_estimate_k(
    data: &Benchmark,
    regime: Regime,
    range: Option<KCandidateRange>,
    rule: LogJumpRule,
    opts: &KMeansOptions,
    seed: u64,
) -> Result<EstimateReport> {
    let n = data.rows.len();
    if n < 2 {
        return Err(Error::domain(format!("cannot estimate a cluster count from {n} rows")));
    }
    let range = match range {
        Some(r) => r,
        None => candidate_range(n, regime)?,
    };
    let (log_jump_k, curves) = estimate_k_with(&data.rows, range, opts, seed, |c| {
        select_log_jump_with(c, rule).map(|r| r.0)
    })?;
    let (jump_k, _) = estimate_k_with(&data.rows, range, opts, seed, select_jump)?;
    let gold_k = data.gold_k();
    Ok(EstimateReport {
        n,
        p: data.rows[0].len(),
        gold_k,
        log_jump_k,
        jump_k,
        log_jump_error: relative_error(log_jump_k, gold_k)?,
        jump_error: relative_error(jump_k, gold_k)?,
        curve: curves
            .into_iter()
            .next()
            .ok_or_else(|| Error::domain("candidate range holds a single K"))?,
    })
}
