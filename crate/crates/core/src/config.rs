//! Pipeline configuration in a flat `key = value` format.
//!
//! Blank lines and lines starting with `#` are ignored. Unset optional keys
//! are simply absent. [`PipelineConfig::to_text`] writes every resolved value
//! so the output reloads to an identical configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::clustering::Linkage;
use crate::error::{Error, Result};
use crate::kselect::{LogJumpRule, Regime};
use crate::seeds::URL_JACCARD_THRESHOLD;
use crate::vector::Norm;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub triples: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    /// `mention \t entity \t prior` lines.
    pub dictionary: Option<PathBuf>,
    /// `surface \t url` lines.
    pub urls: Option<PathBuf>,
    /// Extra noun-phrase seed pairs, `surface \t surface`.
    pub np_seeds: Option<PathBuf>,
    pub rp_seeds: Option<PathBuf>,
    /// Precomputed context embeddings used instead of training the context view.
    pub np_context: Option<PathBuf>,
    pub rp_context: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub margin: f64,
    pub lr_fact: f64,
    pub lr_ctx: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub icp_rounds: usize,
    pub icp_epochs: usize,
    pub phases: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub workers: usize,
    pub dim: usize,
    pub hidden: usize,
    pub norm: Norm,
    pub linkage: Linkage,
    pub url_threshold: f64,
    pub regime: Regime,
    pub rule: LogJumpRule,
    pub restarts: usize,
    pub k_np: Option<usize>,
    pub k_rp: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            triples: None,
            sources: None,
            word_vectors: None,
            dictionary: None,
            urls: None,
            np_seeds: None,
            rp_seeds: None,
            np_context: None,
            rp_context: None,
            out_dir: None,
            margin: 12.0,
            lr_fact: 1e-4,
            lr_ctx: 0.005,
            max_iter: 10,
            tol: 1e-4,
            icp_rounds: 5,
            icp_epochs: 20,
            phases: 4,
            epochs: 100,
            negatives: 1,
            workers: 1,
            dim: 300,
            hidden: 300,
            norm: Norm::L1,
            linkage: Linkage::Average,
            url_threshold: URL_JACCARD_THRESHOLD,
            regime: Regime::LargeK,
            rule: LogJumpRule::SteepestDrop,
            restarts: 3,
            k_np: None,
            k_rp: None,
            seed: 0,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_opt<V: FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key.trim() {
            "triples" => self.triples = path(),
            "sources" => self.sources = path(),
            "word_vectors" => self.word_vectors = path(),
            "dictionary" => self.dictionary = path(),
            "urls" => self.urls = path(),
            "np_seeds" => self.np_seeds = path(),
            "rp_seeds" => self.rp_seeds = path(),
            "np_context" => self.np_context = path(),
            "rp_context" => self.rp_context = path(),
            "out_dir" => self.out_dir = path(),
            "margin" => self.margin = parse(key, v)?,
            "lr_fact" => self.lr_fact = parse(key, v)?,
            "lr_ctx" => self.lr_ctx = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "tol" => self.tol = parse(key, v)?,
            "icp_rounds" => self.icp_rounds = parse(key, v)?,
            "icp_epochs" => self.icp_epochs = parse(key, v)?,
            "phases" => self.phases = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "negatives" => self.negatives = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "norm" => self.norm = v.parse()?,
            "linkage" => self.linkage = v.parse()?,
            "url_threshold" => self.url_threshold = parse(key, v)?,
            "regime" => self.regime = v.parse()?,
            "rule" => self.rule = v.parse()?,
            "restarts" => self.restarts = parse(key, v)?,
            "k_np" => self.k_np = parse_opt(key, v)?,
            "k_rp" => self.k_rp = parse_opt(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let paths = [
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
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                let _ = writeln!(s, "{k} = {}", p.display());
            }
        }
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "lr_fact = {}", self.lr_fact);
        let _ = writeln!(s, "lr_ctx = {}", self.lr_ctx);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "icp_rounds = {}", self.icp_rounds);
        let _ = writeln!(s, "icp_epochs = {}", self.icp_epochs);
        let _ = writeln!(s, "phases = {}", self.phases);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "negatives = {}", self.negatives);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "norm = {}", self.norm);
        let _ = writeln!(s, "linkage = {}", self.linkage);
        let _ = writeln!(s, "url_threshold = {}", self.url_threshold);
        let _ = writeln!(s, "regime = {}", self.regime);
        let _ = writeln!(s, "rule = {}", self.rule);
        let _ = writeln!(s, "restarts = {}", self.restarts);
        if let Some(k) = self.k_np {
            let _ = writeln!(s, "k_np = {k}");
        }
        if let Some(k) = self.k_rp {
            let _ = writeln!(s, "k_rp = {k}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Value of a path setting, or a configuration error naming it.
    pub fn require<'a>(&self, field: &'static str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required setting `{field}`")))
    }

    /// Range checks on the numeric settings.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("`{what}` out of range")));
        if !(self.margin > 0.0) {
            return bad("margin");
        }
        if !(self.lr_fact > 0.0) {
            return bad("lr_fact");
        }
        if !(self.lr_ctx > 0.0) {
            return bad("lr_ctx");
        }
        if !(self.tol >= 0.0) {
            return bad("tol");
        }
        if !(self.url_threshold > 0.0 && self.url_threshold <= 1.0) {
            return bad("url_threshold");
        }
        for (name, v) in [
            ("max_iter", self.max_iter),
            ("icp_rounds", self.icp_rounds),
            ("phases", self.phases),
            ("negatives", self.negatives),
            ("workers", self.workers),
            ("dim", self.dim),
            ("hidden", self.hidden),
            ("restarts", self.restarts),
        ] {
            if v == 0 {
                return bad(name);
            }
        }
        Ok(())
    }
}
