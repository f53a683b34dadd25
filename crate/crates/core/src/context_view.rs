//! Context-view embeddings refined with pseudo-labels.
//!
//! A phrase's context is the source text of a triple it occurs in, with the
//! phrase itself cut out. Contexts are embedded by averaging word vectors,
//! passed through a trainable `tanh` projection, and the projection is tuned
//! by a linear softmax classifier predicting pseudo-labels. Pseudo-labels come
//! first from seed pairs and then from clustering the current embeddings.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{hac, Linkage};
use crate::data::{Dataset, PhraseId, PhraseKind, SourceText};
use crate::embedding::{embed_phrase_avg, EmbeddingTable, View, WordVectors};
use crate::error::{Error, Result};
use crate::kselect::{estimate_k, KMeansOptions, Regime};
use crate::partition::compact_labels;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::seeds::{seed_components, SeedPairSet};
use crate::vector::{add_assign, normalize_in_place, random_unit_vector, Norm};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub phrase: PhraseId,
    pub source_id: u64,
    pub text: String,
    /// The phrase was not found in the source text, which is kept whole.
    pub unmatched: bool,
}

/// Byte range of the first case-insensitive occurrence of `needle` in `hay`.
fn find_ci(hay: &str, needle: &str) -> Option<(usize, usize)> {
    let want: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    if want.is_empty() {
        return None;
    }
    for (start, _) in hay.char_indices() {
        let mut got = 0;
        for (off, c) in hay[start..].char_indices() {
            let lower: Vec<char> = c.to_lowercase().collect();
            if got + lower.len() > want.len() || want[got..got + lower.len()] != lower[..] {
                break;
            }
            got += lower.len();
            if got == want.len() {
                return Some((start, start + off + c.len_utf8()));
            }
        }
    }
    None
}

/// Removes the first case-insensitive occurrence of `surface` from the source text.
pub fn build_context(phrase: PhraseId, surface: &str, source: &SourceText) -> Context {
    let (text, unmatched) = match find_ci(&source.text, surface) {
        Some((a, b)) => (format!("{}{}", &source.text[..a], &source.text[b..]), false),
        None => (source.text.clone(), true),
    };
    Context {
        phrase,
        source_id: source.id,
        text,
        unmatched,
    }
}

/// Contexts of every phrase of `kind`, one per distinct source text, indexed by phrase id.
pub fn phrase_contexts(ds: &Dataset, kind: PhraseKind) -> Vec<Vec<Context>> {
    let table = ds.table(kind);
    let mut sources: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); table.len()];
    for t in &ds.triples {
        let ids: &[PhraseId] = match kind {
            PhraseKind::Np => &[t.subject, t.object],
            PhraseKind::Rp => &[t.relation],
        };
        for id in ids {
            sources[id.index()].insert(t.source_id);
        }
    }
    sources
        .iter()
        .enumerate()
        .map(|(i, srcs)| {
            let id = PhraseId::from_index(i);
            srcs.iter()
                .filter_map(|s| ds.source(*s))
                .map(|s| build_context(id, table.surface(id), s))
                .collect()
        })
        .collect()
}

/// Frozen base embedding per phrase: the mean over its contexts of the
/// context token averages, unit-normalized.
///
/// Phrases without any usable context get a random unit vector; their count
/// is returned alongside.
pub fn context_bases<T: Scalar, R: Rng + ?Sized>(
    contexts: &[Vec<Context>],
    words: &WordVectors<T>,
    norm: Norm,
    rng: &mut R,
) -> (Vec<Vec<T>>, usize) {
    let dim = words.dim();
    let mut fallbacks = 0;
    let rows = contexts
        .iter()
        .map(|ctxs| {
            let fallback = random_unit_vector(dim, norm, rng);
            let mut acc = vec![T::zero(); dim];
            let mut used = 0;
            for c in ctxs {
                let tokens = crate::data::tokenize(&c.text);
                let (v, missed) = embed_phrase_avg(&tokens, words, &fallback);
                if !missed {
                    add_assign(&mut acc, &v);
                    used += 1;
                }
            }
            if used == 0 || normalize_in_place(&mut acc, norm).is_err() {
                fallbacks += 1;
                return fallback;
            }
            acc
        })
        .collect();
    (rows, fallbacks)
}

/// Trainable projection and classifier over frozen base embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    /// Projection, `h` rows of length `p`.
    pub w: Vec<Vec<T>>,
    pub b: Vec<T>,
    /// Classifier, `C` rows of length `h`.
    pub c: Vec<Vec<T>>,
    pub cb: Vec<T>,
    pub lr: T,
    /// Norm of the encoded output.
    pub norm: Norm,
}

impl<T: Scalar> EncoderParams<T> {
    /// Identity projection when `p == h`, Xavier-uniform otherwise; zero classifier.
    pub fn new<R: Rng + ?Sized>(p: usize, h: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if p == 0 || h == 0 {
            return Err(Error::domain("encoder dimensions must be positive"));
        }
        let w = if p == h {
            (0..h)
                .map(|i| (0..p).map(|j| if i == j { T::one() } else { T::zero() }).collect())
                .collect()
        } else {
            let a = (6.0 / (p + h) as f64).sqrt();
            (0..h)
                .map(|_| (0..p).map(|_| T::lit(rng.gen_range(-a..a))).collect())
                .collect()
        };
        Ok(Self {
            w,
            b: vec![T::zero(); h],
            c: vec![vec![T::zero(); h]; classes],
            cb: vec![T::zero(); classes],
            lr: T::lit(0.005),
            norm: Norm::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.len()
    }

    pub fn classes(&self) -> usize {
        self.c.len()
    }

    /// Replaces the classifier with a zero one over `classes` labels.
    pub fn reset_classifier(&mut self, classes: usize) {
        self.c = vec![vec![T::zero(); self.hidden_dim()]; classes];
        self.cb = vec![T::zero(); classes];
    }

    fn hidden(&self, x: &[T]) -> Vec<T> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &b)| (row.iter().zip(x).map(|(&w, &x)| w * x).sum::<T>() + b).tanh())
            .collect()
    }

    fn logits(&self, z: &[T]) -> Vec<T> {
        self.c
            .iter()
            .zip(&self.cb)
            .map(|(row, &b)| row.iter().zip(z).map(|(&c, &z)| c * z).sum::<T>() + b)
            .collect()
    }

    /// `tanh(W x + b)` scaled to unit length.
    pub fn encode(&self, base: &[T]) -> Result<Vec<T>> {
        if base.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "base embedding has dimension {}, encoder expects {}",
                base.len(),
                self.input_dim()
            )));
        }
        let mut z = self.hidden(base);
        normalize_in_place(&mut z, self.norm)?;
        Ok(z)
    }

    pub fn encode_all(&self, bases: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        bases.par_iter().map(|x| self.encode(x)).collect()
    }
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Cross-entropy of the classifier on one base embedding.
pub fn cross_entropy<T: Scalar>(params: &EncoderParams<T>, x: &[T], label: usize) -> Result<T> {
    if label >= params.classes() {
        return Err(Error::domain(format!(
            "label {label} out of {} classes",
            params.classes()
        )));
    }
    let logits = params.logits(&params.hidden(x));
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<T>().ln();
    Ok(lse - logits[label])
}

/// Gradient of [`cross_entropy`] with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad<T> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<Vec<T>>,
    pub cb: Vec<T>,
}

pub fn cross_entropy_gradient<T: Scalar>(
    params: &EncoderParams<T>,
    x: &[T],
    label: usize,
) -> Result<(T, EncoderGrad<T>)> {
    let loss = cross_entropy(params, x, label)?;
    let z = params.hidden(x);
    let mut dl = softmax(&params.logits(&z));
    dl[label] = dl[label] - T::one();
    let c: Vec<Vec<T>> = dl.iter().map(|&d| z.iter().map(|&zj| d * zj).collect()).collect();
    let da: Vec<T> = (0..z.len())
        .map(|j| {
            let dz: T = params.c.iter().zip(&dl).map(|(row, &d)| row[j] * d).sum();
            dz * (T::one() - z[j] * z[j])
        })
        .collect();
    let w = da.iter().map(|&a| x.iter().map(|&xi| a * xi).collect()).collect();
    Ok((loss, EncoderGrad { w, b: da, c, cb: dl }))
}

fn step<T: Scalar>(params: &mut EncoderParams<T>, g: &EncoderGrad<T>) {
    let lr = params.lr;
    let sub = |p: &mut [T], d: &[T]| p.iter_mut().zip(d).for_each(|(p, &d)| *p = *p - lr * d);
    params.w.iter_mut().zip(&g.w).for_each(|(p, d)| sub(p, d));
    sub(&mut params.b, &g.b);
    params.c.iter_mut().zip(&g.c).for_each(|(p, d)| sub(p, d));
    sub(&mut params.cb, &g.cb);
}

/// Pseudo-labels from the connected components of the seed graph.
pub fn initial_pseudo_labels(universe: &[PhraseId], seeds: &SeedPairSet) -> Vec<usize> {
    seed_components(universe, seeds).assignment().to_vec()
}

/// SGD on the classifier cross-entropy. Returns the mean loss of the last
/// epoch, or the current mean loss when `epochs` is zero.
///
/// The classifier is reset when its class count differs from the labels'.
pub fn train_head<T: Scalar, R: Rng + ?Sized>(
    params: &mut EncoderParams<T>,
    bases: &[Vec<T>],
    labels: &[usize],
    epochs: usize,
    rng: &mut R,
) -> Result<T> {
    if bases.len() != labels.len() || bases.is_empty() {
        return Err(Error::domain("need one label per base embedding"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes != params.classes() {
        params.reset_classifier(classes);
    }
    let mut order: Vec<usize> = (0..bases.len()).collect();
    let n = T::from_count(bases.len());
    if epochs == 0 {
        let mut total = T::zero();
        for (x, &y) in bases.iter().zip(labels) {
            total = total + cross_entropy(params, x, y)?;
        }
        return Ok(total / n);
    }
    let mut last = T::zero();
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = T::zero();
        for &i in &order {
            let (loss, g) = cross_entropy_gradient(params, &bases[i], labels[i])?;
            total = total + loss;
            step(params, &g);
        }
        last = total / n;
    }
    Ok(last)
}

/// Settings of the iterative clustering procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcpConfig {
    pub rounds: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub lr: f64,
    pub linkage: Linkage,
    /// Fixed cluster count; estimated by log-jump when absent.
    pub k: Option<usize>,
    pub kmeans: KMeansOptions,
    pub norm: Norm,
    /// Stop once fewer than this fraction of labels change between rounds.
    pub min_change: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            epochs: 20,
            hidden: 300,
            lr: 0.005,
            linkage: Linkage::Average,
            k: None,
            kmeans: KMeansOptions::default(),
            norm: Norm::default(),
            min_change: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcpRound {
    pub round: usize,
    pub classes: usize,
    pub loss: f64,
    /// Fraction of elements whose label changed, after matching clusters.
    pub changed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult<T> {
    pub embeddings: EmbeddingTable<T>,
    /// Encodings under the untrained projection.
    pub initial: Vec<Vec<T>>,
    pub rounds: Vec<IcpRound>,
    pub params: EncoderParams<T>,
}

/// Share of elements whose new label is not the majority image of their old cluster.
pub fn label_change(old: &[usize], new: &[usize]) -> f64 {
    if old.is_empty() {
        return 0.0;
    }
    let mut overlap: HashMap<(usize, usize), usize> = HashMap::new();
    for (&o, &n) in old.iter().zip(new) {
        *overlap.entry((n, o)).or_default() += 1;
    }
    let mut best: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut pairs: Vec<_> = overlap.into_iter().collect();
    pairs.sort_unstable();
    for ((n, o), c) in pairs {
        let e = best.entry(n).or_insert((o, c));
        if c > e.1 {
            *e = (o, c);
        }
    }
    let kept: usize = best.values().map(|&(_, c)| c).sum();
    (old.len() - kept) as f64 / old.len() as f64
}

/// Alternates training on pseudo-labels and re-clustering the encodings.
///
/// Round 1 trains on the seed components. Every later round cuts the current
/// encodings with agglomerative clustering and trains on those clusters. The
/// projection carries over between rounds; the classifier starts from zero.
pub fn icp_run<T: Scalar>(
    ids: &[PhraseId],
    bases: &[Vec<T>],
    seeds: &SeedPairSet,
    cfg: &IcpConfig,
    seed: u64,
) -> Result<IcpResult<T>> {
    if cfg.rounds == 0 {
        return Err(Error::domain("at least one round is required"));
    }
    if ids.len() != bases.len() || ids.is_empty() {
        return Err(Error::domain("need one base embedding per phrase"));
    }
    let p = bases[0].len();
    let mut labels = initial_pseudo_labels(ids, seeds);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut params = EncoderParams::new(p, cfg.hidden, classes, &mut seeded(seed, 0))?;
    params.lr = T::lit(cfg.lr);
    params.norm = cfg.norm;
    let initial = params.encode_all(bases)?;
    let mut current = initial.clone();
    let mut rounds = Vec::new();
    for round in 1..=cfg.rounds {
        let mut changed = 1.0;
        if round > 1 {
            let k = match cfg.k {
                Some(k) => k.min(current.len()).max(1),
                None if current.len() < 2 => 1,
                None => estimate_k(&current, Regime::LargeK, &cfg.kmeans, derive_seed(seed, round as u64))?,
            };
            let (next, _) = compact_labels(&hac(&current, k, cfg.linkage)?);
            changed = label_change(&labels, &next);
            if changed < cfg.min_change {
                log::info!("icp: labels settled after round {}", round - 1);
                break;
            }
            labels = next;
        }
        let mut rng = seeded(seed, round as u64);
        let loss = train_head(&mut params, bases, &labels, cfg.epochs, &mut rng)?;
        current = params.encode_all(bases)?;
        let classes = params.classes();
        log::debug!("icp round {round}: {classes} labels, loss {}", loss.as_f64());
        rounds.push(IcpRound {
            round,
            classes,
            loss: loss.as_f64(),
            changed,
        });
    }
    Ok(IcpResult {
        embeddings: EmbeddingTable::from_rows(View::Context, ids.to_vec(), &current)?,
        initial,
        rounds,
        params,
    })
}
