//! Fact-view embeddings from a translational knowledge-base embedding model.
//!
//! Entities (noun phrases) and relations live in one vector space and a fact
//! `<h, r, o>` is plausible when `h + r` lands close to `o`. Training minimizes
//! a margin loss against corrupted triples. Seed pairs of synonymous noun
//! phrases produce extra positives by swapping one for the other, and the
//! original and augmented sets take turns as the positive set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, PhraseId, PhraseKind, PhraseTable};
use crate::embedding::{phrase_base_vectors, EmbeddingTable, View, WordVectors};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::seeds::SeedPairSet;
use crate::vector::{normalize_in_place, random_unit_vector, Norm};

/// A fact expressed in phrase ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IdTriple {
    pub subject: PhraseId,
    pub relation: PhraseId,
    pub object: PhraseId,
}

impl IdTriple {
    pub fn new(subject: PhraseId, relation: PhraseId, object: PhraseId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TripleRole {
    Original,
    Augmented,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSet {
    pub role: TripleRole,
    pub triples: Vec<IdTriple>,
}

impl TripleSet {
    /// The original facts of a dataset, in file order without repeats.
    pub fn original(ds: &Dataset) -> Self {
        let mut seen = HashSet::new();
        let triples = ds
            .triples
            .iter()
            .map(|t| IdTriple::new(t.subject, t.relation, t.object))
            .filter(|t| seen.insert(*t))
            .collect();
        Self {
            role: TripleRole::Original,
            triples,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Model parameters and training settings.
///
/// Tables are indexed by [`PhraseId::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct KemParams<T> {
    pub entities: Vec<Vec<T>>,
    pub relations: Vec<Vec<T>>,
    pub margin: T,
    pub lr: T,
    pub epochs: usize,
    pub dim: usize,
    /// Distance used by [`score`].
    pub score_norm: Norm,
    /// Entities are rescaled to unit length under this norm after each update.
    pub norm: Norm,
    /// Corrupted triples drawn per positive.
    pub negatives: usize,
    /// Shards per epoch; 1 trains sequentially.
    pub workers: usize,
}

impl<T: Scalar> KemParams<T> {
    /// Random unit vectors for every entity and relation, default settings.
    pub fn random<R: Rng + ?Sized>(n_entities: usize, n_relations: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let norm = Norm::default();
        let entities = (0..n_entities).map(|_| random_unit_vector(dim, norm, rng)).collect();
        let relations = (0..n_relations).map(|_| random_unit_vector(dim, norm, rng)).collect();
        Self::with_tables(entities, relations, dim)
    }

    /// Averaged word vectors of each phrase, fitted to `dim`.
    pub fn from_base<R: Rng + ?Sized>(
        nps: &PhraseTable,
        rps: &PhraseTable,
        base: &WordVectors<T>,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let norm = Norm::default();
        let (entities, missed_np) = phrase_base_vectors(nps, base, dim, norm, rng);
        let (relations, missed_rp) = phrase_base_vectors(rps, base, dim, norm, rng);
        if missed_np + missed_rp > 0 {
            log::info!("fact view: {missed_np} noun and {missed_rp} relation phrases initialized randomly");
        }
        Self::with_tables(entities, relations, dim)
    }

    pub fn with_tables(entities: Vec<Vec<T>>, relations: Vec<Vec<T>>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("embedding dimension must be positive"));
        }
        let bad = entities
            .iter()
            .chain(&relations)
            .any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite()));
        if bad {
            return Err(Error::domain(format!(
                "tables must hold finite vectors of dimension {dim}"
            )));
        }
        Ok(Self {
            entities,
            relations,
            margin: T::lit(12.0),
            lr: T::lit(1e-4),
            epochs: 100,
            dim,
            score_norm: Norm::L1,
            norm: Norm::default(),
            negatives: 1,
            workers: 1,
        })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > T::zero()) {
            return Err(Error::domain("margin must be positive"));
        }
        if !(self.lr > T::zero()) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if self.negatives == 0 || self.workers == 0 {
            return Err(Error::domain("negatives and workers must be at least 1"));
        }
        Ok(())
    }

    fn entity(&self, id: PhraseId) -> Result<&[T]> {
        self.entities
            .get(id.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("no entity embedding for {id}")))
    }

    fn relation(&self, id: PhraseId) -> Result<&[T]> {
        self.relations
            .get(id.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("no relation embedding for {id}")))
    }

    /// All entity ids, the universe for negative sampling.
    pub fn entity_ids(&self) -> Vec<PhraseId> {
        (0..self.entities.len()).map(PhraseId::from_index).collect()
    }

    pub fn entity_table(&self) -> Result<EmbeddingTable<T>> {
        EmbeddingTable::from_rows(View::Fact, self.entity_ids(), &self.entities)
    }

    pub fn relation_table(&self) -> Result<EmbeddingTable<T>> {
        let ids = (0..self.relations.len()).map(PhraseId::from_index).collect();
        EmbeddingTable::from_rows(View::Fact, ids, &self.relations)
    }
}

fn residual<T: Scalar>(h: &[T], r: &[T], o: &[T]) -> Vec<T> {
    h.iter().zip(r).zip(o).map(|((&h, &r), &o)| h + r - o).collect()
}

/// Dissimilarity `||h + r - o||`; lower is more plausible.
pub fn score<T: Scalar>(t: &IdTriple, params: &KemParams<T>) -> Result<T> {
    let h = params.entity(t.subject)?;
    let r = params.relation(t.relation)?;
    let o = params.entity(t.object)?;
    let res = residual(h, r, o);
    Ok(match params.score_norm {
        Norm::L1 => res.iter().map(|x| x.abs()).sum(),
        Norm::L2 => res.iter().map(|&x| x * x).sum::<T>().sqrt(),
    })
}

/// `[margin + f_pos - f_neg]_+`.
pub fn hinge<T: Scalar>(margin: T, f_pos: T, f_neg: T) -> T {
    (margin + f_pos - f_neg).max(T::zero())
}

/// Replaces the subject or the object (never both) with another noun phrase.
///
/// The replacement differs from both the subject and the object when the
/// universe allows it; otherwise only from the phrase it replaces.
pub fn negative_sample<R: Rng + ?Sized>(t: &IdTriple, universe: &[PhraseId], rng: &mut R) -> Result<IdTriple> {
    if universe.len() < 2 {
        return Err(Error::Sampling(format!(
            "negative sampling needs at least 2 noun phrases, got {}",
            universe.len()
        )));
    }
    let replace_subject = rng.gen_bool(0.5);
    let replaced = if replace_subject { t.subject } else { t.object };
    let strict = universe.iter().any(|&u| u != t.subject && u != t.object);
    let ok = |u: PhraseId| {
        if strict {
            u != t.subject && u != t.object
        } else {
            u != replaced
        }
    };
    if !universe.iter().any(|&u| ok(u)) {
        return Err(Error::Sampling(format!("no noun phrase can replace {replaced}")));
    }
    let pick = loop {
        let u = universe[rng.gen_range(0..universe.len())];
        if ok(u) {
            break u;
        }
    };
    let mut neg = *t;
    if replace_subject {
        neg.subject = pick;
    } else {
        neg.object = pick;
    }
    Ok(neg)
}

/// Every triple with one occurrence of a seed phrase swapped for its counterpart.
/// Duplicates are dropped; input order is kept.
pub fn swap_counterparts(triples: &[IdTriple], seeds: &SeedPairSet) -> Vec<IdTriple> {
    let mut partners: HashMap<PhraseId, Vec<PhraseId>> = HashMap::new();
    for (a, b) in seeds.iter() {
        partners.entry(a).or_default().push(b);
        partners.entry(b).or_default().push(a);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in triples {
        for &p in partners.get(&t.subject).into_iter().flatten() {
            let s = IdTriple { subject: p, ..*t };
            if seen.insert(s) {
                out.push(s);
            }
        }
        for &p in partners.get(&t.object).into_iter().flatten() {
            let s = IdTriple { object: p, ..*t };
            if seen.insert(s) {
                out.push(s);
            }
        }
    }
    out
}

/// Augmented positives: counterpart swaps that are not already original facts.
pub fn augment(original: &TripleSet, seeds: &SeedPairSet) -> TripleSet {
    if seeds.kind() != PhraseKind::Np {
        log::warn!("augmentation expects noun-phrase seed pairs");
    }
    let known: HashSet<&IdTriple> = original.triples.iter().collect();
    let triples = swap_counterparts(&original.triples, seeds)
        .into_iter()
        .filter(|t| !known.contains(t))
        .collect();
    TripleSet {
        role: TripleRole::Augmented,
        triples,
    }
}

/// Sparse gradient, keyed by phrase id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient<T> {
    pub entities: BTreeMap<PhraseId, Vec<T>>,
    pub relations: BTreeMap<PhraseId, Vec<T>>,
}

impl<T: Scalar> Gradient<T> {
    fn add(map: &mut BTreeMap<PhraseId, Vec<T>>, id: PhraseId, g: &[T], sign: T) {
        let acc = map.entry(id).or_insert_with(|| vec![T::zero(); g.len()]);
        acc.iter_mut().zip(g).for_each(|(a, &x)| *a = *a + sign * x);
    }

    fn merge(&mut self, other: Gradient<T>) {
        for (id, g) in other.entities {
            Self::add(&mut self.entities, id, &g, T::one());
        }
        for (id, g) in other.relations {
            Self::add(&mut self.relations, id, &g, T::one());
        }
    }
}

/// Gradient of the score with respect to `h + r - o`.
fn score_direction<T: Scalar>(res: &[T], norm: Norm) -> Vec<T> {
    match norm {
        Norm::L1 => res
            .iter()
            .map(|&x| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            })
            .collect(),
        Norm::L2 => {
            let len = res.iter().map(|&x| x * x).sum::<T>().sqrt();
            if len > T::zero() {
                res.iter().map(|&x| x / len).collect()
            } else {
                vec![T::zero(); res.len()]
            }
        }
    }
}

/// Hinge loss of one positive/negative pair.
pub fn hinge_loss<T: Scalar>(params: &KemParams<T>, pos: &IdTriple, neg: &IdTriple) -> Result<T> {
    Ok(hinge(params.margin, score(pos, params)?, score(neg, params)?))
}

/// Loss and gradient of one positive/negative pair; the gradient is empty when the hinge is inactive.
pub fn hinge_gradient<T: Scalar>(params: &KemParams<T>, pos: &IdTriple, neg: &IdTriple) -> Result<(T, Gradient<T>)> {
    let loss = hinge_loss(params, pos, neg)?;
    let mut grad = Gradient::default();
    if loss > T::zero() {
        for (t, sign) in [(pos, T::one()), (neg, -T::one())] {
            let res = residual(
                params.entity(t.subject)?,
                params.relation(t.relation)?,
                params.entity(t.object)?,
            );
            let dir = score_direction(&res, params.score_norm);
            Gradient::add(&mut grad.entities, t.subject, &dir, sign);
            Gradient::add(&mut grad.relations, t.relation, &dir, sign);
            Gradient::add(&mut grad.entities, t.object, &dir, -sign);
        }
    }
    Ok((loss, grad))
}

fn apply<T: Scalar>(params: &mut KemParams<T>, grad: &Gradient<T>, step: T) -> Result<()> {
    for (id, g) in &grad.relations {
        let v = &mut params.relations[id.index()];
        v.iter_mut().zip(g).for_each(|(x, &d)| *x = *x - step * d);
    }
    for (id, g) in &grad.entities {
        let norm = params.norm;
        let v = &mut params.entities[id.index()];
        v.iter_mut().zip(g).for_each(|(x, &d)| *x = *x - step * d);
        normalize_in_place(v, norm)?;
    }
    Ok(())
}

/// One pass over `positives` in random order. Returns the mean hinge loss.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    params: &mut KemParams<T>,
    positives: &TripleSet,
    rng: &mut R,
) -> Result<T> {
    params.validate()?;
    if positives.is_empty() {
        return Err(Error::domain("no positive triples to train on"));
    }
    let universe = params.entity_ids();
    let mut order = positives.triples.clone();
    order.shuffle(rng);
    let mut total = T::zero();
    if params.workers == 1 {
        for pos in &order {
            for _ in 0..params.negatives {
                let neg = negative_sample(pos, &universe, rng)?;
                let (loss, grad) = hinge_gradient(params, pos, &neg)?;
                total = total + loss;
                let lr = params.lr;
                apply(params, &grad, lr)?;
            }
        }
    } else {
        // Shards see the parameters as of the start of the epoch.
        let shard_seed: u64 = rng.gen();
        let chunk = order.len().div_ceil(params.workers);
        let frozen: &KemParams<T> = params;
        let parts = order
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, shard)| {
                let mut rng = seeded(derive_seed(shard_seed, i as u64), 0);
                let mut loss = T::zero();
                let mut grad = Gradient::default();
                for pos in shard {
                    for _ in 0..frozen.negatives {
                        let neg = negative_sample(pos, &universe, &mut rng)?;
                        let (l, g) = hinge_gradient(frozen, pos, &neg)?;
                        loss = loss + l;
                        grad.merge(g);
                    }
                }
                Ok((loss, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let shards = T::from_count(parts.len());
        let mut grad = Gradient::default();
        for (l, g) in parts {
            total = total + l;
            grad.merge(g);
        }
        let step = params.lr / shards;
        apply(params, &grad, step)?;
    }
    Ok(total / T::from_count(order.len() * params.negatives))
}

/// Mean loss of one epoch, as written to the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub phase: usize,
    pub epoch: usize,
    pub mean_loss: f64,
}

impl fmt::Display for EpochLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.phase, self.epoch, self.mean_loss)
    }
}

/// Trained entity and relation tables plus the per-epoch losses.
#[derive(Debug, Clone, PartialEq)]
pub struct FactEmbeddings<T> {
    pub entities: EmbeddingTable<T>,
    pub relations: EmbeddingTable<T>,
    pub log: Vec<EpochLoss>,
}

/// Alternating training: odd phases (1-based) on the original facts, even
/// phases on the augmented ones. Each phase runs `params.epochs` epochs with
/// its own random stream derived from `seed`.
pub fn train_alternating<T: Scalar>(
    original: &TripleSet,
    augmented: &TripleSet,
    params: &mut KemParams<T>,
    phases: usize,
    seed: u64,
) -> Result<FactEmbeddings<T>> {
    if phases == 0 {
        return Err(Error::domain("at least one training phase is required"));
    }
    if augmented.is_empty() && phases > 1 {
        log::warn!("no augmented triples; training on the original facts only");
    }
    let mut log = Vec::new();
    for phase in 1..=phases {
        let positives = if phase % 2 == 1 { original } else { augmented };
        if positives.is_empty() {
            continue;
        }
        let mut rng = seeded(seed, phase as u64);
        for epoch in 1..=params.epochs {
            let loss = train_epoch(params, positives, &mut rng)?;
            let entry = EpochLoss {
                phase,
                epoch,
                mean_loss: loss.as_f64(),
            };
            log::debug!("{entry}");
            log.push(entry);
        }
    }
    Ok(FactEmbeddings {
        entities: params.entity_table()?,
        relations: params.relation_table()?,
        log,
    })
}
