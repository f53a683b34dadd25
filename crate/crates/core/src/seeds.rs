//! Seed pairs of presumed-synonymous phrases and their connected components.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::data::{normalize_surface, PhraseId, PhraseKind, PhraseTable};
use crate::error::{Error, Result};
use crate::partition::Clustering;

/// Default URL-profile Jaccard threshold.
pub const URL_JACCARD_THRESHOLD: f64 = 0.015;

/// Unordered pairs of distinct phrases of one kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPairSet {
    kind: PhraseKind,
    pairs: BTreeSet<(PhraseId, PhraseId)>,
}

impl SeedPairSet {
    pub fn new(kind: PhraseKind) -> Self {
        Self {
            kind,
            pairs: BTreeSet::new(),
        }
    }

    pub fn kind(&self) -> PhraseKind {
        self.kind
    }

    /// Adds `{a, b}`; self-pairs are ignored. Returns whether the pair is new.
    pub fn insert(&mut self, a: PhraseId, b: PhraseId) -> bool {
        if a == b {
            return false;
        }
        self.pairs.insert((a.min(b), a.max(b)))
    }

    pub fn contains(&self, a: PhraseId, b: PhraseId) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs as `(smaller, larger)`, in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (PhraseId, PhraseId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn extend(&mut self, other: &SeedPairSet) {
        debug_assert_eq!(self.kind, other.kind);
        self.pairs.extend(other.pairs.iter().copied());
    }

    /// Writes `surface_a \t surface_b` lines.
    pub fn write<W: Write>(&self, mut w: W, table: &PhraseTable) -> std::io::Result<()> {
        for (a, b) in self.iter() {
            writeln!(w, "{}\t{}", table.surface(a), table.surface(b))?;
        }
        Ok(())
    }

    /// Reads a pair file against `table`; pairs naming unknown phrases are skipped.
    pub fn read<R: BufRead>(reader: R, origin: &Path, table: &PhraseTable) -> Result<Self> {
        let mut set = Self::new(table.kind());
        let mut skipped = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message: "expected `surface_a<TAB>surface_b`".into(),
            })?;
            match (table.lookup(a), table.lookup(b)) {
                (Some(a), Some(b)) => {
                    set.insert(a, b);
                }
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            log::info!("{}: skipped {skipped} pairs with unknown phrases", origin.display());
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>, table: &PhraseTable) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), path, table)
    }
}

/// Mention text → candidate entities with prior mapping probabilities.
#[derive(Debug, Clone, Default)]
pub struct MentionDictionary {
    entries: HashMap<String, Vec<(String, f64)>>,
}

impl MentionDictionary {
    pub fn insert(&mut self, mention: &str, entity: impl Into<String>, prior: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::domain(format!("prior {prior} outside [0, 1]")));
        }
        self.entries
            .entry(normalize_surface(mention))
            .or_default()
            .push((entity.into(), prior));
        Ok(())
    }

    /// The candidate with the largest prior; ties go to the smallest entity id.
    pub fn best_entity(&self, mention: &str) -> Option<&str> {
        self.entries
            .get(&normalize_surface(mention))?
            .iter()
            .max_by(|(ea, pa), (eb, pb)| pa.total_cmp(pb).then_with(|| eb.cmp(ea)))
            .map(|(e, _)| e.as_str())
    }

    /// Reads `mention \t entity_id \t prior` lines.
    pub fn read<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut dict = Self::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let f: Vec<&str> = line.split('\t').collect();
            let [mention, entity, prior] = f[..] else {
                return Err(err("expected `mention<TAB>entity<TAB>prior`".into()));
            };
            let prior: f64 = prior.trim().parse().map_err(|_| err(format!("bad prior `{prior}`")))?;
            dict.insert(mention, entity.trim(), prior)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(dict)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), path)
    }
}

/// Pairs every two phrases whose most likely dictionary entity coincides.
pub fn seeds_from_dictionary(table: &PhraseTable, dict: &MentionDictionary) -> SeedPairSet {
    let mut by_entity: BTreeMap<&str, Vec<PhraseId>> = BTreeMap::new();
    for p in table.phrases() {
        if let Some(e) = dict.best_entity(&p.surface) {
            by_entity.entry(e).or_default().push(p.id);
        }
    }
    let mut set = SeedPairSet::new(table.kind());
    for group in by_entity.values() {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                set.insert(a, b);
            }
        }
    }
    set
}

/// Phrase → set of result-page URLs.
#[derive(Debug, Clone, Default)]
pub struct UrlProfile {
    urls: BTreeMap<PhraseId, BTreeSet<String>>,
}

impl UrlProfile {
    pub fn add(&mut self, id: PhraseId, url: impl Into<String>) {
        self.urls.entry(id).or_default().insert(url.into());
    }

    pub fn get(&self, id: PhraseId) -> Option<&BTreeSet<String>> {
        self.urls.get(&id)
    }

    /// Reads `phrase_surface \t url` lines, keeping phrases known to `table`.
    pub fn read<R: BufRead>(reader: R, origin: &Path, table: &PhraseTable) -> Result<Self> {
        let mut profile = Self::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (surface, url) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                message: "expected `phrase<TAB>url`".into(),
            })?;
            if let Some(id) = table.lookup(surface) {
                profile.add(id, url.trim());
            }
        }
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>, table: &PhraseTable) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f), path, table)
    }
}

/// Pairs phrases whose URL sets have Jaccard similarity strictly above `threshold`.
///
/// Only pairs sharing at least one URL can pass a positive threshold, so
/// candidate pairs come from an inverted URL index.
pub fn seeds_from_urls(kind: PhraseKind, profile: &UrlProfile, threshold: f64) -> Result<SeedPairSet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::domain(format!("threshold {threshold} outside (0, 1]")));
    }
    let mut postings: BTreeMap<&str, Vec<PhraseId>> = BTreeMap::new();
    for (&id, urls) in &profile.urls {
        for u in urls {
            postings.entry(u).or_default().push(id);
        }
    }
    let mut shared: BTreeMap<(PhraseId, PhraseId), usize> = BTreeMap::new();
    for ids in postings.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                *shared.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    let mut set = SeedPairSet::new(kind);
    for ((a, b), inter) in shared {
        let union = profile.urls[&a].len() + profile.urls[&b].len() - inter;
        if union > 0 && inter as f64 / union as f64 > threshold {
            set.insert(a, b);
        }
    }
    Ok(set)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the seed graph over `universe`.
///
/// Phrases outside every pair become singletons; pairs touching phrases
/// outside `universe` are ignored.
pub fn seed_components(universe: &[PhraseId], seeds: &SeedPairSet) -> Clustering {
    let pos: HashMap<PhraseId, usize> = universe.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut uf = UnionFind::new(universe.len());
    for (a, b) in seeds.iter() {
        if let (Some(&i), Some(&j)) = (pos.get(&a), pos.get(&b)) {
            uf.union(i, j);
        }
    }
    let roots: Vec<usize> = (0..universe.len()).map(|i| uf.find(i)).collect();
    Clustering::from_assignment(universe.to_vec(), &roots)
}
