//! Per-view embedding tables and their plain-text persistence.
//!
//! The text format is a header line `n p` followed by `n` rows
//! `key v1 ... vp`, separated by single spaces. Word-vector files and
//! phrase-embedding checkpoints share it.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PhraseId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{add_assign, normalize_in_place, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    Fact,
    Context,
    Base,
}

/// Map from key to a fixed-dimension vector.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T, K = PhraseId> {
    view: View,
    dim: usize,
    keys: Vec<K>,
    index: HashMap<K, usize>,
    data: Vec<T>,
}

impl<T: PartialEq, K: PartialEq> PartialEq for EmbeddingTable<T, K> {
    fn eq(&self, other: &Self) -> bool {
        self.view == other.view && self.dim == other.dim && self.keys == other.keys && self.data == other.data
    }
}

/// Token-keyed base vectors.
pub type WordVectors<T> = EmbeddingTable<T, String>;

impl<T: Scalar, K: Hash + Eq + Clone> EmbeddingTable<T, K> {
    pub fn new(view: View, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("embedding dimension must be positive".into()));
        }
        Ok(Self {
            view,
            dim,
            keys: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    /// Inserts or replaces `key`. Returns `true` when an entry was replaced.
    pub fn insert(&mut self, key: K, values: &[T]) -> Result<bool> {
        if values.len() != self.dim {
            return Err(Error::Format(format!(
                "vector of dimension {} in a table of dimension {}",
                values.len(),
                self.dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite vector entry".into()));
        }
        if let Some(&row) = self.index.get(&key) {
            self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(values);
            return Ok(true);
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(values);
        Ok(false)
    }

    pub fn get(&self, key: &K) -> Option<&[T]> {
        self.index
            .get(key)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[K] {
        &self.keys
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&K, &[T])> {
        self.keys.iter().zip(self.data.chunks_exact(self.dim))
    }

    /// Rescales every entry to unit length under `norm`.
    pub fn normalize_all(&mut self, norm: Norm) -> Result<()> {
        self.data
            .chunks_exact_mut(self.dim)
            .try_for_each(|row| normalize_in_place(row, norm))
    }

    /// Copies out the vectors of `keys`, in order.
    pub fn rows<Q>(&self, keys: &[Q]) -> Result<Vec<Vec<T>>>
    where
        Q: std::borrow::Borrow<K> + std::fmt::Debug,
    {
        keys.iter()
            .map(|k| {
                self.get(k.borrow())
                    .map(<[T]>::to_vec)
                    .ok_or_else(|| Error::Lookup(format!("no embedding for {k:?}")))
            })
            .collect()
    }

    pub fn from_rows(view: View, keys: Vec<K>, rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut table = Self::new(view, dim)?;
        for (k, r) in keys.into_iter().zip(rows) {
            table.insert(k, r)?;
        }
        Ok(table)
    }
}

impl<T: Scalar, K: Hash + Eq + Clone + Display> EmbeddingTable<T, K> {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (k, v) in self.iter() {
            write!(w, "{k}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_text(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Result of parsing an embedding file.
#[derive(Debug, Clone)]
pub struct Loaded<T, K> {
    pub table: EmbeddingTable<T, K>,
    /// Keys that occurred more than once; the last occurrence was kept.
    pub duplicates: Vec<K>,
}

fn read_rows<T, K, R, F>(reader: R, origin: &Path, view: View, mut key: F) -> Result<Loaded<T, K>>
where
    T: Scalar,
    K: Hash + Eq + Clone + std::fmt::Debug,
    R: BufRead,
    F: FnMut(&str) -> Option<K>,
{
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(Error::Format(format!("{}: missing header", origin.display()))),
            Some((_, l)) => {
                let l = l.map_err(|e| Error::io(origin, e))?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    let hdr: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("{}: bad header `{header}`", origin.display())))?;
    let [expected_rows, dim] = hdr[..] else {
        return Err(Error::Format(format!(
            "{}: header must be `n p`, got `{header}`",
            origin.display()
        )));
    };
    let mut table = EmbeddingTable::new(view, dim)?;
    let mut duplicates = Vec::new();
    let mut values = Vec::with_capacity(dim);
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut fields = line.split_whitespace();
        let Some(raw_key) = fields.next() else { continue };
        let fail = |msg: String| Error::Format(format!("{}:{}: {msg}", origin.display(), lineno + 1));
        let k = key(raw_key).ok_or_else(|| fail(format!("bad key `{raw_key}`")))?;
        values.clear();
        for f in fields {
            let x: f64 = f.parse().map_err(|_| fail(format!("bad value `{f}`")))?;
            values.push(T::lit(x));
        }
        if values.len() != dim {
            return Err(fail(format!("expected {dim} values, found {}", values.len())));
        }
        if table.insert(k.clone(), &values).map_err(|e| fail(e.to_string()))? {
            log::warn!("{}: duplicate key {k:?}; last occurrence wins", origin.display());
            duplicates.push(k);
        }
    }
    if table.len() + duplicates.len() != expected_rows {
        log::warn!(
            "{}: header announces {expected_rows} rows, read {}",
            origin.display(),
            table.len() + duplicates.len()
        );
    }
    Ok(Loaded { table, duplicates })
}

/// Parses the text format with keys of any `FromStr` type.
pub fn read_embeddings<T, K, R>(reader: R, origin: &Path, view: View) -> Result<Loaded<T, K>>
where
    T: Scalar,
    K: Hash + Eq + Clone + std::fmt::Debug + FromStr,
    R: BufRead,
{
    read_rows(reader, origin, view, |s| s.parse().ok())
}

pub fn load_embeddings<T, K>(path: impl AsRef<Path>, view: View) -> Result<EmbeddingTable<T, K>>
where
    T: Scalar,
    K: Hash + Eq + Clone + std::fmt::Debug + FromStr,
{
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f), path, view).map(|l| l.table)
}

/// Parses a word-vector file; tokens are lowercased.
pub fn read_word_vectors<T: Scalar, R: BufRead>(reader: R, origin: &Path) -> Result<Loaded<T, String>> {
    read_rows(reader, origin, View::Base, |s| Some(s.to_lowercase()))
}

pub fn load_word_vectors<T: Scalar>(path: impl AsRef<Path>) -> Result<WordVectors<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_vectors(BufReader::new(f), path).map(|l| l.table)
}

/// Mean of the vectors of the tokens present in `base`.
///
/// Returns the vector and whether `fallback` had to be used because no token was found.
pub fn embed_phrase_avg<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    base: &WordVectors<T>,
    fallback: &[T],
) -> (Vec<T>, bool) {
    let mut acc = vec![T::zero(); base.dim()];
    let mut found = 0usize;
    for t in tokens {
        if let Some(v) = base.get(&t.as_ref().to_lowercase()) {
            add_assign(&mut acc, v);
            found += 1;
        }
    }
    if found == 0 {
        return (fallback.to_vec(), true);
    }
    let n = T::from_count(found);
    acc.iter_mut().for_each(|x| *x = *x / n);
    (acc, false)
}

/// Unit-normalized averaged word vectors for every phrase of `table`,
/// padded with zeros or truncated to `dim`.
///
/// Phrases with no known token, or whose average is zero, get a random unit
/// vector from `rng`. Returns the rows (indexed by phrase id) and the number
/// of phrases that needed the fallback.
pub fn phrase_base_vectors<T: Scalar, R: rand::Rng + ?Sized>(
    table: &crate::data::PhraseTable,
    base: &WordVectors<T>,
    dim: usize,
    norm: Norm,
    rng: &mut R,
) -> (Vec<Vec<T>>, usize) {
    let mut fallbacks = 0;
    let rows = table
        .phrases()
        .iter()
        .map(|ph| {
            let fallback = crate::vector::random_unit_vector(dim, norm, rng);
            let (avg, missed) = embed_phrase_avg(&ph.tokens, base, &fallback);
            let mut v = avg;
            v.resize(dim, T::zero());
            if missed || normalize_in_place(&mut v, norm).is_err() {
                fallbacks += 1;
                return fallback;
            }
            v
        })
        .collect();
    (rows, fallbacks)
}
