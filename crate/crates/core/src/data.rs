//! Triples, phrases, and source texts, plus the TSV ingestion that interns them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::GoldLabels;

/// Dense identifier of a phrase, unique within its [`PhraseKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhraseId(pub u32);

impl PhraseId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        PhraseId(u32::try_from(i).expect("phrase index fits in u32"))
    }
}

impl fmt::Display for PhraseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for PhraseId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.parse().map(PhraseId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhraseKind {
    /// Noun phrase (subject or object of a triple).
    Np,
    /// Relation phrase.
    Rp,
}

impl fmt::Display for PhraseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhraseKind::Np => "np",
            PhraseKind::Rp => "rp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub id: PhraseId,
    pub kind: PhraseKind,
    /// Lowercased, whitespace-collapsed surface form.
    pub surface: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceText {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub id: u64,
    pub subject: PhraseId,
    pub relation: PhraseId,
    pub object: PhraseId,
    pub source_id: u64,
    pub gold_subject: Option<String>,
    pub gold_object: Option<String>,
}

/// Lowercases, splits on whitespace and strips punctuation at token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Canonical surface key: lowercase with single spaces.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Interning table for one phrase kind.
#[derive(Debug, Clone)]
pub struct PhraseTable {
    kind: PhraseKind,
    phrases: Vec<Phrase>,
    index: HashMap<String, PhraseId>,
}

impl PhraseTable {
    pub fn new(kind: PhraseKind) -> Self {
        Self {
            kind,
            phrases: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn kind(&self) -> PhraseKind {
        self.kind
    }

    /// Returns the id of `surface`, allocating one on first sight.
    pub fn intern(&mut self, surface: &str) -> Result<PhraseId> {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Err(Error::Integrity(format!("empty {} surface", self.kind)));
        }
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let id = PhraseId::from_index(self.phrases.len());
        let mut tokens = tokenize(&key);
        if tokens.is_empty() {
            tokens = key.split(' ').map(str::to_owned).collect();
        }
        self.phrases.push(Phrase {
            id,
            kind: self.kind,
            surface: key.clone(),
            tokens,
        });
        self.index.insert(key, id);
        Ok(id)
    }

    pub fn lookup(&self, surface: &str) -> Option<PhraseId> {
        self.index.get(&normalize_surface(surface)).copied()
    }

    pub fn get(&self, id: PhraseId) -> Option<&Phrase> {
        self.phrases.get(id.index())
    }

    pub fn surface(&self, id: PhraseId) -> &str {
        &self.phrases[id.index()].surface
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn ids(&self) -> Vec<PhraseId> {
        self.phrases.iter().map(|p| p.id).collect()
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// An ingested open knowledge base.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub nps: PhraseTable,
    pub rps: PhraseTable,
    pub triples: Vec<Triple>,
    pub sources: BTreeMap<u64, SourceText>,
}

impl Default for Dataset {
    fn default() -> Self {
        Self {
            nps: PhraseTable::new(PhraseKind::Np),
            rps: PhraseTable::new(PhraseKind::Rp),
            triples: Vec::new(),
            sources: BTreeMap::new(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

impl Dataset {
    /// Loads a triple file and its companion source-text file.
    pub fn load(triples: impl AsRef<Path>, sources: impl AsRef<Path>) -> Result<Self> {
        let (tp, sp) = (triples.as_ref(), sources.as_ref());
        let sources = read_sources(open(sp)?, sp)?;
        Self::from_reader(open(tp)?, tp, sources)
    }

    /// Parses triple records from `reader`; `origin` is only used in error messages.
    pub fn from_reader<R: BufRead>(
        reader: R,
        origin: impl Into<PathBuf>,
        sources: BTreeMap<u64, SourceText>,
    ) -> Result<Self> {
        let origin = origin.into();
        let mut ds = Dataset {
            sources,
            ..Default::default()
        };
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(&origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(5..=7).contains(&fields.len()) {
                return Err(parse_err(
                    &origin,
                    lineno,
                    format!("expected 5 to 7 tab-separated fields, found {}", fields.len()),
                ));
            }
            let id: u64 = fields[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(&origin, lineno, format!("bad triple id `{}`", fields[0])))?;
            let source_id: u64 = fields[4]
                .trim()
                .parse()
                .map_err(|_| parse_err(&origin, lineno, format!("bad source id `{}`", fields[4])))?;
            if !ds.sources.contains_key(&source_id) {
                return Err(Error::Integrity(format!(
                    "{}:{lineno}: triple {id} references unknown source {source_id}",
                    origin.display()
                )));
            }
            let subject = ds
                .nps
                .intern(fields[1])
                .map_err(|e| parse_err(&origin, lineno, e.to_string()))?;
            let relation = ds
                .rps
                .intern(fields[2])
                .map_err(|e| parse_err(&origin, lineno, e.to_string()))?;
            let object = ds
                .nps
                .intern(fields[3])
                .map_err(|e| parse_err(&origin, lineno, e.to_string()))?;
            let gold = |i: usize| {
                fields
                    .get(i)
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
            };
            ds.triples.push(Triple {
                id,
                subject,
                relation,
                object,
                source_id,
                gold_subject: gold(5),
                gold_object: gold(6),
            });
        }
        Ok(ds)
    }

    pub fn source(&self, id: u64) -> Option<&SourceText> {
        self.sources.get(&id)
    }

    pub fn table(&self, kind: PhraseKind) -> &PhraseTable {
        match kind {
            PhraseKind::Np => &self.nps,
            PhraseKind::Rp => &self.rps,
        }
    }

    /// Gold entity labels for noun phrases, taken from annotated triples.
    ///
    /// The first label seen for a phrase wins; conflicting later labels are logged.
    pub fn np_gold(&self) -> GoldLabels {
        let mut gold = GoldLabels::default();
        for t in &self.triples {
            for (id, label) in [(t.subject, &t.gold_subject), (t.object, &t.gold_object)] {
                let Some(label) = label else { continue };
                match gold.get(&id) {
                    Some(prev) if prev != label => log::warn!(
                        "np `{}` labelled both `{prev}` and `{label}`; keeping the first",
                        self.nps.surface(id)
                    ),
                    Some(_) => {}
                    None => {
                        gold.insert(id, label.clone());
                    }
                }
            }
        }
        gold
    }
}

/// Reads `source_id \t text` lines.
pub fn read_sources<R: BufRead>(reader: R, origin: &Path) -> Result<BTreeMap<u64, SourceText>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(origin, lineno, "expected `source_id<TAB>text`"))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| parse_err(origin, lineno, format!("bad source id `{id}`")))?;
        if text.trim().is_empty() {
            return Err(parse_err(origin, lineno, "empty source text"));
        }
        out.insert(
            id,
            SourceText {
                id,
                text: text.to_owned(),
            },
        );
    }
    Ok(out)
}
