//! Hard partitions of a phrase set and gold entity labels.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::{normalize_surface, PhraseId, PhraseTable};
use crate::error::{Error, Result};

/// Relabels arbitrary cluster labels to `0..k` in order of first appearance.
pub fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// A partition of `element_ids` into `k` nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering<K = PhraseId> {
    element_ids: Vec<K>,
    assignment: Vec<usize>,
    k: usize,
}

impl<K> Clustering<K> {
    /// Builds a clustering from per-element labels, compacting them.
    pub fn from_assignment(element_ids: Vec<K>, labels: &[usize]) -> Self {
        assert_eq!(element_ids.len(), labels.len(), "one label per element");
        let (assignment, k) = compact_labels(labels);
        Self {
            element_ids,
            assignment,
            k,
        }
    }

    /// Builds a clustering from explicit groups; empty groups are dropped.
    pub fn from_groups(groups: Vec<Vec<K>>) -> Self {
        let mut element_ids = Vec::new();
        let mut labels = Vec::new();
        for (j, g) in groups.into_iter().enumerate() {
            for id in g {
                element_ids.push(id);
                labels.push(j);
            }
        }
        Self::from_assignment(element_ids, &labels)
    }

    pub fn len(&self) -> usize {
        self.element_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_ids.is_empty()
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn element_ids(&self) -> &[K] {
        &self.element_ids
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Element indices of every cluster, in cluster order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn groups(&self) -> Vec<Vec<&K>> {
        self.clusters()
            .into_iter()
            .map(|c| c.into_iter().map(|i| &self.element_ids[i]).collect())
            .collect()
    }

    /// `(element, cluster)` pairs.
    pub fn labelled(&self) -> impl Iterator<Item = (&K, usize)> {
        self.element_ids.iter().zip(self.assignment.iter().copied())
    }
}

/// Partial map from element to gold entity label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabels<K: Hash + Eq = PhraseId> {
    map: HashMap<K, String>,
}

impl<K: Hash + Eq> Default for GoldLabels<K> {
    fn default() -> Self {
        Self { map: HashMap::new() }
    }
}

impl<K: Hash + Eq> GoldLabels<K> {
    pub fn insert(&mut self, key: K, label: impl Into<String>) -> Option<String> {
        self.map.insert(key, label.into())
    }

    pub fn get(&self, key: &K) -> Option<&String> {
        self.map.get(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &String)> {
        self.map.iter()
    }
}

impl<K: Hash + Eq + Clone> GoldLabels<K> {
    /// Gold labels induced by a clustering: each cluster index becomes a label.
    pub fn from_clustering(c: &Clustering<K>) -> Self {
        let mut gold = Self::default();
        for (k, j) in c.labelled() {
            gold.insert(k.clone(), format!("c{j}"));
        }
        gold
    }
}

impl<K: Hash + Eq> FromIterator<(K, String)> for GoldLabels<K> {
    fn from_iter<I: IntoIterator<Item = (K, String)>>(iter: I) -> Self {
        Self {
            map: iter.into_iter().collect(),
        }
    }
}

/// Writes one line per cluster: `cluster_id \t member_surface_1 \t ...`.
pub fn write_clusters<W: Write>(
    mut w: W,
    clustering: &Clustering<PhraseId>,
    table: &PhraseTable,
) -> std::io::Result<()> {
    for (j, members) in clustering.groups().into_iter().enumerate() {
        write!(w, "{j}")?;
        for id in members {
            write!(w, "\t{}", table.surface(*id))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a cluster file into a clustering over normalized surfaces.
pub fn read_clusters<R: BufRead>(reader: R, origin: &Path) -> Result<Clustering<String>> {
    let mut groups = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        fields.next();
        let mut group = Vec::new();
        for m in fields.map(normalize_surface).filter(|m| !m.is_empty()) {
            if !seen.insert(m.clone()) {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    message: format!("`{m}` appears in more than one cluster"),
                });
            }
            group.push(m);
        }
        groups.push(group);
    }
    Ok(Clustering::from_groups(groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn compaction_follows_first_appearance() {
        assert_eq!(compact_labels(&[7, 3, 7, 9]), (vec![0, 1, 0, 2], 3));
    }

    #[test]
    fn groups_drop_empty_clusters() {
        let c = Clustering::from_groups(vec![vec!["a"], vec![], vec!["b", "c"]]);
        assert_eq!(c.k(), 2);
        assert_eq!(c.assignment(), &[0, 1, 1]);
        assert_eq!(c.clusters(), vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn cluster_file_round_trip() {
        let mut table = PhraseTable::new(crate::data::PhraseKind::Np);
        let ids: Vec<_> = ["a b", "c", "d"].iter().map(|s| table.intern(s).unwrap()).collect();
        let c = Clustering::from_assignment(ids, &[0, 1, 0]);
        let mut buf = Vec::new();
        write_clusters(&mut buf, &c, &table).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0\ta b\td\n1\tc\n");
        let back = read_clusters(Cursor::new(buf), Path::new("x")).unwrap();
        assert_eq!(back.k(), 2);
        assert_eq!(back.element_ids(), ["a b", "d", "c"]);
    }

    #[test]
    fn duplicate_member_is_rejected() {
        let err = read_clusters(Cursor::new("0\ta\n1\ta\n"), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
