//! Agglomerative clustering under cosine distance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::compact_labels;
use crate::scalar::Scalar;
use crate::vector::{cosine_with_norms, l2_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::Config(format!("unknown linkage `{other}`"))),
        }
    }
}

impl Linkage {
    /// Lance-Williams update of the distance from `r` to the union of `a` and `b`.
    #[inline]
    fn update<T: Scalar>(self, d_ra: T, d_rb: T, size_a: usize, size_b: usize) -> T {
        match self {
            Linkage::Single => d_ra.min(d_rb),
            Linkage::Complete => d_ra.max(d_rb),
            Linkage::Average => {
                let (na, nb) = (T::from_count(size_a), T::from_count(size_b));
                (na * d_ra + nb * d_rb) / (na + nb)
            }
        }
    }
}

/// Condensed upper-triangular distance matrix.
struct Condensed<T> {
    n: usize,
    d: Vec<T>,
}

impl<T: Scalar> Condensed<T> {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> T {
        self.d[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Merges clusters bottom-up until `k` remain.
///
/// Each step merges the closest pair of clusters; among equally close pairs
/// the one with the smallest `(i, j)` cluster indices wins, where a cluster is
/// indexed by its lowest element index. Labels are compacted in element order.
pub fn hac<T: Scalar>(embeddings: &[Vec<T>], k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("cannot cut {n} elements into {k} clusters")));
    }
    let norms: Vec<T> = embeddings.iter().map(|x| l2_norm(x)).collect();
    let mut dm = Condensed {
        n,
        d: Vec::with_capacity(n * n.saturating_sub(1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let c = if norms[i] > T::zero() && norms[j] > T::zero() {
                cosine_with_norms(&embeddings[i], norms[i], &embeddings[j], norms[j])
            } else {
                T::zero()
            };
            dm.d.push(T::one() - c);
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nn: Vec<Option<(usize, T)>> = vec![None; n];

    let nearest_after = |dm: &Condensed<T>, active: &[bool], r: usize| -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for s in (r + 1..n).filter(|&s| active[s]) {
            let d = dm.get(r, s);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((s, d));
            }
        }
        best
    };
    for (r, slot) in nn.iter_mut().enumerate() {
        *slot = nearest_after(&dm, &active, r);
    }

    for _ in 0..n - k {
        let mut pick: Option<(usize, usize, T)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((j, d)) = nn[i] {
                if pick.is_none_or(|(_, _, bd)| d < bd) {
                    pick = Some((i, j, d));
                }
            }
        }
        let (a, b, _) = pick.expect("at least two active clusters");
        for r in (0..n).filter(|&r| active[r] && r != a && r != b) {
            let v = linkage.update(dm.get(r, a), dm.get(r, b), size[a], size[b]);
            dm.set(r, a, v);
        }
        size[a] += size[b];
        active[b] = false;
        parent[b] = a;

        nn[b] = None;
        nn[a] = nearest_after(&dm, &active, a);
        for r in 0..n {
            if !active[r] || r == a {
                continue;
            }
            match nn[r] {
                Some((s, _)) if s == a || s == b => nn[r] = nearest_after(&dm, &active, r),
                Some((s, d)) if r < a => {
                    let da = dm.get(r, a);
                    if da < d || (da == d && a < s) {
                        nn[r] = Some((a, da));
                    }
                }
                _ => {}
            }
        }
    }

    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let labels: Vec<usize> = (0..n).map(root).collect();
    Ok(compact_labels(&labels).0)
}
