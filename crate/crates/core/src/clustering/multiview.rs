//! Two-view co-EM spherical K-Means with Calinski-Harabasz weighted fusion.

use rand::Rng;
use serde::Serialize;

use super::spherical::{cluster_centers, e_step, m_step, nearest, random_init};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{cosine_with_norms, l2_norm, squared_euclidean, Norm};

/// Floor applied to the within-cluster dispersion of the CH index.
pub const CH_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MvcConfig {
    pub k: usize,
    /// Maximum number of single-view M/E rounds (`t` in the co-EM loop).
    pub max_iter: usize,
    pub tol: f64,
    pub norm: Norm,
}

impl MvcConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iter: 10,
            tol: 1e-4,
            norm: Norm::L1,
        }
    }
}

/// Loss of one view after a full co-EM round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub iter: usize,
    /// 1 or 2.
    pub view: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult<T> {
    /// Final per-element cluster index in `0..k` (some clusters may be empty).
    pub assignment: Vec<usize>,
    pub view_assignments: [Vec<usize>; 2],
    pub centroids: [Vec<Vec<T>>; 2],
    pub consensus: [Vec<Vec<T>>; 2],
    pub ch: [T; 2],
    /// Total loss after every full round, in order.
    pub losses: Vec<T>,
    pub trace: Vec<LossRecord>,
    /// Value of the round counter `t` at termination.
    pub t: usize,
}

/// Sum of `1 - cos` between every element and its centroid, for one view.
pub fn view_loss<T: Scalar>(embeddings: &[Vec<T>], centroids: &[Vec<T>], assignment: &[usize]) -> T {
    let norms: Vec<T> = centroids.iter().map(|c| l2_norm(c)).collect();
    embeddings
        .iter()
        .zip(assignment)
        .map(|(x, &j)| T::one() - cosine_with_norms(x, l2_norm(x), &centroids[j], norms[j]))
        .sum()
}

/// Co-EM objective summed over both views.
pub fn mvc_loss<T: Scalar>(embeddings: [&[Vec<T>]; 2], centroids: [&[Vec<T>]; 2], assignments: [&[usize]; 2]) -> T {
    (0..2)
        .map(|v| view_loss(embeddings[v], centroids[v], assignments[v]))
        .sum()
}

/// Per-view means over the elements both views place in the same cluster.
///
/// Clusters with no agreeing element keep the corresponding `fallback` centroid.
pub fn consensus_means<T: Scalar>(
    assignments: [&[usize]; 2],
    embeddings: [&[Vec<T>]; 2],
    fallback: [&[Vec<T>]; 2],
    k: usize,
    norm: Norm,
) -> [Vec<Vec<T>>; 2] {
    // elements outside the agreement set go to a sentinel cluster `k`
    let agreed: Vec<usize> = assignments[0]
        .iter()
        .zip(assignments[1])
        .map(|(&a, &b)| if a == b { a } else { k })
        .collect();
    let mean = |v: usize| -> Vec<Vec<T>> {
        cluster_centers(embeddings[v], &agreed, k + 1, norm)
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(j, m)| m.unwrap_or_else(|| fallback[v][j].clone()))
            .collect()
    };
    [mean(0), mean(1)]
}

/// Calinski-Harabasz index of `assignment` given its cluster `centers`.
///
/// Distances are squared Euclidean; the global center is the arithmetic mean
/// of all embeddings. Empty clusters contribute nothing.
pub fn ch_index<T: Scalar>(embeddings: &[Vec<T>], assignment: &[usize], centers: &[Vec<T>]) -> Result<T> {
    let n = embeddings.len();
    let k = centers.len();
    if k < 2 {
        return Err(Error::domain("CH index needs at least two clusters"));
    }
    if n <= k {
        return Err(Error::domain(format!("CH index needs more than {k} elements, got {n}")));
    }
    let dim = embeddings[0].len();
    let mut global = vec![T::zero(); dim];
    embeddings
        .iter()
        .for_each(|x| crate::vector::add_assign(&mut global, x));
    let nf = T::from_count(n);
    global.iter_mut().for_each(|g| *g = *g / nf);

    let mut sizes = vec![0usize; k];
    let mut within = T::zero();
    for (x, &j) in embeddings.iter().zip(assignment) {
        sizes[j] += 1;
        within = within + squared_euclidean(x, &centers[j]);
    }
    let between: T = centers
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| T::from_count(s) * squared_euclidean(c, &global))
        .sum();
    let within = within.max(T::lit(CH_DENOMINATOR_FLOOR));
    Ok(between / within * T::from_count(n - k) / T::from_count(k - 1))
}

/// CH index with centers recomputed from `assignment` as normalized sums.
pub fn ch_index_of<T: Scalar>(embeddings: &[Vec<T>], assignment: &[usize], k: usize, norm: Norm) -> Result<T> {
    let dim = embeddings.first().map_or(0, Vec::len);
    let centers: Vec<Vec<T>> = cluster_centers(embeddings, assignment, k, norm)
        .into_iter()
        .map(|c| c.unwrap_or_else(|| vec![T::zero(); dim]))
        .collect();
    ch_index(embeddings, assignment, &centers)
}

/// Assigns each element to the cluster maximizing the CH-weighted sum of
/// per-view cosine similarities to the consensus means; ties go to the lowest index.
pub fn final_assign<T: Scalar>(
    consensus: [&[Vec<T>]; 2],
    weights: [T; 2],
    embeddings: [&[Vec<T>]; 2],
) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w <= T::zero()) {
        return Err(Error::domain("view weights must be finite and positive"));
    }
    let k = consensus[0].len();
    if consensus[1].len() != k || embeddings[0].len() != embeddings[1].len() {
        return Err(Error::domain("views disagree on K or element count"));
    }
    let norms: [Vec<T>; 2] = [0, 1].map(|v| consensus[v].iter().map(|m| l2_norm(m)).collect());
    Ok((0..embeddings[0].len())
        .map(|i| {
            let xn = [l2_norm(&embeddings[0][i]), l2_norm(&embeddings[1][i])];
            let mut best = (0, -T::infinity());
            for j in 0..k {
                let score: T = (0..2)
                    .map(|v| weights[v] * cosine_with_norms(&embeddings[v][i], xn[v], &consensus[v][j], norms[v][j]))
                    .sum();
                if score > best.1 {
                    best = (j, score);
                }
            }
            best.0
        })
        .collect())
}

/// Co-EM loop from given view-2 initial centroids.
pub fn mv_ch_kmeans_from<T: Scalar>(
    view1: &[Vec<T>],
    view2: &[Vec<T>],
    init2: Vec<Vec<T>>,
    cfg: &MvcConfig,
) -> Result<FusionResult<T>> {
    let k = cfg.k;
    let embeddings = [view1, view2];
    let mut centroids: [Vec<Vec<T>>; 2] = [Vec::new(), init2];
    let mut assignments: [Vec<usize>; 2] = [Vec::new(), e_step(view2, &centroids[1])];
    let mut t = 0;
    let mut losses = Vec::new();
    let mut trace = Vec::new();
    loop {
        for v in 0..2 {
            t += 1;
            let mut other = assignments[1 - v].clone();
            centroids[v] = m_step(embeddings[v], &mut other, k, cfg.norm)?;
            assignments[v] = e_step(embeddings[v], &centroids[v]);
        }
        let iter = losses.len() + 1;
        let per_view: [T; 2] = [0, 1].map(|v| view_loss(embeddings[v], &centroids[v], &assignments[v]));
        for (v, l) in per_view.iter().enumerate() {
            trace.push(LossRecord {
                iter,
                view: v + 1,
                loss: l.as_f64(),
            });
        }
        let loss = per_view[0] + per_view[1];
        losses.push(loss);
        log::debug!("co-em round {iter}: loss {loss}");
        if t >= cfg.max_iter || loss.as_f64() < cfg.tol {
            break;
        }
    }

    let consensus = consensus_means(
        [&assignments[0], &assignments[1]],
        embeddings,
        [&centroids[0], &centroids[1]],
        k,
        cfg.norm,
    );
    let ch = [0, 1].map(|v| match ch_index_of(embeddings[v], &assignments[v], k, cfg.norm) {
        Ok(c) if c.is_finite() && c > T::zero() => c,
        Ok(c) => {
            log::warn!("view {} CH index {c} is not positive; using a negligible weight", v + 1);
            T::lit(CH_DENOMINATOR_FLOOR)
        }
        Err(e) => {
            log::warn!("view {} CH index unavailable ({e}); using unit weight", v + 1);
            T::one()
        }
    });
    let assignment = final_assign([&consensus[0], &consensus[1]], ch, embeddings)?;
    Ok(FusionResult {
        assignment,
        view_assignments: assignments,
        centroids,
        consensus,
        ch,
        losses,
        trace,
        t,
    })
}

/// Multi-view CH K-Means. View-2 centroids start at `k` distinct random elements.
pub fn mv_ch_kmeans<T: Scalar, R: Rng + ?Sized>(
    view1: &[Vec<T>],
    view2: &[Vec<T>],
    cfg: &MvcConfig,
    rng: &mut R,
) -> Result<FusionResult<T>> {
    if view1.len() != view2.len() {
        return Err(Error::domain(format!(
            "views cover {} and {} elements",
            view1.len(),
            view2.len()
        )));
    }
    if cfg.k < 2 {
        return Err(Error::domain("multi-view clustering needs K >= 2"));
    }
    if cfg.k > view1.len() {
        return Err(Error::domain(format!(
            "K = {} exceeds the {} elements",
            cfg.k,
            view1.len()
        )));
    }
    let init = random_init(view2, cfg.k, cfg.norm, rng)?;
    mv_ch_kmeans_from(view1, view2, init, cfg)
}

/// Nearest-centroid lookup exposed for callers holding their own centroids.
pub fn assign_to<T: Scalar>(x: &[T], centroids: &[Vec<T>]) -> usize {
    let norms: Vec<T> = centroids.iter().map(|c| l2_norm(c)).collect();
    nearest(x, centroids, &norms).0
}
