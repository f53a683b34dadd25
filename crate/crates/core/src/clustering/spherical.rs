//! Spherical K-Means building blocks: centroid (M) and assignment (E) steps.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{add_assign, cosine_with_norms, l2_norm, normalize_in_place, Norm};

/// Normalized sum of each cluster's members; `None` for empty clusters.
pub fn cluster_centers<T: Scalar>(
    embeddings: &[Vec<T>],
    assignment: &[usize],
    k: usize,
    norm: Norm,
) -> Vec<Option<Vec<T>>> {
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut first = vec![None; k];
    for (i, (x, &c)) in embeddings.iter().zip(assignment).enumerate() {
        add_assign(&mut sums[c], x);
        first[c].get_or_insert(i);
    }
    sums.into_iter()
        .zip(first)
        .map(|(mut s, f)| {
            let f = f?;
            // members cancelling out exactly: fall back to the first member's direction
            if normalize_in_place(&mut s, norm).is_err() {
                s = embeddings[f].clone();
                normalize_in_place(&mut s, norm).ok()?;
            }
            Some(s)
        })
        .collect()
}

/// Centroids from a (possibly foreign-view) assignment.
///
/// Empty clusters are refilled one at a time with the element that fits its
/// own cluster worst (lowest cosine), taken from clusters with more than one
/// member; `assignment` is updated accordingly.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn m_step<T: Scalar>(embeddings: &[Vec<T>], assignment: &mut [usize], k: usize, norm: Norm) -> Result<Vec<Vec<T>>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("cannot form {k} clusters from {n} elements")));
    }
    if assignment.len() != n || assignment.iter().any(|&c| c >= k) {
        return Err(Error::domain("assignment does not match embeddings or K"));
    }
    loop {
        let centers = cluster_centers(embeddings, assignment, k, norm);
        let Some(empty) = centers.iter().position(Option::is_none) else {
            return Ok(centers.into_iter().map(Option::unwrap).collect());
        };
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&c| sizes[c] += 1);
        let worst = (0..n)
            .filter(|&i| sizes[assignment[i]] > 1)
            .map(|i| {
                let c = centers[assignment[i]].as_ref().expect("nonempty cluster");
                let fit = cosine_with_norms(&embeddings[i], l2_norm(&embeddings[i]), c, l2_norm(c));
                (i, fit)
            })
            .fold(None, |best: Option<(usize, T)>, (i, fit)| match best {
                Some((_, bf)) if !(fit < bf) => best,
                _ => Some((i, fit)),
            })
            .map(|(i, _)| i)
            .expect("some cluster has two members when an empty one exists");
        assignment[worst] = empty;
    }
}

/// Index of the centroid with the highest cosine similarity; ties go to the lowest index.
#[inline]
pub(crate) fn nearest<T: Scalar>(x: &[T], centroids: &[Vec<T>], centroid_norms: &[T]) -> (usize, T) {
    let nx = l2_norm(x);
    let mut best = (0, -T::infinity());
    for (j, (c, &nc)) in centroids.iter().zip(centroid_norms).enumerate() {
        let s = cosine_with_norms(x, nx, c, nc);
        if s > best.1 {
            best = (j, s);
        }
    }
    best
}

/// Assigns every element to its most cosine-similar centroid.
pub fn e_step<T: Scalar>(embeddings: &[Vec<T>], centroids: &[Vec<T>]) -> Vec<usize> {
    let norms: Vec<T> = centroids.iter().map(|c| l2_norm(c)).collect();
    embeddings.par_iter().map(|x| nearest(x, centroids, &norms).0).collect()
}

/// `k` distinct elements drawn uniformly, normalized, as initial centroids.
pub fn random_init<T: Scalar, R: Rng + ?Sized>(
    embeddings: &[Vec<T>],
    k: usize,
    norm: Norm,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("cannot draw {k} centroids from {n} elements")));
    }
    sample(rng, n, k)
        .into_iter()
        .map(|i| crate::vector::normalize(&embeddings[i], norm))
        .collect()
}

/// k-means++ seeding with cosine distance as the sampling weight.
pub fn kmeans_pp_init<T: Scalar, R: Rng + ?Sized>(
    embeddings: &[Vec<T>],
    k: usize,
    norm: Norm,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    let n = embeddings.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("cannot draw {k} centroids from {n} elements")));
    }
    let norms: Vec<T> = embeddings.iter().map(|x| l2_norm(x)).collect();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dist: Vec<f64> = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        for i in 0..n {
            let d = (T::one() - cosine_with_norms(&embeddings[i], norms[i], &embeddings[last], norms[last]))
                .as_f64()
                .max(0.0);
            dist[i] = dist[i].min(d);
        }
        chosen.iter().for_each(|&c| dist[c] = 0.0);
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a centroid
            let rest: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            rest[rng.gen_range(0..rest.len())]
        };
        chosen.push(next);
    }
    chosen
        .into_iter()
        .map(|i| crate::vector::normalize(&embeddings[i], norm))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Number of M/E rounds performed after the initial assignment.
    pub steps: usize,
}

/// Single-view spherical K-Means from given initial centroids.
///
/// Runs an E-step, then up to `max_steps` M/E rounds, stopping once the
/// assignment no longer changes.
pub fn spherical_kmeans<T: Scalar>(
    embeddings: &[Vec<T>],
    init: Vec<Vec<T>>,
    max_steps: usize,
    norm: Norm,
) -> Result<KMeansFit<T>> {
    let k = init.len();
    let mut centroids = init;
    let mut assignment = e_step(embeddings, &centroids);
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        centroids = m_step(embeddings, &mut assignment, k, norm)?;
        let next = e_step(embeddings, &centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(KMeansFit {
        assignment,
        centroids,
        steps,
    })
}
