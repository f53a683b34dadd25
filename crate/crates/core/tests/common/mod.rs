//! Synthetic data shared by the integration tests.
#![allow(dead_code)]

use okbcanon::clustering::{kmeans_pp_init, spherical_kmeans};
use okbcanon::eval::{Aligned, MetricReport};
use okbcanon::rng::seeded;
use okbcanon::Norm;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian<R: Rng>(rng: &mut R, p: usize, scale: f64) -> Vec<f64> {
    (0..p)
        .map(|_| StandardNormal.sample(rng))
        .map(|x: f64| x * scale)
        .collect()
}

/// Balanced mixture of `g` Gaussians with means `N(0, sep^2 I)` and unit noise.
pub fn mixture(g: usize, p: usize, n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = seeded(seed, 0);
    let means: Vec<Vec<f64>> = (0..g).map(|_| gaussian(&mut rng, p, sep)).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let j = i % g;
        let noise = gaussian(&mut rng, p, 1.0);
        x.push(means[j].iter().zip(noise).map(|(m, e)| m + e).collect());
        y.push(j);
    }
    (x, y)
}

/// Two views of `k` planted clusters where each view only sees a coarsening
/// of the labels: `view_groups[v][j]` is the group of cluster `j` in view `v`.
pub fn two_view(
    view_groups: [&[usize]; 2],
    n: usize,
    p: usize,
    sep: f64,
    noise: f64,
    seed: u64,
) -> ([Vec<Vec<f64>>; 2], Vec<usize>) {
    let k = view_groups[0].len();
    let mut rng = seeded(seed, 0);
    let means: [Vec<Vec<f64>>; 2] = [0, 1].map(|v| {
        let groups = view_groups[v].iter().max().unwrap() + 1;
        (0..groups).map(|_| gaussian(&mut rng, p, sep)).collect()
    });
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let views = [0, 1].map(|v| {
        labels
            .iter()
            .map(|&j| {
                let m = &means[v][view_groups[v][j]];
                let e = gaussian(&mut rng, p, noise);
                m.iter().zip(e).map(|(a, b)| a + b).collect()
            })
            .collect()
    });
    (views, labels)
}

pub fn average_f1(pred: &[usize], gold: &[usize]) -> f64 {
    MetricReport::from_aligned(&Aligned::new(pred, gold).unwrap()).average_f1
}

/// Single-view spherical K-Means from a k-means++ start.
pub fn single_view(x: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let init = kmeans_pp_init(x, k, Norm::L1, &mut seeded(seed, 7)).unwrap();
    spherical_kmeans(x, init, 100, Norm::L1).unwrap().assignment
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
