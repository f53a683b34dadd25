mod common;

use std::collections::BTreeSet;

use common::{gaussian, mixture};
use okbcanon::clustering::{
    ch_index, e_step, final_assign, hac, kmeans_pp_init, mv_ch_kmeans, mv_ch_kmeans_from, mvc_loss, random_init,
    spherical_kmeans, Linkage, MvcConfig,
};
use okbcanon::rng::seeded;
use okbcanon::vector::cosine_sim;
use okbcanon::{Error, Norm};
use rand::Rng;

/// Partition as a set of member sets, independent of label names.
fn blocks(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut out = std::collections::BTreeMap::<usize, BTreeSet<usize>>::new();
    for (i, &l) in labels.iter().enumerate() {
        out.entry(l).or_default().insert(i);
    }
    out.into_values().collect()
}

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_sim(a, b).unwrap()
}

/// Agglomeration recomputing every cluster distance from member pairs.
fn naive_hac(x: &[Vec<f64>], k: usize, linkage: Linkage) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..x.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let ds: Vec<f64> = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| cos_dist(&x[i], &x[j]))
                    .collect();
                let d = match linkage {
                    Linkage::Single => ds.iter().copied().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => ds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Average => ds.iter().sum::<f64>() / ds.len() as f64,
                };
                if best.is_none_or(|(_, _, bd)| d < bd - 1e-12) {
                    best = Some((a, b, d));
                }
            }
        }
        let (a, b, _) = best.unwrap();
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    let mut labels = vec![0; x.len()];
    for (j, c) in clusters.iter().enumerate() {
        c.iter().for_each(|&i| labels[i] = j);
    }
    labels
}

#[test]
fn hac_recovers_planted_groups() {
    let x = vec![
        vec![1.0, 0.05],
        vec![0.02, 1.0],
        vec![0.97, 0.1],
        vec![0.1, 0.95],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
    ];
    let labels = hac(&x, 2, Linkage::Average).unwrap();
    assert_eq!(blocks(&labels), blocks(&[0, 1, 0, 1, 0, 1]));

    // exhaustive: the planted split has the lowest mean within-cluster distance
    let within = |lab: &[usize]| {
        let (mut s, mut c) = (0.0, 0);
        for i in 0..6 {
            for j in i + 1..6 {
                if lab[i] == lab[j] {
                    s += cos_dist(&x[i], &x[j]);
                    c += 1;
                }
            }
        }
        s / c as f64
    };
    let best = (1..32usize)
        .map(|mask| {
            (0..6)
                .map(|i| if i == 0 { 0 } else { (mask >> (i - 1)) & 1 })
                .collect::<Vec<_>>()
        })
        .min_by(|a, b| within(a).total_cmp(&within(b)))
        .unwrap();
    assert_eq!(blocks(&labels), blocks(&best));
}

#[test]
fn hac_matches_naive_agglomeration() {
    let mut rng = seeded(21, 0);
    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        for _ in 0..20 {
            let n = rng.gen_range(2..14);
            let x: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, 3, 1.0)).collect();
            let k = rng.gen_range(1..=n);
            let got = hac(&x, k, linkage).unwrap();
            assert_eq!(
                blocks(&got),
                blocks(&naive_hac(&x, k, linkage)),
                "{linkage:?} n={n} k={k}"
            );
        }
    }
}

#[test]
fn e_step_is_optimal_and_scale_invariant() {
    let mut rng = seeded(22, 0);
    let x: Vec<Vec<f64>> = (0..200).map(|_| gaussian(&mut rng, 4, 1.0)).collect();
    let c: Vec<Vec<f64>> = (0..5).map(|_| gaussian(&mut rng, 4, 1.0)).collect();
    let a = e_step(&x, &c);
    for (xi, &j) in x.iter().zip(&a) {
        let own = cosine_sim(xi, &c[j]).unwrap();
        assert!(c.iter().all(|cl| cosine_sim(xi, cl).unwrap() <= own));
    }
    let scaled: Vec<Vec<f64>> = c
        .iter()
        .enumerate()
        .map(|(j, v)| v.iter().map(|t| t * (j as f64 + 0.5) * 3.0).collect())
        .collect();
    assert_eq!(e_step(&x, &scaled), a);
}

#[test]
fn final_assign_matches_weighted_argmax_and_ignores_scale() {
    let mut rng = seeded(23, 0);
    let views: [Vec<Vec<f64>>; 2] = [0, 1].map(|_| (0..50).map(|_| gaussian(&mut rng, 3, 1.0)).collect());
    let means: [Vec<Vec<f64>>; 2] = [0, 1].map(|_| (0..4).map(|_| gaussian(&mut rng, 3, 1.0)).collect());
    let w = [1.7, 0.4];
    let got = final_assign([&means[0], &means[1]], w, [&views[0], &views[1]]).unwrap();
    for i in 0..50 {
        let score = |j: usize| {
            (0..2)
                .map(|v| w[v] * cosine_sim(&views[v][i], &means[v][j]).unwrap())
                .sum::<f64>()
        };
        let best = (0..4).fold(0, |b, j| if score(j) > score(b) { j } else { b });
        assert_eq!(got[i], best);
    }
    let scaled = means[1]
        .iter()
        .map(|m| m.iter().map(|t| t * 9.0).collect())
        .collect::<Vec<Vec<f64>>>();
    assert_eq!(
        final_assign([&means[0], &scaled], w, [&views[0], &views[1]]).unwrap(),
        got
    );
}

#[test]
fn ch_index_matches_direct_formula() {
    let x = vec![vec![0.0, 0.0], vec![0.2, 0.0], vec![5.0, 5.0], vec![5.0, 5.2]];
    let a = [0, 0, 1, 1];
    let centers = vec![vec![0.1, 0.0], vec![5.0, 5.1]];
    let global = [2.55, 2.55];
    let sq = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let between = 2.0 * sq(&centers[0], &global) + 2.0 * sq(&centers[1], &global);
    let within: f64 = x.iter().zip(a).map(|(p, j)| sq(p, &centers[j])).sum();
    let expected = between / within * (4.0 - 2.0) / (2.0 - 1.0);
    let got = ch_index(&x, &a, &centers).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected);

    let tight = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let v: f64 = ch_index(&tight, &[0, 0, 1], &c).unwrap();
    assert!(v.is_finite() && v > 1e9);
    assert!(matches!(
        ch_index(&x, &[0, 0, 0, 0], &centers[..1]),
        Err(Error::Domain(_))
    ));
}

#[test]
fn identical_views_reduce_to_single_view_kmeans() {
    for s in 0..5 {
        let (x, _) = mixture(4, 6, 120, 3.0, 40 + s);
        let init = random_init(&x, 4, Norm::L1, &mut seeded(s, 0)).unwrap();
        let cfg = MvcConfig {
            max_iter: 40,
            tol: 0.0,
            ..MvcConfig::new(4)
        };
        let fused = mv_ch_kmeans_from(&x, &x, init.clone(), &cfg).unwrap();
        let single = spherical_kmeans(&x, init, 40, Norm::L1).unwrap();
        assert_eq!(fused.view_assignments[1], single.assignment, "seed {s}");
    }
}

#[test]
fn planted_partition_recovered_exactly() {
    let mut rng = seeded(24, 0);
    let x: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let base = if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
            base.iter().map(|b| b + 0.05 * rng.gen_range(-1.0..1.0)).collect()
        })
        .collect();
    let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
    for s in 0..5 {
        let r = mv_ch_kmeans(&x, &x, &MvcConfig::new(2), &mut seeded(s, 0)).unwrap();
        assert_eq!(blocks(&r.assignment), blocks(&truth));
    }
}

#[test]
fn k_equal_to_n_gives_singletons() {
    let x = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.2]];
    let r = mv_ch_kmeans(&x, &x, &MvcConfig::new(4), &mut seeded(3, 0)).unwrap();
    assert_eq!(blocks(&r.assignment).len(), 4);
    assert!(mv_ch_kmeans(&x, &x, &MvcConfig::new(5), &mut seeded(3, 0)).is_err());
    assert!(mv_ch_kmeans(&x, &x, &MvcConfig::new(1), &mut seeded(3, 0)).is_err());
}

#[test]
fn fusion_is_deterministic() {
    let (a, _) = mixture(3, 8, 90, 2.0, 7);
    let (b, _) = mixture(3, 8, 90, 1.0, 8);
    let run = || mv_ch_kmeans(&a, &b, &MvcConfig::new(3), &mut seeded(5, 0)).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn loss_trace_is_consistent_and_converges_on_mixtures() {
    for g in [3usize, 6] {
        for s in 0..10u64 {
            let (a, _) = mixture(g, 16, 300, 2.0, 300 + s);
            let (b, _) = mixture(g, 16, 300, 2.0, 300 + s);
            let cfg = MvcConfig::new(g);
            let r = mv_ch_kmeans(&a, &b, &cfg, &mut seeded(s, 2)).unwrap();
            assert!(r.t <= cfg.max_iter);
            assert!(r.losses.last().unwrap() <= &r.losses[0], "g={g} seed={s}");
            let last = mvc_loss(
                [&a, &b],
                [&r.centroids[0], &r.centroids[1]],
                [&r.view_assignments[0], &r.view_assignments[1]],
            );
            assert!((last - r.losses.last().unwrap()).abs() < 1e-9);
            assert_eq!(r.trace.len(), 2 * r.losses.len());
        }
    }
}

#[test]
fn kmeans_pp_picks_distinct_elements() {
    let (x, _) = mixture(5, 4, 50, 3.0, 9);
    let c = kmeans_pp_init(&x, 5, Norm::L2, &mut seeded(1, 0)).unwrap();
    let distinct: BTreeSet<String> = c.iter().map(|v| format!("{v:?}")).collect();
    assert_eq!(distinct.len(), 5);
}
