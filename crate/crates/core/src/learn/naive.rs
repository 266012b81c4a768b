//! Naive staged trees: per depth, observed vertices are clustered into at most
//! `|C|` stages by their empirical florets.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TreeCounts;
use crate::error::Result;
use crate::estimate::{fit_model, smoothed_floret, stage_score, symmetrized_kl, total_variation};
use crate::model::{DepthStaging, StagedTreeModel, Staging};

use super::{SearchTrace, TraceStep};

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveMethod {
    /// Agglomerative clustering of the distinct florets.
    Hclust(Linkage, Metric),
    /// Lloyd k-means on squared Euclidean distance, best of several restarts.
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

/// Distance between florets for hierarchical clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    TotalVariation,
    Euclidean,
    SymmetrizedKl,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::TotalVariation => total_variation(a, b).expect("equal lengths"),
            Metric::Euclidean => sq_dist(a, b).sqrt(),
            Metric::SymmetrizedKl => symmetrized_kl(a, b).expect("equal lengths"),
        }
    }
}

impl std::str::FromStr for Linkage {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            _ => Err(crate::error::Error::InvalidConfig(format!(
                "unknown linkage `{s}`"
            ))),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(Metric::TotalVariation),
            "euclidean" => Ok(Metric::Euclidean),
            "symkl" => Ok(Metric::SymmetrizedKl),
            _ => Err(crate::error::Error::InvalidConfig(format!(
                "unknown metric `{s}`"
            ))),
        }
    }
}

pub fn learn_naive(
    tree_counts: &TreeCounts,
    method: NaiveMethod,
    smoothing: f64,
    seed: u64,
    restarts: usize,
) -> Result<(StagedTreeModel, SearchTrace)> {
    let tree = tree_counts.tree();
    let n_classes = tree.class_count();
    let log_n = (tree_counts.n_records().max(1) as f64).ln();
    let mut trace = SearchTrace::default();
    let mut depths = vec![DepthStaging::single(1)];

    for d in 1..tree.depth_count() {
        let observed: Vec<usize> = (0..tree.vertex_count(d))
            .filter(|&v| tree_counts.reach(d, v) > 0)
            .collect();
        let florets: Vec<Vec<f64>> = observed
            .iter()
            .map(|&v| smoothed_floret(tree_counts.vertex(d, v), 0.0).expect("observed vertex"))
            .collect();

        // distinct florets in first-occurrence order
        let mut distinct: Vec<Vec<f64>> = Vec::new();
        let point_of: Vec<usize> = florets
            .iter()
            .map(|f| match distinct.iter().position(|g| g == f) {
                Some(i) => i,
                None => {
                    distinct.push(f.clone());
                    distinct.len() - 1
                }
            })
            .collect();

        let k = n_classes.min(distinct.len());
        if !observed.is_empty() && distinct.len() < n_classes {
            trace.notes.push(format!(
                "depth {d}: only {} distinct observed floret(s), fewer than {n_classes} classes",
                distinct.len()
            ));
        }
        let cluster_of_point: Vec<usize> = if distinct.len() <= k {
            (0..distinct.len()).collect()
        } else {
            match method {
                NaiveMethod::Hclust(linkage, metric) => {
                    hclust(&distinct, k, linkage, |a, b| metric.distance(a, b))
                }
                NaiveMethod::Kmeans => {
                    let stream = seed ^ (d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                    let labels = kmeans(&florets, k, restarts, stream);
                    // every copy of a floret lands in the same cluster
                    let mut by_point = vec![0; distinct.len()];
                    for (i, &p) in point_of.iter().enumerate() {
                        by_point[p] = labels[i];
                    }
                    by_point
                }
            }
        };

        const UNOBSERVED: usize = usize::MAX;
        let mut labels = vec![UNOBSERVED; tree.vertex_count(d)];
        for (i, &v) in observed.iter().enumerate() {
            labels[v] = cluster_of_point[point_of[i]];
        }
        let has_unobserved = observed.len() < tree.vertex_count(d);
        let staging = DepthStaging::new(labels, has_unobserved.then_some(UNOBSERVED))?;

        let before: f64 = observed
            .iter()
            .map(|&v| stage_score(tree_counts.vertex(d, v), smoothing, log_n))
            .sum();
        let after = crate::estimate::depth_score(&staging, tree_counts, d, smoothing);
        trace.steps.push(TraceStep {
            description: format!(
                "depth {d}: {} observed vertices clustered into {} stage(s)",
                observed.len(),
                staging.observed_stage_count()
            ),
            depth: d,
            score_before: before,
            score_after: after,
            divergence: None,
        });
        depths.push(staging);
    }
    let staging = Staging::new(tree, depths)?;
    Ok((fit_model(staging, tree_counts, smoothing)?, trace))
}

/// Agglomerative clustering of `points` into `k` clusters. Returns a cluster
/// label per point, labels numbered by first member.
pub fn hclust<F>(points: &[Vec<f64>], k: usize, linkage: Linkage, dist: F) -> Vec<usize>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = points.len();
    let k = k.max(1);
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = dist(&points[i], &points[j]);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active: Vec<usize> = (0..n).collect();
    while active.len() > k {
        let mut best: Option<(usize, usize, f64)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                if best.is_none_or(|(_, _, b)| d[i][j] < b) {
                    best = Some((i, j, d[i][j]));
                }
            }
        }
        let (i, j, _) = best.expect("at least two clusters");
        let (ni, nj) = (clusters[i].len() as f64, clusters[j].len() as f64);
        // Lance-Williams update
        for &m in &active {
            if m != i && m != j {
                let x = match linkage {
                    Linkage::Average => (ni * d[i][m] + nj * d[j][m]) / (ni + nj),
                    Linkage::Single => d[i][m].min(d[j][m]),
                    Linkage::Complete => d[i][m].max(d[j][m]),
                };
                d[i][m] = x;
                d[m][i] = x;
            }
        }
        let moved = std::mem::take(&mut clusters[j]);
        clusters[i].extend(moved);
        active.retain(|&m| m != j);
    }
    let mut labels = vec![0; n];
    let mut firsts: Vec<(usize, usize)> = active
        .iter()
        .map(|&c| (*clusters[c].iter().min().expect("non-empty"), c))
        .collect();
    firsts.sort_unstable();
    for (label, &(_, c)) in firsts.iter().enumerate() {
        for &p in &clusters[c] {
            labels[p] = label;
        }
    }
    labels
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means with `restarts` random initialisations; returns the labels of
/// the restart with the smallest within-cluster sum of squares.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers: Vec<Vec<f64>> = sample(&mut rng, n, k)
            .into_iter()
            .map(|i| points[i].clone())
            .collect();
        let mut labels = vec![usize::MAX; n];
        for _ in 0..KMEANS_MAX_ITER {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let c = nearest(p, &centers);
                if labels[i] != c {
                    labels[i] = c;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; points[0].len()]; k];
            let mut sizes = vec![0usize; k];
            for (p, &c) in points.iter().zip(&labels) {
                sizes[c] += 1;
                for (s, x) in sums[c].iter_mut().zip(p) {
                    *s += x;
                }
            }
            for c in 0..k {
                if sizes[c] == 0 {
                    // re-seed from the point farthest from its centre
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            sq_dist(&points[a], &centers[labels[a]])
                                .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                                .then(b.cmp(&a))
                        })
                        .expect("non-empty");
                    centers[c] = points[far].clone();
                    labels[far] = c;
                    changed = true;
                } else {
                    centers[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        let sse: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &c)| sq_dist(p, &centers[c]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, labels));
        }
    }
    best.expect("at least one restart").1
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventTree, VariableSpec};

    #[test]
    fn average_linkage_two_groups() {
        let pts = vec![
            vec![0.0, 1.0],
            vec![0.9, 0.1],
            vec![0.05, 0.95],
            vec![1.0, 0.0],
        ];
        for linkage in [Linkage::Average, Linkage::Single, Linkage::Complete] {
            let labels = hclust(&pts, 2, linkage, |a, b| {
                Metric::TotalVariation.distance(a, b)
            });
            assert_eq!(labels, vec![0, 1, 0, 1]);
        }
    }

    #[test]
    fn linkages_differ_on_a_chain() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.2]];
        let e = |a: &[f64], b: &[f64]| Metric::Euclidean.distance(a, b);
        assert_eq!(hclust(&pts, 2, Linkage::Single, e), vec![0, 0, 0, 1]);
        assert_eq!(hclust(&pts, 2, Linkage::Complete, e), vec![0, 0, 1, 1]);
    }

    #[test]
    fn kmeans_separates_and_is_deterministic() {
        let pts = vec![
            vec![0.0, 1.0],
            vec![0.9, 0.1],
            vec![0.05, 0.95],
            vec![1.0, 0.0],
            vec![0.1, 0.9],
        ];
        let a = kmeans(&pts, 2, 10, 42);
        assert_eq!(a, kmeans(&pts, 2, 10, 42));
        assert_eq!(a[0], a[2]);
        assert_eq!(a[0], a[4]);
        assert_eq!(a[1], a[3]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn few_vertices_each_own_stage() {
        let b = |n: &str| VariableSpec::indexed(n, 2).unwrap();
        let t = EventTree::new(b("C"), vec![b("X")]).unwrap();
        let rows: [&[usize]; 3] = [&[0, 0], &[0, 1], &[1, 1]];
        let tc = TreeCounts::from_outcomes(&t, rows).unwrap();
        for method in [
            NaiveMethod::Hclust(Linkage::Average, Metric::TotalVariation),
            NaiveMethod::Kmeans,
        ] {
            let (m, _) = learn_naive(&tc, method, 0.0, 1, 5).unwrap();
            assert_eq!(m.staging().depth(1).stage_of(), &[0, 1]);
        }
    }

    #[test]
    fn identical_florets_collapse() {
        let b = |n: &str| VariableSpec::indexed(n, 2).unwrap();
        let t = EventTree::new(b("C"), vec![b("X1"), b("X2")]).unwrap();
        let rows: Vec<Vec<usize>> = (0..8).map(|i| t.outcome_of_leaf(i)).collect();
        let tc = TreeCounts::from_outcomes(&t, rows.iter().map(Vec::as_slice)).unwrap();
        let (m, trace) = learn_naive(
            &tc,
            NaiveMethod::Hclust(Linkage::Average, Metric::TotalVariation),
            0.0,
            0,
            3,
        )
        .unwrap();
        assert_eq!(m.staging().stage_count(2), 1);
        assert!(!trace.notes.is_empty());
    }
}
