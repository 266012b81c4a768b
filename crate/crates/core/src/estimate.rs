//! Floret estimation, unobserved stages, likelihood, BIC and floret divergences.

use crate::data::TreeCounts;
use crate::error::{Error, Result};
use crate::model::{DepthStaging, EventTree, StagedTreeModel, Staging};

/// Default flooring applied before Kullback-Leibler divergences.
pub const DEFAULT_KL_EPS: f64 = 1e-12;

/// Aggregated level counts per depth and stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCounts {
    counts: Vec<Vec<Vec<u64>>>,
}

impl StageCounts {
    pub fn new(staging: &Staging, tree_counts: &TreeCounts) -> Self {
        let tree = tree_counts.tree();
        let counts = (0..tree.depth_count())
            .map(|d| depth_stage_counts(staging.depth(d), tree_counts, d))
            .collect();
        Self { counts }
    }

    pub fn depth(&self, depth: usize) -> &[Vec<u64>] {
        &self.counts[depth]
    }

    pub fn stage(&self, depth: usize, stage: usize) -> &[u64] {
        &self.counts[depth][stage]
    }
}

pub(crate) fn depth_stage_counts(
    staging: &DepthStaging,
    tree_counts: &TreeCounts,
    depth: usize,
) -> Vec<Vec<u64>> {
    let card = tree_counts.tree().cardinality(depth);
    let mut out = vec![vec![0; card]; staging.stage_count()];
    for (v, &s) in staging.stage_of().iter().enumerate() {
        for (acc, &n) in out[s].iter_mut().zip(tree_counts.vertex(depth, v)) {
            *acc += n;
        }
    }
    out
}

/// Moves every vertex never reached by the data into its depth's unobserved
/// stage. Observed vertices keep their stage grouping.
pub fn mark_unobserved(staging: &Staging, tree_counts: &TreeCounts) -> Staging {
    let tree = tree_counts.tree();
    const UNOBSERVED: usize = usize::MAX;
    let depths = (0..tree.depth_count())
        .map(|d| {
            let old = staging.depth(d);
            let mut fresh = UNOBSERVED - 1;
            let mut any_unobserved = false;
            let labels: Vec<usize> = (0..tree.vertex_count(d))
                .map(|v| {
                    if tree_counts.reach(d, v) == 0 {
                        any_unobserved = true;
                        UNOBSERVED
                    } else if old.is_unobserved(old.stage(v)) {
                        fresh -= 1;
                        fresh
                    } else {
                        old.stage(v)
                    }
                })
                .collect();
            DepthStaging::new(labels, any_unobserved.then_some(UNOBSERVED))
                .expect("labels cover the depth")
        })
        .collect();
    Staging::new(tree, depths).expect("shape preserved")
}

/// `(count_l + λ) / (total + λ L)` per level.
pub fn smoothed_floret(counts: &[u64], smoothing: f64) -> Option<Vec<f64>> {
    let total: f64 =
        counts.iter().map(|&n| n as f64).sum::<f64>() + smoothing * counts.len() as f64;
    if total <= 0.0 {
        return None;
    }
    Some(
        counts
            .iter()
            .map(|&n| (n as f64 + smoothing) / total)
            .collect(),
    )
}

/// Florets for every stage: smoothed MLE for observed stages, uniform for
/// unobserved ones.
pub fn fit_floret_probabilities(
    tree: &EventTree,
    staging: &Staging,
    stage_counts: &StageCounts,
    smoothing: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "smoothing {smoothing} must be finite and >= 0"
        )));
    }
    (0..tree.depth_count())
        .map(|d| {
            let l = tree.cardinality(d);
            let ds = staging.depth(d);
            (0..ds.stage_count())
                .map(|s| {
                    if ds.is_unobserved(s) {
                        Ok(vec![1.0 / l as f64; l])
                    } else {
                        smoothed_floret(stage_counts.stage(d, s), smoothing)
                            .ok_or(Error::EmptyObservedStage { depth: d, stage: s })
                    }
                })
                .collect()
        })
        .collect()
}

/// Fits florets for `staging` on `tree_counts`.
pub fn fit_model(
    staging: Staging,
    tree_counts: &TreeCounts,
    smoothing: f64,
) -> Result<StagedTreeModel> {
    let tree = tree_counts.tree();
    let sc = StageCounts::new(&staging, tree_counts);
    let florets = fit_floret_probabilities(tree, &staging, &sc, smoothing)?;
    StagedTreeModel::new(tree.clone(), staging, florets)
}

/// `Σ count · ln(prob)` over all vertices and levels, `0 · ln 0 = 0`.
/// Returns `f64::NEG_INFINITY` when data fall on a zero-probability edge.
pub fn log_likelihood(model: &StagedTreeModel, tree_counts: &TreeCounts) -> f64 {
    let tree = model.tree();
    let mut ll = 0.0;
    for d in 0..tree.depth_count() {
        for v in 0..tree.vertex_count(d) {
            let f = model.vertex_floret(d, v);
            for (&n, &p) in tree_counts.vertex(d, v).iter().zip(f) {
                if n == 0 {
                    continue;
                }
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += n as f64 * p.ln();
            }
        }
    }
    ll
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreValue {
    pub log_likelihood: f64,
    pub n_params: usize,
    pub n_records: u64,
    /// `log_likelihood - n_params / 2 · ln n_records`; higher is better.
    pub score: f64,
}

impl ScoreValue {
    pub fn new(log_likelihood: f64, n_params: usize, n_records: u64) -> Self {
        let score = log_likelihood - n_params as f64 / 2.0 * (n_records as f64).ln();
        Self {
            log_likelihood,
            n_params,
            n_records,
            score,
        }
    }
}

pub fn bic_score(model: &StagedTreeModel, tree_counts: &TreeCounts) -> Result<ScoreValue> {
    if tree_counts.n_records() == 0 {
        return Err(Error::NoRecords);
    }
    Ok(ScoreValue::new(
        log_likelihood(model, tree_counts),
        model.free_parameter_count(),
        tree_counts.n_records(),
    ))
}

/// Score contribution of one observed stage with aggregated `counts`, using
/// florets refitted with `smoothing`.
pub fn stage_score(counts: &[u64], smoothing: f64, log_n: f64) -> f64 {
    let penalty = (counts.len() - 1) as f64 / 2.0 * log_n;
    let total: f64 =
        counts.iter().map(|&n| n as f64).sum::<f64>() + smoothing * counts.len() as f64;
    let mut ll = 0.0;
    for &n in counts {
        if n > 0 {
            ll += n as f64 * ((n as f64 + smoothing) / total).ln();
        }
    }
    ll - penalty
}

/// Sum of [`stage_score`] over the observed stages of one depth.
pub fn depth_score(
    staging: &DepthStaging,
    tree_counts: &TreeCounts,
    depth: usize,
    smoothing: f64,
) -> f64 {
    let log_n = (tree_counts.n_records() as f64).ln();
    depth_stage_counts(staging, tree_counts, depth)
        .iter()
        .enumerate()
        .filter(|&(s, _)| !staging.is_unobserved(s))
        .map(|(_, c)| stage_score(c, smoothing, log_n))
        .sum()
}

fn floored(p: &[f64], eps: f64) -> Vec<f64> {
    let f: Vec<f64> = p.iter().map(|&x| x.max(eps)).collect();
    let s: f64 = f.iter().sum();
    f.into_iter().map(|x| x / s).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// `KL(p‖q) + KL(q‖p)` after flooring entries at [`DEFAULT_KL_EPS`].
pub fn symmetrized_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    symmetrized_kl_eps(p, q, DEFAULT_KL_EPS)
}

pub fn symmetrized_kl_eps(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let (p, q) = (floored(p, eps), floored(q, eps));
    // each term is bit-identical under swapping p and q
    Ok(p.iter()
        .zip(&q)
        .map(|(&a, &b)| (a - b) * (a.ln() - b.ln()))
        .sum::<f64>()
        .max(0.0))
}

/// One-directional `KL(p‖q)`, without flooring.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(kl(p, q))
}

/// `½ Σ |p_l - q_l|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
