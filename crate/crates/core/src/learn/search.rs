//! Score-driven hill climbing and divergence-driven backward joining.

use crate::data::TreeCounts;
use crate::error::{Error, Result};
use crate::estimate::{fit_model, smoothed_floret, stage_score, symmetrized_kl_eps};
use crate::model::{DepthStaging, StagedTreeModel, Staging};

use super::{SearchTrace, TraceStep};

/// Smallest score gain accepted as an improvement.
const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Move one vertex to another stage or to a new stage.
    Free,
    /// Merge two stages of the same depth.
    JoinOnly,
}

/// Search bookkeeping for one depth: canonical stages with their aggregated
/// counts and score contributions.
struct DepthState {
    depth: usize,
    staging: DepthStaging,
    members: Vec<Vec<usize>>,
    counts: Vec<Vec<u64>>,
    scores: Vec<f64>,
}

impl DepthState {
    fn new(depth: usize, staging: DepthStaging, tc: &TreeCounts, lambda: f64, log_n: f64) -> Self {
        let members = staging.members();
        let card = tc.tree().cardinality(depth);
        let counts: Vec<Vec<u64>> = members
            .iter()
            .map(|vs| {
                let mut c = vec![0; card];
                for &v in vs {
                    for (a, &n) in c.iter_mut().zip(tc.vertex(depth, v)) {
                        *a += n;
                    }
                }
                c
            })
            .collect();
        let scores = counts
            .iter()
            .enumerate()
            .map(|(s, c)| {
                if staging.is_unobserved(s) {
                    0.0
                } else {
                    stage_score(c, lambda, log_n)
                }
            })
            .collect();
        Self {
            depth,
            staging,
            members,
            counts,
            scores,
        }
    }

    fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    fn observed_stages(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.staging.stage_count()).filter(|&s| !self.staging.is_unobserved(s))
    }

    fn relabel(&self, f: impl Fn(usize, usize) -> usize) -> DepthStaging {
        let labels = self
            .staging
            .stage_of()
            .iter()
            .enumerate()
            .map(|(v, &s)| f(v, s))
            .collect();
        DepthStaging::new(labels, self.staging.unobserved()).expect("relabelled depth")
    }
}

fn add(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, Copy)]
enum Move {
    /// Vertex to an existing stage, or to a fresh stage when `to` is `None`.
    Reassign {
        vertex: usize,
        from: usize,
        to: Option<usize>,
    },
    Join {
        a: usize,
        b: usize,
    },
}

struct Searcher<'a> {
    tc: &'a TreeCounts,
    lambda: f64,
    log_n: f64,
    depths: Vec<DepthState>,
}

impl<'a> Searcher<'a> {
    fn new(staging: &Staging, tc: &'a TreeCounts, lambda: f64) -> Self {
        let log_n = (tc.n_records() as f64).ln();
        let depths = (0..staging.depth_count())
            .map(|d| DepthState::new(d, staging.depth(d).clone(), tc, lambda, log_n))
            .collect();
        Self {
            tc,
            lambda,
            log_n,
            depths,
        }
    }

    fn total(&self) -> f64 {
        self.depths.iter().map(DepthState::total).sum()
    }

    fn score(&self, counts: &[u64]) -> f64 {
        stage_score(counts, self.lambda, self.log_n)
    }

    fn delta(&self, ds: &DepthState, mv: Move) -> f64 {
        match mv {
            Move::Reassign { vertex, from, to } => {
                let vc = self.tc.vertex(ds.depth, vertex);
                let rest = if ds.members[from].len() > 1 {
                    self.score(&sub(&ds.counts[from], vc))
                } else {
                    0.0
                };
                let (gain_to, old_to) = match to {
                    Some(t) => (self.score(&add(&ds.counts[t], vc)), ds.scores[t]),
                    None => (self.score(vc), 0.0),
                };
                rest + gain_to - ds.scores[from] - old_to
            }
            Move::Join { a, b } => {
                self.score(&add(&ds.counts[a], &ds.counts[b])) - ds.scores[a] - ds.scores[b]
            }
        }
    }

    fn apply(&mut self, depth: usize, mv: Move) -> String {
        let ds = &self.depths[depth];
        let (staging, description) = match mv {
            Move::Reassign { vertex, from, to } => {
                let target = to.unwrap_or(usize::MAX);
                let desc = match to {
                    Some(t) => format!(
                        "depth {depth}: move vertex {vertex} from stage {from} to stage {t}"
                    ),
                    None => format!(
                        "depth {depth}: move vertex {vertex} from stage {from} to a new stage"
                    ),
                };
                (
                    ds.relabel(|v, s| if v == vertex { target } else { s }),
                    desc,
                )
            }
            Move::Join { a, b } => (
                ds.relabel(|_, s| if s == b { a } else { s }),
                format!("depth {depth}: join stages {a} and {b}"),
            ),
        };
        self.depths[depth] = DepthState::new(depth, staging, self.tc, self.lambda, self.log_n);
        description
    }

    /// Candidate moves of one depth in tie-breaking order.
    fn moves(&self, depth: usize, direction: Direction) -> Vec<Move> {
        let ds = &self.depths[depth];
        let observed: Vec<usize> = ds.observed_stages().collect();
        let mut out = Vec::new();
        match direction {
            Direction::Free => {
                for v in 0..ds.staging.vertex_count() {
                    let from = ds.staging.stage(v);
                    if ds.staging.is_unobserved(from) {
                        continue;
                    }
                    for &t in &observed {
                        if t != from {
                            out.push(Move::Reassign {
                                vertex: v,
                                from,
                                to: Some(t),
                            });
                        }
                    }
                    if ds.members[from].len() > 1 {
                        out.push(Move::Reassign {
                            vertex: v,
                            from,
                            to: None,
                        });
                    }
                }
            }
            Direction::JoinOnly => {
                for (i, &a) in observed.iter().enumerate() {
                    for &b in &observed[i + 1..] {
                        out.push(Move::Join { a, b });
                    }
                }
            }
        }
        out
    }

    fn into_staging(self) -> Staging {
        let tree = self.tc.tree();
        Staging::new(tree, self.depths.into_iter().map(|d| d.staging).collect())
            .expect("search keeps shape")
    }
}

fn searchable(depth: usize, max_search_depth: Option<usize>) -> bool {
    depth >= 1 && max_search_depth.is_none_or(|m| depth <= m)
}

fn check_same_tree(start: &StagedTreeModel, tc: &TreeCounts) -> Result<()> {
    if start.tree() != tc.tree() {
        return Err(Error::InvalidStaging(
            "start model and counts use different trees".into(),
        ));
    }
    if tc.n_records() == 0 {
        return Err(Error::NoRecords);
    }
    Ok(())
}

/// Greedy BIC hill climbing from `start`.
///
/// `Free` takes the best single-vertex reassignment per iteration; `JoinOnly`
/// merges the best pair of stages, or with `first_improvement` the first pair
/// in `(depth, stage, stage)` order that raises the score. Depths past
/// `max_search_depth` keep their start staging.
pub fn hill_climb(
    start: &StagedTreeModel,
    tree_counts: &TreeCounts,
    direction: Direction,
    first_improvement: bool,
    max_search_depth: Option<usize>,
    smoothing: f64,
) -> Result<(StagedTreeModel, SearchTrace)> {
    check_same_tree(start, tree_counts)?;
    let mut search = Searcher::new(start.staging(), tree_counts, smoothing);
    let mut trace = SearchTrace::default();
    let depths: Vec<usize> = (0..search.depths.len())
        .filter(|&d| searchable(d, max_search_depth))
        .collect();

    if first_improvement {
        for &d in &depths {
            'rescan: loop {
                for mv in search.moves(d, direction) {
                    if search.delta(&search.depths[d], mv) > MIN_GAIN {
                        let before = search.total();
                        let description = search.apply(d, mv);
                        trace.steps.push(TraceStep {
                            description,
                            depth: d,
                            score_before: before,
                            score_after: search.total(),
                            divergence: None,
                        });
                        continue 'rescan;
                    }
                }
                break;
            }
        }
    } else {
        loop {
            let mut best: Option<(usize, Move, f64)> = None;
            for &d in &depths {
                for mv in search.moves(d, direction) {
                    let gain = search.delta(&search.depths[d], mv);
                    if gain > MIN_GAIN && best.is_none_or(|(_, _, g)| gain > g) {
                        best = Some((d, mv, gain));
                    }
                }
            }
            let Some((d, mv, _)) = best else { break };
            let before = search.total();
            let description = search.apply(d, mv);
            trace.steps.push(TraceStep {
                description,
                depth: d,
                score_before: before,
                score_after: search.total(),
                divergence: None,
            });
        }
    }
    let model = fit_model(search.into_staging(), tree_counts, smoothing)?;
    Ok((model, trace))
}

/// Within each depth, repeatedly merges the two observed stages whose fitted
/// florets have the smallest symmetrized Kullback-Leibler divergence, while
/// that divergence is below `kl_threshold`.
pub fn backward_join(
    start: &StagedTreeModel,
    tree_counts: &TreeCounts,
    kl_threshold: f64,
    kl_eps: f64,
    smoothing: f64,
) -> Result<(StagedTreeModel, SearchTrace)> {
    check_same_tree(start, tree_counts)?;
    if !(kl_eps > 0.0 && kl_eps < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "kl floor must be in (0, 1), got {kl_eps}"
        )));
    }
    if !(kl_threshold > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kl threshold must be > 0, got {kl_threshold}"
        )));
    }
    let mut search = Searcher::new(start.staging(), tree_counts, smoothing);
    let mut trace = SearchTrace::default();
    for d in 1..search.depths.len() {
        loop {
            let ds = &search.depths[d];
            let observed: Vec<usize> = ds.observed_stages().collect();
            let florets: Vec<Option<Vec<f64>>> = (0..ds.staging.stage_count())
                .map(|s| smoothed_floret(&ds.counts[s], smoothing))
                .collect();
            let mut best: Option<(usize, usize, f64)> = None;
            for (i, &a) in observed.iter().enumerate() {
                for &b in &observed[i + 1..] {
                    let (Some(fa), Some(fb)) = (&florets[a], &florets[b]) else {
                        continue;
                    };
                    let div = symmetrized_kl_eps(fa, fb, kl_eps)?;
                    if best.is_none_or(|(_, _, x)| div < x) {
                        best = Some((a, b, div));
                    }
                }
            }
            match best {
                Some((a, b, div)) if div < kl_threshold => {
                    let before = search.total();
                    let description = search.apply(d, Move::Join { a, b });
                    trace.steps.push(TraceStep {
                        description,
                        depth: d,
                        score_before: before,
                        score_after: search.total(),
                        divergence: Some(div),
                    });
                }
                _ => break,
            }
        }
    }
    let model = fit_model(search.into_staging(), tree_counts, smoothing)?;
    Ok((model, trace))
}
