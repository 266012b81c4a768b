//! Structure learning for staged tree classifiers.
//!
//! Every learner works on a [`TreeCounts`] whose tree already fixes the
//! variable order. Vertices that the data never reach are kept in an
//! unobserved stage with a uniform floret and never take part in a search.

mod naive;
mod search;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use naive::{hclust, kmeans, learn_naive, Linkage, Metric, NaiveMethod};
pub use search::{backward_join, hill_climb, Direction};

use crate::bn::DagSpec;
use crate::data::TreeCounts;
use crate::error::{Error, Result};
use crate::estimate::{fit_model, mark_unobserved, DEFAULT_KL_EPS};
use crate::model::{StagedTreeModel, Staging};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Full,
    Indep,
    HcIndep,
    HcFull,
    Bhc,
    Fbhc,
    Bj,
    NaiveHc,
    NaiveKm,
    /// Naive Bayes staging, fitted without search.
    Nb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Full,
        Algorithm::Indep,
        Algorithm::HcIndep,
        Algorithm::HcFull,
        Algorithm::Bhc,
        Algorithm::Fbhc,
        Algorithm::Bj,
        Algorithm::NaiveHc,
        Algorithm::NaiveKm,
        Algorithm::Nb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Full => "full",
            Algorithm::Indep => "indep",
            Algorithm::HcIndep => "hc_indep",
            Algorithm::HcFull => "hc_full",
            Algorithm::Bhc => "bhc",
            Algorithm::Fbhc => "fbhc",
            Algorithm::Bj => "bj",
            Algorithm::NaiveHc => "naive_hc",
            Algorithm::NaiveKm => "naive_km",
            Algorithm::Nb => "nb",
        }
    }

    /// Learners whose every accepted step must raise the BIC score.
    pub fn is_score_driven(self) -> bool {
        matches!(
            self,
            Algorithm::HcIndep | Algorithm::HcFull | Algorithm::Bhc | Algorithm::Fbhc
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub algorithm: Algorithm,
    pub kl_threshold: f64,
    /// Floor applied to floret entries before computing divergences.
    pub kl_eps: f64,
    pub max_search_depth: Option<usize>,
    pub seed: u64,
    pub smoothing: f64,
    pub kmeans_restarts: usize,
    pub linkage: Linkage,
    pub metric: Metric,
}

impl LearnConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            kl_threshold: 0.01,
            kl_eps: DEFAULT_KL_EPS,
            max_search_depth: None,
            seed: 0,
            smoothing: 0.0,
            kmeans_restarts: 10,
            linkage: Linkage::Average,
            metric: Metric::TotalVariation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm == Algorithm::Bj && !(self.kl_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "kl threshold must be > 0, got {}",
                self.kl_threshold
            )));
        }
        if !(self.kl_eps > 0.0 && self.kl_eps < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kl floor {} must be in (0, 1)",
                self.kl_eps
            )));
        }
        if self.max_search_depth == Some(0) {
            return Err(Error::InvalidConfig("max search depth must be >= 1".into()));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing {} must be finite and >= 0",
                self.smoothing
            )));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidConfig(
                "k-means needs at least one restart".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub description: String,
    pub depth: usize,
    pub score_before: f64,
    pub score_after: f64,
    /// Divergence that justified a backward-joining merge.
    pub divergence: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SearchTrace {
    pub fn is_strictly_increasing(&self) -> bool {
        self.steps.iter().all(|s| s.score_after > s.score_before)
            && self
                .steps
                .windows(2)
                .all(|w| w[1].score_before >= w[0].score_after - 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    Full,
    Indep,
}

/// Full (one stage per observed vertex) or independence (one observed stage
/// per depth) staging, with unobserved vertices collapsed.
pub fn learn_baseline(
    tree_counts: &TreeCounts,
    mode: BaselineMode,
    smoothing: f64,
) -> Result<StagedTreeModel> {
    fit_model(baseline_staging(tree_counts, mode), tree_counts, smoothing)
}

pub(crate) fn baseline_staging(tree_counts: &TreeCounts, mode: BaselineMode) -> Staging {
    let tree = tree_counts.tree();
    let staging = match mode {
        BaselineMode::Full => Staging::full(tree),
        BaselineMode::Indep => Staging::independent(tree),
    };
    mark_unobserved(&staging, tree_counts)
}

/// The naive Bayes model: the staging of the naive Bayes DAG, with stages that
/// receive no data turned into unobserved stages.
pub fn learn_naive_bayes(tree_counts: &TreeCounts, smoothing: f64) -> Result<StagedTreeModel> {
    let tree = tree_counts.tree();
    let staging = DagSpec::naive_bayes(tree).staging(tree)?;
    fit_model(
        collapse_empty_stages(&staging, tree_counts),
        tree_counts,
        smoothing,
    )
}

fn collapse_empty_stages(staging: &Staging, tree_counts: &TreeCounts) -> Staging {
    let tree = tree_counts.tree();
    let depths = (0..tree.depth_count())
        .map(|d| {
            let ds = staging.depth(d);
            let totals = crate::estimate::depth_stage_counts(ds, tree_counts, d);
            let empty: Vec<bool> = totals.iter().map(|c| c.iter().sum::<u64>() == 0).collect();
            const UNOBSERVED: usize = usize::MAX;
            let labels = ds
                .stage_of()
                .iter()
                .map(|&s| if empty[s] { UNOBSERVED } else { s })
                .collect();
            crate::model::DepthStaging::new(labels, empty.iter().any(|&e| e).then_some(UNOBSERVED))
                .expect("labels cover the depth")
        })
        .collect();
    Staging::new(tree, depths).expect("shape preserved")
}

/// Runs the configured learner.
pub fn learn(
    tree_counts: &TreeCounts,
    config: &LearnConfig,
) -> Result<(StagedTreeModel, SearchTrace)> {
    config.validate()?;
    let start = Instant::now();
    let lambda = config.smoothing;
    let (model, mut trace) = match config.algorithm {
        Algorithm::Full => (
            learn_baseline(tree_counts, BaselineMode::Full, lambda)?,
            SearchTrace::default(),
        ),
        Algorithm::Indep => (
            learn_baseline(tree_counts, BaselineMode::Indep, lambda)?,
            SearchTrace::default(),
        ),
        Algorithm::Nb => (
            learn_naive_bayes(tree_counts, lambda)?,
            SearchTrace::default(),
        ),
        Algorithm::HcFull | Algorithm::HcIndep => {
            let mode = if config.algorithm == Algorithm::HcFull {
                BaselineMode::Full
            } else {
                BaselineMode::Indep
            };
            let start = learn_baseline(tree_counts, mode, lambda)?;
            hill_climb(
                &start,
                tree_counts,
                Direction::Free,
                false,
                config.max_search_depth,
                lambda,
            )?
        }
        Algorithm::Bhc | Algorithm::Fbhc => {
            let start = learn_baseline(tree_counts, BaselineMode::Full, lambda)?;
            hill_climb(
                &start,
                tree_counts,
                Direction::JoinOnly,
                config.algorithm == Algorithm::Fbhc,
                config.max_search_depth,
                lambda,
            )?
        }
        Algorithm::Bj => {
            let start = learn_baseline(tree_counts, BaselineMode::Full, lambda)?;
            backward_join(
                &start,
                tree_counts,
                config.kl_threshold,
                config.kl_eps,
                lambda,
            )?
        }
        Algorithm::NaiveHc => learn_naive(
            tree_counts,
            NaiveMethod::Hclust(config.linkage, config.metric),
            lambda,
            config.seed,
            config.kmeans_restarts,
        )?,
        Algorithm::NaiveKm => learn_naive(
            tree_counts,
            NaiveMethod::Kmeans,
            lambda,
            config.seed,
            config.kmeans_restarts,
        )?,
    };
    trace.wall_time = start.elapsed();
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventTree, VariableSpec};

    fn tree3() -> EventTree {
        let b = |n: &str| VariableSpec::indexed(n, 2).unwrap();
        EventTree::new(b("C"), vec![b("X1"), b("X2")]).unwrap()
    }

    #[test]
    fn baselines() {
        let t = tree3();
        let all: Vec<Vec<usize>> = (0..8).map(|i| t.outcome_of_leaf(i)).collect();
        let tc = TreeCounts::from_outcomes(&t, all.iter().map(Vec::as_slice)).unwrap();
        let full = learn_baseline(&tc, BaselineMode::Full, 0.0).unwrap();
        let counts: Vec<_> = (0..3).map(|d| full.staging().stage_count(d)).collect();
        assert_eq!(counts, vec![1, 2, 4]);
        let indep = learn_baseline(&tc, BaselineMode::Indep, 0.0).unwrap();
        let counts: Vec<_> = (0..3).map(|d| indep.staging().stage_count(d)).collect();
        assert_eq!(counts, vec![1, 1, 1]);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("nope".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = LearnConfig::new(Algorithm::Bj);
        c.kl_threshold = 0.0;
        assert!(c.validate().is_err());
        let mut c = LearnConfig::new(Algorithm::HcFull);
        c.max_search_depth = Some(0);
        assert!(c.validate().is_err());
    }
}
