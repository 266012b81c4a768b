//! Replicated train/test experiments.
//!
//! A run is a grid of replications by algorithms. Every replication derives its
//! own seed from the master seed, draws one train/test pair and one variable
//! order, and all algorithms of that replication share them. Fits run on a
//! thread pool; rows are reported in grid order so the output only depends on
//! the spec.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classify::{evaluate, MetricsReport};
use crate::data::{split, tree_counts, CategoricalDataset, TreeCounts};
use crate::error::{Error, Result};
use crate::learn::{learn, Algorithm, LearnConfig};
use crate::ordering::OrderMode;
use crate::synth::{generate_parity, generate_parity_with_noise, titanic};

/// splitmix64 of the master seed advanced `index + 1` steps.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub label: String,
    pub config: LearnConfig,
}

/// Search depth cap the runner applies when a config sets none.
pub fn runner_depth_cap(algorithm: Algorithm) -> Option<usize> {
    match algorithm {
        Algorithm::HcFull => Some(5),
        Algorithm::HcIndep | Algorithm::Bhc => Some(7),
        _ => None,
    }
}

impl AlgorithmSpec {
    pub fn new(mut config: LearnConfig) -> Self {
        if config.max_search_depth.is_none() {
            config.max_search_depth = runner_depth_cap(config.algorithm);
        }
        let label = match config.algorithm {
            Algorithm::Bj => format!("bj({})", config.kl_threshold),
            a => a.name().to_string(),
        };
        Self { label, config }
    }

    /// `name` or `bj:<threshold>`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (text.trim(), None),
        };
        let mut config = LearnConfig::new(name.parse()?);
        if let Some(arg) = arg {
            if config.algorithm != Algorithm::Bj {
                return Err(Error::InvalidConfig(format!("`{name}` takes no argument")));
            }
            config.kl_threshold = arg
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad threshold `{arg}`")))?;
        }
        config.validate()?;
        Ok(Self::new(config))
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    /// A fresh seeded train/test split per replication.
    Split(CategoricalDataset),
    /// Fresh parity train and test sets per replication.
    Parity {
        n_features: usize,
        n_train: usize,
        n_test: usize,
    },
    /// The same train and test sets in every replication.
    Fixed {
        train: CategoricalDataset,
        test: CategoricalDataset,
    },
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataSource,
    pub algorithms: Vec<AlgorithmSpec>,
    pub replications: usize,
    pub train_fraction: f64,
    pub master_seed: u64,
    pub order: OrderMode,
    /// Pseudo-count for the CMI ordering.
    pub order_smoothing: f64,
    /// Class level whose posterior is scored for AUC.
    pub positive_class: Option<String>,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, data: DataSource, algorithms: Vec<AlgorithmSpec>) -> Self {
        Self {
            name: name.into(),
            data,
            algorithms,
            replications: 10,
            train_fraction: 0.8,
            master_seed: 0,
            order: OrderMode::Cmi,
            order_smoothing: 0.0,
            positive_class: None,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("no algorithms given".into()));
        }
        for a in &self.algorithms {
            a.config.validate()?;
        }
        if matches!(self.data, DataSource::Split(_))
            && !(self.train_fraction > 0.0 && self.train_fraction < 1.0)
        {
            return Err(Error::InvalidSplit(format!(
                "train fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        if !(self.order_smoothing.is_finite() && self.order_smoothing >= 0.0) {
            return Err(Error::InvalidConfig(
                "order smoothing must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// XOR study: naive staged trees against naive Bayes on 10-bit parity.
    pub fn xor(master_seed: u64, replications: usize) -> Self {
        let algorithms = [Algorithm::NaiveHc, Algorithm::NaiveKm, Algorithm::Nb]
            .into_iter()
            .map(|a| AlgorithmSpec::new(LearnConfig::new(a)))
            .collect();
        let mut spec = Self::new(
            "xor",
            DataSource::Parity {
                n_features: 10,
                n_train: 200,
                n_test: 10_000,
            },
            algorithms,
        );
        spec.master_seed = master_seed;
        spec.replications = replications;
        spec
    }

    /// Titanic: 10 replications of an 80/20 split.
    pub fn titanic(master_seed: u64) -> Self {
        let algorithms = ["bj:0.01", "hc_full", "naive_km", "nb"]
            .iter()
            .map(|s| AlgorithmSpec::parse(s).expect("valid algorithm"))
            .collect();
        let mut spec = Self::new("titanic", DataSource::Split(titanic()), algorithms);
        spec.master_seed = master_seed;
        spec.positive_class = Some("Yes".into());
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub algorithm: String,
    pub replication: usize,
    pub seed: u64,
    pub order: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub free_parameters: Option<usize>,
    /// Free parameters of the naive Bayes model on the same tree.
    pub naive_bayes_parameters: Option<usize>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub fits: usize,
    pub failures: usize,
    pub accuracy: (f64, f64),
    pub balanced_accuracy: (f64, f64),
    pub auc: Option<(f64, f64)>,
    pub free_parameters: (f64, f64),
    /// Mean confusion proportions.
    pub confusion: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub class_levels: Vec<String>,
    pub rows: Vec<FitRow>,
}

struct Replication {
    seed: u64,
    train: CategoricalDataset,
    test: CategoricalDataset,
    order: Vec<String>,
    counts: TreeCounts,
}

fn prepare(spec: &ExperimentSpec, index: usize) -> Result<Replication> {
    let seed = replication_seed(spec.master_seed, index as u64);
    let (train, test) = match &spec.data {
        DataSource::Split(ds) => split(ds, spec.train_fraction, seed)?,
        DataSource::Parity {
            n_features,
            n_train,
            n_test,
        } => (
            generate_parity(*n_features, *n_train, seed)?,
            generate_parity(*n_features, *n_test, replication_seed(seed, 0))?,
        ),
        DataSource::Fixed { train, test } => (train.clone(), test.clone()),
    };
    let order = spec.order.resolve(&train, spec.order_smoothing)?;
    let tree = train.tree(&order)?;
    let counts = tree_counts(&train, &tree)?;
    Ok(Replication {
        seed,
        train,
        test,
        order,
        counts,
    })
}

/// Applies `f` to every item on `threads` workers, keeping input order.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    }
    .min(items.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn naive_bayes_parameter_count(counts: &TreeCounts) -> usize {
    let tree = counts.tree();
    let k = tree.class_count();
    (k - 1)
        + (1..tree.depth_count())
            .map(|d| k * (tree.cardinality(d) - 1))
            .sum::<usize>()
}

/// Runs the grid. Per-fit failures are recorded in their rows; only an invalid
/// spec is an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let indices: Vec<usize> = (0..spec.replications).collect();
    let reps = parallel_map(&indices, spec.threads, |&i| prepare(spec, i));

    let jobs: Vec<(usize, usize)> = (0..spec.replications)
        .flat_map(|r| (0..spec.algorithms.len()).map(move |a| (r, a)))
        .collect();
    let rows = parallel_map(&jobs, spec.threads, |&(r, a)| {
        let alg = &spec.algorithms[a];
        let mut row = FitRow {
            algorithm: alg.label.clone(),
            replication: r,
            seed: replication_seed(spec.master_seed, r as u64),
            order: Vec::new(),
            n_train: 0,
            n_test: 0,
            free_parameters: None,
            naive_bayes_parameters: None,
            metrics: None,
            error: None,
            wall_time: Duration::ZERO,
        };
        let rep = match &reps[r] {
            Ok(rep) => rep,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        row.order = rep.order.clone();
        row.n_train = rep.train.len();
        row.n_test = rep.test.len();
        row.naive_bayes_parameters = Some(naive_bayes_parameter_count(&rep.counts));
        let mut config = alg.config.clone();
        config.seed = rep.seed;
        let fitted = learn(&rep.counts, &config).and_then(|(model, trace)| {
            row.wall_time = trace.wall_time;
            let positive = match &spec.positive_class {
                Some(level) => {
                    Some(model.tree().class_var().level_index(level).ok_or_else(|| {
                        Error::UnknownLevel {
                            var: model.tree().class_var().name().to_string(),
                            level: level.clone(),
                        }
                    })?)
                }
                None => None,
            };
            Ok((
                model.free_parameter_count(),
                evaluate(&model, &rep.test, positive)?,
            ))
        });
        match fitted {
            Ok((params, metrics)) => {
                row.free_parameters = Some(params);
                row.metrics = Some(metrics);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    });

    let class_levels = match &spec.data {
        DataSource::Split(ds) => ds.class_var().levels().to_vec(),
        DataSource::Fixed { train, .. } => train.class_var().levels().to_vec(),
        DataSource::Parity { .. } => vec!["-1".into(), "+1".into()],
    };
    Ok(ExperimentReport {
        name: spec.name.clone(),
        class_levels,
        rows,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn algorithms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.algorithm) {
                out.push(r.algorithm.clone());
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let k = self.class_levels.len();
        self.algorithms()
            .into_iter()
            .map(|alg| {
                let rows: Vec<&FitRow> = self.rows.iter().filter(|r| r.algorithm == alg).collect();
                let ok: Vec<&MetricsReport> =
                    rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
                let collect =
                    |f: &dyn Fn(&MetricsReport) -> f64| ok.iter().map(|m| f(m)).collect::<Vec<_>>();
                let aucs: Vec<f64> = ok.iter().filter_map(|m| m.auc).collect();
                let params: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| r.free_parameters)
                    .map(|p| p as f64)
                    .collect();
                let mut confusion = vec![vec![0.0; k]; k];
                for m in &ok {
                    for (i, row) in m.confusion.iter().enumerate() {
                        for (j, x) in row.iter().enumerate() {
                            confusion[i][j] += x / ok.len() as f64;
                        }
                    }
                }
                SummaryRow {
                    algorithm: alg,
                    fits: ok.len(),
                    failures: rows.len() - ok.len(),
                    accuracy: mean_sd(&collect(&|m| m.accuracy)),
                    balanced_accuracy: mean_sd(&collect(&|m| m.balanced_accuracy)),
                    auc: (!aucs.is_empty()).then(|| mean_sd(&aucs)),
                    free_parameters: mean_sd(&params),
                    confusion,
                }
            })
            .collect()
    }

    /// One line per fit. Wall times are left out so that the bytes only depend
    /// on the spec; see [`ExperimentReport::timings_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,replication,seed,n_train,n_test,free_parameters,accuracy,balanced_accuracy,auc");
        for t in &self.class_levels {
            for p in &self.class_levels {
                let _ = write!(out, ",p_true_{t}_pred_{p}");
            }
        }
        out.push_str(",order,error\n");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.algorithm,
                r.replication,
                r.seed,
                r.n_train,
                r.n_test,
                r.free_parameters
                    .map_or_else(String::new, |p| p.to_string()),
                opt(m.map(|m| m.accuracy)),
                opt(m.map(|m| m.balanced_accuracy)),
                opt(m.and_then(|m| m.auc)),
            );
            let k = self.class_levels.len();
            for i in 0..k {
                for j in 0..k {
                    let _ = write!(out, ",{}", opt(m.map(|m| m.confusion[i][j])));
                }
            }
            let error = r.error.as_deref().unwrap_or("").replace(['"', ','], ";");
            let _ = writeln!(out, ",{},{}", r.order.join(" "), error);
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("algorithm,replication,wall_time_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.3}",
                r.algorithm,
                r.replication,
                r.wall_time.as_secs_f64() * 1e3
            );
        }
        out
    }

    /// Mean ± sd per algorithm and mean confusion proportions.
    pub fn summary_table(&self) -> String {
        let summary = self.summary();
        let width = summary
            .iter()
            .map(|s| s.algorithm.len())
            .max()
            .unwrap_or(9)
            .max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>17}  {:>17}  {:>17}  {:>15}",
            "algorithm", "fits", "accuracy", "balanced acc.", "auc", "free params"
        );
        let pm = |(m, s): (f64, f64)| format!("{m:.4} ± {s:.4}");
        for s in &summary {
            let _ = writeln!(
                out,
                "{:<width$}  {:>5}  {:>17}  {:>17}  {:>17}  {:>15}",
                s.algorithm,
                format!("{}/{}", s.fits, s.fits + s.failures),
                pm(s.accuracy),
                pm(s.balanced_accuracy),
                s.auc.map_or_else(|| "-".into(), pm),
                format!("{:.1} ± {:.1}", s.free_parameters.0, s.free_parameters.1),
            );
        }
        let _ = writeln!(
            out,
            "\nmean confusion proportions (rows: true class, columns: predicted)"
        );
        for s in &summary {
            let _ = writeln!(out, "{}", s.algorithm);
            let _ = writeln!(
                out,
                "  {:>8} {}",
                "",
                self.class_levels
                    .iter()
                    .map(|l| format!("{l:>8}"))
                    .collect::<String>()
            );
            for (i, row) in s.confusion.iter().enumerate() {
                let cells: String = row.iter().map(|x| format!("{x:>8.4}")).collect();
                let _ = writeln!(out, "  {:>8} {cells}", self.class_levels[i]);
            }
        }
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(
                out,
                "failed: {} replication {}: {}",
                r.algorithm,
                r.replication,
                r.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingStudy {
    pub seed: u64,
    pub cmi_order: Vec<String>,
    pub cmi_accuracy: f64,
    pub random_accuracies: Vec<f64>,
    pub median_random: f64,
}

/// Accuracy of `algorithm` under the CMI order against `n_random` random
/// orders, on one 80/20 split of `C = X1 * X2` with three noise features.
pub fn ordering_study(
    seed: u64,
    n_records: usize,
    n_random: usize,
    algorithm: Algorithm,
) -> Result<OrderingStudy> {
    let ds = generate_parity_with_noise(3, n_records, seed)?;
    let (train, test) = split(&ds, 0.8, replication_seed(seed, 0))?;
    let config = LearnConfig::new(algorithm);
    let accuracy = |order: &[String]| -> Result<f64> {
        let tree = train.tree(order)?;
        let (model, _) = learn(&tree_counts(&train, &tree)?, &config)?;
        Ok(evaluate(&model, &test, None)?.accuracy)
    };
    let cmi = OrderMode::Cmi.resolve(&train, 0.0)?;
    let cmi_accuracy = accuracy(&cmi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(seed, 1));
    let mut random_accuracies = Vec::with_capacity(n_random);
    for _ in 0..n_random {
        let mut order = train.feature_names();
        order.shuffle(&mut rng);
        random_accuracies.push(accuracy(&order)?);
    }
    Ok(OrderingStudy {
        seed,
        cmi_order: cmi,
        cmi_accuracy,
        median_random: median(&random_accuracies),
        random_accuracies,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|i| replication_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(replication_seed(7, 3), a[3]);
        assert_ne!(replication_seed(8, 3), a[3]);
    }

    #[test]
    fn statistics() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_sd(&[5.0]), (5.0, 0.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn algorithm_spec_parsing() {
        let a = AlgorithmSpec::parse("bj:0.05").unwrap();
        assert_eq!(a.label, "bj(0.05)");
        assert_eq!(a.config.kl_threshold, 0.05);
        assert_eq!(AlgorithmSpec::parse("naive_km").unwrap().label, "naive_km");
        assert!(AlgorithmSpec::parse("hc_full:1").is_err());
        assert!(AlgorithmSpec::parse("bj:0").is_err());
        assert!(AlgorithmSpec::parse("zz").is_err());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(
            parallel_map(&items, 4, |x| x * 2),
            (0..50).map(|x| x * 2).collect::<Vec<_>>()
        );
    }

    #[test]
    fn same_spec_same_bytes() {
        let algs = vec![
            AlgorithmSpec::parse("bj:0.01").unwrap(),
            AlgorithmSpec::parse("nb").unwrap(),
        ];
        let mut spec = ExperimentSpec::new("t", DataSource::Split(titanic()), algs);
        spec.replications = 1;
        spec.master_seed = 11;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary_table(), b.summary_table());
        assert_eq!(a.failures(), 0);
        assert_eq!(a.rows[0].n_train, 1761);
    }

    #[test]
    fn invalid_spec() {
        let mut spec = ExperimentSpec::xor(0, 0);
        assert!(run_experiment(&spec).is_err());
        spec.replications = 1;
        spec.algorithms.clear();
        assert!(run_experiment(&spec).is_err());
    }
}
