//! Synthetic data generators and the embedded Titanic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{read_csv, CategoricalDataset, LevelOrder};
use crate::error::{Error, Result};
use crate::model::{DepthStaging, EventTree, StagedTreeModel, Staging, VariableSpec};

const TITANIC_CSV: &str = include_str!("../data/titanic.csv");
const TITANIC_LEVELS: &str = include_str!("../data/titanic.levels");

fn sign_var(name: &str) -> VariableSpec {
    VariableSpec::new(name, vec!["-1".into(), "+1".into()]).expect("two distinct levels")
}

/// Features i.i.d. uniform on {-1, +1}; the class `C` is their product.
/// Level index 0 is `-1`, so the class index is the parity of the number of
/// `-1` features.
pub fn generate_parity(
    n_features: usize,
    n_records: usize,
    seed: u64,
) -> Result<CategoricalDataset> {
    if n_features == 0 {
        return Err(Error::InvalidConfig(
            "parity needs at least one feature".into(),
        ));
    }
    let mut vars = vec![sign_var("C")];
    vars.extend((1..=n_features).map(|i| sign_var(&format!("X{i}"))));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n_records)
        .map(|_| {
            let mut r = vec![0; n_features + 1];
            let mut negatives = 0;
            for x in &mut r[1..] {
                *x = rng.gen_range(0..2);
                negatives += usize::from(*x == 0);
            }
            r[0] = usize::from(negatives % 2 == 0);
            r
        })
        .collect();
    CategoricalDataset::new(vars, records, "C")
}

/// `C = X1 * X2` with `n_noise` independent uniform features `X3, ...`.
pub fn generate_parity_with_noise(
    n_noise: usize,
    n_records: usize,
    seed: u64,
) -> Result<CategoricalDataset> {
    let mut vars = vec![sign_var("C")];
    vars.extend((1..=2 + n_noise).map(|i| sign_var(&format!("X{i}"))));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n_records)
        .map(|_| {
            let mut r: Vec<usize> = (0..vars.len()).map(|_| rng.gen_range(0..2)).collect();
            r[0] = usize::from(r[1] == r[2]);
            r
        })
        .collect();
    CategoricalDataset::new(vars, records, "C")
}

/// Three binary variables `C, X1, X2` where the depth-2 vertices `(0,0)`,
/// `(1,1)` share one stage and `(0,1)`, `(1,0)` the other, a pattern no DAG
/// over these variables produces.
pub fn planted_cross_model(seed: u64) -> StagedTreeModel {
    let b = |n: &str| VariableSpec::indexed(n, 2).expect("binary");
    let tree = EventTree::new(b("C"), vec![b("X1"), b("X2")]).expect("small tree");
    let staging = Staging::new(
        &tree,
        vec![
            DepthStaging::single(1),
            DepthStaging::singletons(2),
            DepthStaging::new(vec![0, 1, 1, 0], None).expect("labels"),
        ],
    )
    .expect("shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bern = |lo: f64, hi: f64| {
        let p = rng.gen_range(lo..hi);
        vec![p, 1.0 - p]
    };
    let florets = vec![
        vec![bern(0.3, 0.7)],
        vec![bern(0.2, 0.8), bern(0.2, 0.8)],
        vec![bern(0.05, 0.25), bern(0.75, 0.95)],
    ];
    StagedTreeModel::new(tree, staging, florets).expect("valid florets")
}

/// `n` records drawn from `model`, columns in tree order.
pub fn sample_records(model: &StagedTreeModel, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let tree = model.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut outcome = Vec::with_capacity(tree.depth_count());
            let mut v = 0;
            for d in 0..tree.depth_count() {
                let floret = model.vertex_floret(d, v);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut level = floret.len() - 1;
                for (l, &p) in floret.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        level = l;
                        break;
                    }
                }
                outcome.push(level);
                v = tree.child(d, v, level);
            }
            outcome
        })
        .collect()
}

/// A dataset sampled from `model`, with its variables in tree order.
pub fn sample_dataset(model: &StagedTreeModel, n: usize, seed: u64) -> Result<CategoricalDataset> {
    let tree = model.tree();
    CategoricalDataset::new(
        tree.variables().to_vec(),
        sample_records(model, n, seed),
        tree.class_var().name(),
    )
}

/// Records drawn uniformly over the given cardinalities, variables `C, X1, ...`.
pub fn uniform_dataset(cardinalities: &[usize], n: usize, seed: u64) -> Result<CategoricalDataset> {
    let vars = cardinalities
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            VariableSpec::indexed(
                if i == 0 {
                    "C".to_string()
                } else {
                    format!("X{i}")
                },
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| cardinalities.iter().map(|&k| rng.gen_range(0..k)).collect())
        .collect();
    CategoricalDataset::new(vars, records, "C")
}

/// The 2201 passengers and crew of the Titanic by survival, sex, age and class,
/// with `Survived` as the class.
pub fn titanic() -> CategoricalDataset {
    let levels = LevelOrder::parse(TITANIC_LEVELS).expect("embedded levels file");
    read_csv(TITANIC_CSV.as_bytes(), "Survived", Some(&levels)).expect("embedded data")
}

pub fn titanic_csv() -> &'static str {
    TITANIC_CSV
}

pub fn titanic_levels() -> &'static str {
    TITANIC_LEVELS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_feature_parity_is_identity() {
        let ds = generate_parity(1, 50, 3).unwrap();
        assert!(ds.records().iter().all(|r| r[0] == r[1]));
    }

    #[test]
    fn parity_is_product_and_deterministic() {
        let ds = generate_parity(4, 200, 9).unwrap();
        for r in ds.records() {
            let product: i32 = r[1..]
                .iter()
                .map(|&x| if x == 1 { 1 } else { -1 })
                .product();
            assert_eq!(r[0], usize::from(product == 1));
        }
        assert_eq!(ds, generate_parity(4, 200, 9).unwrap());
        assert_ne!(ds, generate_parity(4, 200, 10).unwrap());
        assert!(generate_parity(0, 10, 0).is_err());
    }

    #[test]
    fn noisy_parity_shape() {
        let ds = generate_parity_with_noise(3, 100, 1).unwrap();
        assert_eq!(ds.variables().len(), 6);
        assert!(ds
            .records()
            .iter()
            .all(|r| r[0] == usize::from(r[1] == r[2])));
    }

    #[test]
    fn titanic_counts() {
        let ds = titanic();
        assert_eq!(ds.len(), 2201);
        assert_eq!(ds.class_counts(), vec![1490, 711]);
        assert_eq!(ds.feature_names(), vec!["Sex", "Age", "Class"]);
        assert_eq!(
            ds.variable("Class").unwrap().levels(),
            &["1st", "2nd", "3rd", "Crew"]
        );
    }

    #[test]
    fn sampling_follows_model() {
        let m = planted_cross_model(4);
        let rows = sample_records(&m, 20_000, 5);
        let c1 = rows.iter().filter(|r| r[0] == 1).count() as f64 / rows.len() as f64;
        assert!((c1 - m.floret(0, 0)[1]).abs() < 0.02);
    }
}
