#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stagedtree::data::{tree_counts, CategoricalDataset, TreeCounts};
use stagedtree::model::{DepthStaging, EventTree, StagedTreeModel, Staging, VariableSpec};
use stagedtree::synth::sample_dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_floret(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn tree_for(cards: &[usize]) -> EventTree {
    let vars: Vec<VariableSpec> = cards
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
            .unwrap()
        })
        .collect();
    EventTree::from_variables(vars).unwrap()
}

/// Random labels per depth drawn from `0..=max_stages`.
pub fn random_staging(rng: &mut ChaCha8Rng, tree: &EventTree, max_stages: usize) -> Staging {
    let depths = (0..tree.depth_count())
        .map(|d| {
            let labels = (0..tree.vertex_count(d))
                .map(|_| rng.gen_range(0..max_stages.max(1)))
                .collect();
            DepthStaging::new(labels, None).unwrap()
        })
        .collect();
    Staging::new(tree, depths).unwrap()
}

pub fn model_with(rng: &mut ChaCha8Rng, tree: &EventTree, staging: Staging) -> StagedTreeModel {
    let florets = (0..tree.depth_count())
        .map(|d| {
            (0..staging.stage_count(d))
                .map(|_| random_floret(rng, tree.cardinality(d)))
                .collect()
        })
        .collect();
    StagedTreeModel::new(tree.clone(), staging, florets).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, cards: &[usize]) -> StagedTreeModel {
    let tree = tree_for(cards);
    let staging = Staging::full(&tree);
    model_with(rng, &tree, staging)
}

/// Data sampled from a random full model, and its counts along the column order.
pub fn random_data(seed: u64, cards: &[usize], n: usize) -> (CategoricalDataset, TreeCounts) {
    let mut r = rng(seed);
    let model = random_model(&mut r, cards);
    let ds = sample_dataset(&model, n, r.gen()).unwrap();
    let tree = ds.tree_as_is().unwrap();
    let tc = tree_counts(&ds, &tree).unwrap();
    (ds, tc)
}
