//! Posterior classification and evaluation metrics.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{CategoricalDataset, Projection};
use crate::error::{Error, Result};
use crate::model::StagedTreeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted: usize,
    pub posterior: Vec<f64>,
    /// The features had zero probability under every class, so the class
    /// marginal was used instead.
    pub fallback: bool,
}

/// `P(C = c | x)` for every class, from the paths `(c, x)`. `features` are
/// level indices in tree order, class excluded.
pub fn posterior(model: &StagedTreeModel, features: &[usize]) -> Result<Prediction> {
    let tree = model.tree();
    let mut outcome = Vec::with_capacity(tree.depth_count());
    outcome.push(0);
    outcome.extend_from_slice(features);
    tree.check_assignment(&outcome)?;
    let mut joint: Vec<f64> = (0..tree.class_count())
        .map(|c| {
            outcome[0] = c;
            model.path_probability(&outcome)
        })
        .collect();
    let total: f64 = joint.iter().sum();
    let fallback = !(total > 0.0);
    if fallback {
        joint = model.floret(0, 0).to_vec();
    } else {
        joint.iter_mut().for_each(|p| *p /= total);
    }
    Ok(Prediction {
        predicted: argmax(&joint),
        posterior: joint,
        fallback,
    })
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_class(model: &StagedTreeModel, features: &[usize]) -> Result<usize> {
    Ok(posterior(model, features)?.predicted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_levels: Vec<String>,
    /// Row = true class, column = predicted class, as proportions of `n_test`.
    pub confusion: Vec<Vec<f64>>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub auc: Option<f64>,
    pub n_test: usize,
    pub n_fallback: usize,
}

/// Evaluates `model` on a labelled dataset. For a binary class the AUC is
/// computed for `positive_class` (default: level index 1).
pub fn evaluate(
    model: &StagedTreeModel,
    test: &CategoricalDataset,
    positive_class: Option<usize>,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let tree = model.tree();
    let k = tree.class_count();
    let proj = Projection::new(test, tree)?;
    let mut counts = vec![vec![0u64; k]; k];
    let mut scored = Vec::with_capacity(test.len());
    let mut n_fallback = 0;
    let mut outcome = Vec::with_capacity(tree.depth_count());
    for record in test.records() {
        proj.project_into(record, &mut outcome);
        let pred = posterior(model, &outcome[1..])?;
        counts[outcome[0]][pred.predicted] += 1;
        n_fallback += pred.fallback as usize;
        scored.push((outcome[0], pred.posterior));
    }
    let n = test.len() as f64;
    let correct: u64 = (0..k).map(|c| counts[c][c]).sum();
    let recalls: Vec<f64> = counts
        .iter()
        .enumerate()
        .filter_map(|(c, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    let auc = if k == 2 {
        let pos = positive_class.unwrap_or(1);
        if pos >= k {
            return Err(Error::LevelOutOfRange {
                var: tree.class_var().name().to_string(),
                level: pos,
                cardinality: k,
            });
        }
        let scores: Vec<(f64, bool)> = scored.iter().map(|(y, p)| (p[pos], *y == pos)).collect();
        auc_mann_whitney(&scores)
    } else {
        None
    };
    Ok(MetricsReport {
        class_levels: tree.class_var().levels().to_vec(),
        confusion: counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect(),
        accuracy: correct as f64 / n,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        auc,
        n_test: test.len(),
        n_fallback,
    })
}

/// Area under the ROC curve via the rank-sum statistic, ties at mid-rank.
/// `None` when one of the two groups is empty.
pub fn auc_mann_whitney(scores: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&o| scores[o].1).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Reads feature columns by name from `input` (other columns, including the
/// class if present, are passed through) and writes each row followed by
/// `predicted` and one `p_<level>` column per class level.
pub fn predict_csv<R: Read, W: Write>(
    model: &StagedTreeModel,
    input: R,
    output: W,
) -> Result<usize> {
    let tree = model.tree();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let columns = tree
        .feature_vars()
        .iter()
        .map(|v| {
            header
                .iter()
                .position(|h| h == v.name())
                .ok_or_else(|| Error::MissingColumn(v.name().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let lookups: Vec<HashMap<&str, usize>> = tree
        .feature_vars()
        .iter()
        .map(|v| {
            v.levels()
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i))
                .collect()
        })
        .collect();

    let mut wtr = csv::Writer::from_writer(output);
    let mut out_header = header.clone();
    out_header.push("predicted".into());
    out_header.extend(tree.class_var().levels().iter().map(|l| format!("p_{l}")));
    wtr.write_record(&out_header)?;

    let mut rows = 0;
    let mut features = vec![0; columns.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (i, &col) in columns.iter().enumerate() {
            let cell = rec.get(col).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::EmptyCell {
                    row: row + 1,
                    column: header[col].clone(),
                });
            }
            features[i] = *lookups[i].get(cell).ok_or_else(|| Error::UnknownLevel {
                var: header[col].clone(),
                level: cell.to_string(),
            })?;
        }
        let pred = posterior(model, &features)?;
        let mut out: Vec<String> = rec.iter().map(str::to_string).collect();
        out.push(tree.class_var().levels()[pred.predicted].clone());
        out.extend(pred.posterior.iter().map(|p| p.to_string()));
        wtr.write_record(&out)?;
        rows += 1;
    }
    wtr.flush()?;
    Ok(rows)
}
