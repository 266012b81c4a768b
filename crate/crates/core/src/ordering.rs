//! Feature ordering by greedy conditional mutual information with the class.

use crate::data::CategoricalDataset;
use crate::error::{Error, Result};

/// Largest contingency table a CMI evaluation may allocate.
pub const DEFAULT_CELL_CAP: u128 = 1 << 26;

/// Scores closer than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingResult {
    pub order: Vec<String>,
    /// CMI (nats) of each chosen feature given the ones chosen before it.
    pub scores: Vec<f64>,
}

/// Plug-in estimate of `I(X; C | given)` in nats, with `smoothing` pseudo-counts
/// added to every cell of the `(given, X, C)` table.
pub fn conditional_mutual_information(
    dataset: &CategoricalDataset,
    x: &str,
    c: &str,
    given: &[String],
    smoothing: f64,
) -> Result<f64> {
    cmi_capped(dataset, x, c, given, smoothing, DEFAULT_CELL_CAP)
}

pub fn cmi_capped(
    dataset: &CategoricalDataset,
    x: &str,
    c: &str,
    given: &[String],
    smoothing: f64,
    cell_cap: u128,
) -> Result<f64> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "smoothing {smoothing} must be finite and >= 0"
        )));
    }
    if given.iter().any(|g| g == x) {
        return Err(Error::TargetInConditioningSet(x.to_string()));
    }
    let xi = dataset.column_index(x)?;
    let ci = dataset.column_index(c)?;
    let gi = given
        .iter()
        .map(|g| dataset.column_index(g))
        .collect::<Result<Vec<_>>>()?;
    let vars = dataset.variables();
    let nx = vars[xi].cardinality();
    let nc = vars[ci].cardinality();
    let gcards: Vec<usize> = gi.iter().map(|&i| vars[i].cardinality()).collect();
    let nz: u128 = gcards.iter().map(|&k| k as u128).product();
    let cells = nz * (nx * nc) as u128;
    if cells > cell_cap {
        return Err(Error::ConditioningTooLarge {
            cells,
            cap: cell_cap,
        });
    }
    let nz = nz as usize;
    let mut table = vec![smoothing; nz * nx * nc];
    for r in dataset.records() {
        let z = gi
            .iter()
            .zip(&gcards)
            .fold(0, |acc, (&i, &k)| acc * k + r[i]);
        table[(z * nx + r[xi]) * nc + r[ci]] += 1.0;
    }
    let total: f64 = table.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    let mut n_x = vec![0.0; nx];
    let mut n_c = vec![0.0; nc];
    for z in 0..nz {
        let block = &table[z * nx * nc..(z + 1) * nx * nc];
        let n_z: f64 = block.iter().sum();
        if n_z == 0.0 {
            continue;
        }
        n_x.iter_mut().for_each(|v| *v = 0.0);
        n_c.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..nx {
            for b in 0..nc {
                let n = block[a * nc + b];
                n_x[a] += n;
                n_c[b] += n;
            }
        }
        for a in 0..nx {
            for b in 0..nc {
                let n = block[a * nc + b];
                if n > 0.0 {
                    mi += n * ((n * n_z) / (n_x[a] * n_c[b])).ln();
                }
            }
        }
    }
    Ok(mi / total)
}

/// Greedy order: at each step the feature with the largest CMI with the class
/// given all features chosen so far. Ties go to the earlier column.
pub fn cmi_order(dataset: &CategoricalDataset, smoothing: f64) -> Result<OrderingResult> {
    let class = dataset.class_var().name().to_string();
    let mut remaining = dataset.feature_names();
    if remaining.is_empty() {
        return Err(Error::InvalidConfig(
            "dataset has no features to order".into(),
        ));
    }
    let mut order = Vec::with_capacity(remaining.len());
    let mut scores = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in remaining.iter().enumerate() {
            let s = conditional_mutual_information(dataset, f, &class, &order, smoothing)?;
            if best.is_none_or(|(_, b)| s > b + TIE_TOL) {
                best = Some((i, s));
            }
        }
        let (i, s) = best.expect("non-empty candidate list");
        order.push(remaining.remove(i));
        scores.push(s);
    }
    Ok(OrderingResult { order, scores })
}

/// How the feature order of a tree is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderMode {
    Cmi,
    AsIs,
    Explicit(Vec<String>),
}

impl OrderMode {
    pub fn resolve(&self, dataset: &CategoricalDataset, smoothing: f64) -> Result<Vec<String>> {
        match self {
            OrderMode::Cmi => Ok(cmi_order(dataset, smoothing)?.order),
            OrderMode::AsIs => Ok(dataset.feature_names()),
            OrderMode::Explicit(order) => {
                check_permutation(dataset, order)?;
                Ok(order.clone())
            }
        }
    }
}

/// Parses an order list: names separated by newlines and/or commas.
pub fn parse_order_list(text: &str) -> Vec<String> {
    text.split(['\n', ','])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

pub fn check_permutation(dataset: &CategoricalDataset, order: &[String]) -> Result<()> {
    let mut expected = dataset.feature_names();
    let mut got = order.to_vec();
    expected.sort();
    got.sort();
    if expected != got {
        return Err(Error::InvalidConfig(format!(
            "order {order:?} is not a permutation of the features {:?}",
            dataset.feature_names()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariableSpec;

    fn ds(names: &[&str], rows: Vec<Vec<usize>>, class: &str) -> CategoricalDataset {
        CategoricalDataset::new(
            names
                .iter()
                .map(|n| VariableSpec::indexed(*n, 2).unwrap())
                .collect(),
            rows,
            class,
        )
        .unwrap()
    }

    /// Exhaustive truth table over X1, X2, X3 with C = X1 xor X2.
    fn parity_table() -> CategoricalDataset {
        let rows = (0..8)
            .map(|i| {
                let (a, b, n) = (i >> 2 & 1, i >> 1 & 1, i & 1);
                vec![a, b, n, a ^ b]
            })
            .collect();
        ds(&["X1", "X2", "X3", "C"], rows, "C")
    }

    #[test]
    fn identical_variables_give_ln2() {
        let d = ds(
            &["X", "C"],
            vec![vec![0, 0], vec![1, 1], vec![0, 0], vec![1, 1]],
            "C",
        );
        let i = conditional_mutual_information(&d, "X", "C", &[], 0.0).unwrap();
        assert!((i - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn parity_needs_conditioning() {
        let d = parity_table();
        let marg = conditional_mutual_information(&d, "X2", "C", &[], 0.0).unwrap();
        let cond = conditional_mutual_information(&d, "X2", "C", &["X1".into()], 0.0).unwrap();
        assert_eq!(marg, 0.0);
        assert!((cond - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn parity_order_picks_partner_second() {
        let r = cmi_order(&parity_table(), 0.0).unwrap();
        assert_eq!(r.order, vec!["X1", "X2", "X3"]);
        assert_eq!(r.scores[0], 0.0);
        assert!((r.scores[1] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let d = parity_table();
        assert!(matches!(
            conditional_mutual_information(&d, "X1", "C", &["X1".into()], 0.0),
            Err(Error::TargetInConditioningSet(_))
        ));
        assert!(matches!(
            conditional_mutual_information(&d, "Q", "C", &[], 0.0),
            Err(Error::UnknownVariable(_))
        ));
        assert!(matches!(
            cmi_capped(&d, "X3", "C", &["X1".into(), "X2".into()], 0.0, 8),
            Err(Error::ConditioningTooLarge { .. })
        ));
    }

    #[test]
    fn smoothing_shrinks_towards_zero() {
        let d = ds(&["X", "C"], vec![vec![0, 0], vec![1, 1]], "C");
        let raw = conditional_mutual_information(&d, "X", "C", &[], 0.0).unwrap();
        let smooth = conditional_mutual_information(&d, "X", "C", &[], 1.0).unwrap();
        assert!(smooth < raw && smooth > 0.0);
    }

    #[test]
    fn order_list_parsing() {
        assert_eq!(parse_order_list("a, b\nc\n\n"), vec!["a", "b", "c"]);
        let d = parity_table();
        assert!(OrderMode::Explicit(vec!["X2".into(), "X1".into()])
            .resolve(&d, 0.0)
            .is_err());
        assert_eq!(
            OrderMode::Explicit(vec!["X3".into(), "X1".into(), "X2".into()])
                .resolve(&d, 0.0)
                .unwrap(),
            vec!["X3", "X1", "X2"]
        );
    }
}
