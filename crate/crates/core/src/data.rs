//! Categorical datasets, event-tree counts and train/test splits.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{EventTree, VariableSpec};

/// Labelled records over named categorical variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalDataset {
    variables: Vec<VariableSpec>,
    records: Vec<Vec<usize>>,
    class_index: usize,
}

impl CategoricalDataset {
    pub fn new(
        variables: Vec<VariableSpec>,
        records: Vec<Vec<usize>>,
        class_column: &str,
    ) -> Result<Self> {
        let class_index = variables
            .iter()
            .position(|v| v.name() == class_column)
            .ok_or_else(|| Error::MissingColumn(class_column.to_string()))?;
        let mut names = std::collections::HashSet::new();
        for v in &variables {
            if !names.insert(v.name()) {
                return Err(Error::DuplicateVariable(v.name().to_string()));
            }
        }
        for r in &records {
            if r.len() != variables.len() {
                return Err(Error::AssignmentLength {
                    expected: variables.len(),
                    found: r.len(),
                });
            }
            for (v, &x) in variables.iter().zip(r) {
                if x >= v.cardinality() {
                    return Err(Error::LevelOutOfRange {
                        var: v.name().to_string(),
                        level: x,
                        cardinality: v.cardinality(),
                    });
                }
            }
        }
        Ok(Self {
            variables,
            records,
            class_index,
        })
    }

    /// Same variables, different records (assumed valid).
    pub fn with_records(&self, records: Vec<Vec<usize>>) -> Self {
        Self {
            variables: self.variables.clone(),
            records,
            class_index: self.class_index,
        }
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn records(&self) -> &[Vec<usize>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn class_var(&self) -> &VariableSpec {
        &self.variables[self.class_index]
    }

    /// Feature names in column order.
    pub fn feature_names(&self) -> Vec<String> {
        self.variables
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.class_index)
            .map(|(_, v)| v.name().to_string())
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        Ok(&self.variables[self.column_index(name)?])
    }

    /// Event tree with the class at the root and features in `order`.
    pub fn tree(&self, order: &[String]) -> Result<EventTree> {
        let features = order
            .iter()
            .map(|n| self.variable(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        EventTree::new(self.class_var().clone(), features)
    }

    /// Event tree with features in column order.
    pub fn tree_as_is(&self) -> Result<EventTree> {
        self.tree(&self.feature_names())
    }

    pub fn decode(&self, record: &[usize]) -> Vec<&str> {
        self.variables
            .iter()
            .zip(record)
            .map(|(v, &x)| v.levels()[x].as_str())
            .collect()
    }

    pub fn encode(&self, labels: &[&str]) -> Result<Vec<usize>> {
        if labels.len() != self.variables.len() {
            return Err(Error::AssignmentLength {
                expected: self.variables.len(),
                found: labels.len(),
            });
        }
        self.variables
            .iter()
            .zip(labels)
            .map(|(v, l)| {
                v.level_index(l).ok_or_else(|| Error::UnknownLevel {
                    var: v.name().to_string(),
                    level: l.to_string(),
                })
            })
            .collect()
    }

    /// Level frequencies of the class.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut c = vec![0; self.class_var().cardinality()];
        for r in &self.records {
            c[r[self.class_index]] += 1;
        }
        c
    }

    /// Stable 64-bit FNV-1a digest of variables and records.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        for v in &self.variables {
            h.write(v.name().as_bytes());
            h.write(&[0xff]);
            for l in v.levels() {
                h.write(l.as_bytes());
                h.write(&[0xfe]);
            }
        }
        h.write(&(self.class_index as u64).to_le_bytes());
        for r in &self.records {
            for &x in r {
                h.write(&(x as u32).to_le_bytes());
            }
        }
        h.finish()
    }
}

struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Pinned level orders, one entry per variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LevelOrder {
    orders: HashMap<String, Vec<String>>,
}

impl LevelOrder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, variable: &str, levels: Vec<String>) {
        self.orders.insert(variable.to_string(), levels);
    }

    pub fn get(&self, variable: &str) -> Option<&[String]> {
        self.orders.get(variable).map(Vec::as_slice)
    }

    /// Parses a sidecar: one CSV line per variable, `name,level1,level2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut out = Self::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut it = rec.iter().map(str::trim);
            let Some(name) = it.next().filter(|n| !n.is_empty()) else {
                continue;
            };
            let levels: Vec<String> = it.map(String::from).collect();
            if levels.iter().any(String::is_empty) {
                return Err(Error::LevelsFile(format!("empty level for `{name}`")));
            }
            if out.orders.contains_key(name) {
                return Err(Error::LevelsFile(format!("`{name}` listed twice")));
            }
            out.insert(name, levels);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Reads a CSV file with a header row; every column is categorical.
pub fn load_csv(
    path: impl AsRef<Path>,
    class_column: &str,
    level_order: Option<&LevelOrder>,
) -> Result<CategoricalDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, class_column, level_order)
}

pub fn read_csv<R: Read>(
    reader: R,
    class_column: &str,
    level_order: Option<&LevelOrder>,
) -> Result<CategoricalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if !header.iter().any(|h| h == class_column) {
        return Err(Error::MissingColumn(class_column.to_string()));
    }
    let mut levels: Vec<Vec<String>> = header
        .iter()
        .map(|h| {
            level_order
                .and_then(|o| o.get(h))
                .map(<[String]>::to_vec)
                .unwrap_or_default()
        })
        .collect();
    let pinned: Vec<bool> = header
        .iter()
        .map(|h| level_order.and_then(|o| o.get(h)).is_some())
        .collect();
    let mut index: Vec<HashMap<String, usize>> = levels
        .iter()
        .map(|ls| ls.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect())
        .collect();

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut encoded = Vec::with_capacity(header.len());
        for (col, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::EmptyCell {
                    row: row + 1,
                    column: header[col].clone(),
                });
            }
            let idx = match index[col].get(cell) {
                Some(&i) => i,
                None if pinned[col] => {
                    return Err(Error::UnknownLevel {
                        var: header[col].clone(),
                        level: cell.to_string(),
                    })
                }
                None => {
                    let i = levels[col].len();
                    levels[col].push(cell.to_string());
                    index[col].insert(cell.to_string(), i);
                    i
                }
            };
            encoded.push(idx);
        }
        records.push(encoded);
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let variables = header
        .iter()
        .zip(levels)
        .map(|(h, ls)| {
            if ls.len() < 2 {
                return Err(Error::SingleLevel(h.clone()));
            }
            VariableSpec::new(h.clone(), ls)
        })
        .collect::<Result<Vec<_>>>()?;
    CategoricalDataset::new(variables, records, class_column)
}

/// Seeded shuffle, then the first `round(fraction * N)` records form the train part.
pub fn split(
    dataset: &CategoricalDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(CategoricalDataset, CategoricalDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidSplit(format!(
            "fraction {train_fraction} of {n} records leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| dataset.records[i].clone()).collect();
    Ok((
        dataset.with_records(pick(&idx[..n_train])),
        dataset.with_records(pick(&idx[n_train..])),
    ))
}

/// Per-depth, per-vertex, per-level record counts along an event tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeCounts {
    tree: EventTree,
    // counts[d][v * card_d + l]
    counts: Vec<Vec<u64>>,
    n_records: u64,
}

impl TreeCounts {
    /// Counts from outcomes already in tree order.
    pub fn from_outcomes<'a, I>(tree: &EventTree, outcomes: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut counts: Vec<Vec<u64>> = (0..tree.depth_count())
            .map(|d| vec![0; tree.vertex_count(d) * tree.cardinality(d)])
            .collect();
        let mut n = 0;
        for o in outcomes {
            tree.check_assignment(o)?;
            let mut v = 0;
            for (d, &x) in o.iter().enumerate() {
                counts[d][v * tree.cardinality(d) + x] += 1;
                v = tree.child(d, v, x);
            }
            n += 1;
        }
        Ok(Self {
            tree: tree.clone(),
            counts,
            n_records: n,
        })
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn n_records(&self) -> u64 {
        self.n_records
    }

    pub fn depth(&self, depth: usize) -> &[u64] {
        &self.counts[depth]
    }

    /// Level counts at one vertex.
    pub fn vertex(&self, depth: usize, vertex: usize) -> &[u64] {
        let c = self.tree.cardinality(depth);
        &self.counts[depth][vertex * c..(vertex + 1) * c]
    }

    /// Records reaching a vertex.
    pub fn reach(&self, depth: usize, vertex: usize) -> u64 {
        self.vertex(depth, vertex).iter().sum()
    }
}

/// Maps tree depths to dataset columns.
#[derive(Debug, Clone)]
pub struct Projection {
    columns: Vec<usize>,
}

impl Projection {
    pub fn new(dataset: &CategoricalDataset, tree: &EventTree) -> Result<Self> {
        let columns = tree
            .variables()
            .iter()
            .map(|v| {
                let col = dataset.column_index(v.name())?;
                if dataset.variables()[col].levels() != v.levels() {
                    return Err(Error::InvalidStaging(format!(
                        "levels of `{}` differ between tree and dataset",
                        v.name()
                    )));
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns })
    }

    pub fn project(&self, record: &[usize]) -> Vec<usize> {
        self.columns.iter().map(|&c| record[c]).collect()
    }

    pub fn project_into(&self, record: &[usize], out: &mut Vec<usize>) {
        out.clear();
        out.extend(self.columns.iter().map(|&c| record[c]));
    }
}

/// Counts of `dataset` along `tree` (whose variables may be in any order).
pub fn tree_counts(dataset: &CategoricalDataset, tree: &EventTree) -> Result<TreeCounts> {
    let proj = Projection::new(dataset, tree)?;
    let outcomes: Vec<Vec<usize>> = dataset.records().iter().map(|r| proj.project(r)).collect();
    TreeCounts::from_outcomes(tree, outcomes.iter().map(Vec::as_slice))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(n: &str) -> VariableSpec {
        VariableSpec::indexed(n, 2).unwrap()
    }

    #[test]
    fn hand_counts() {
        let ds =
            CategoricalDataset::new(vec![bin("C"), bin("X")], vec![vec![0, 0], vec![0, 1]], "C")
                .unwrap();
        let t = ds.tree_as_is().unwrap();
        let tc = tree_counts(&ds, &t).unwrap();
        assert_eq!(tc.vertex(0, 0), &[2, 0]);
        assert_eq!(tc.vertex(1, 0), &[1, 1]);
        assert_eq!(tc.vertex(1, 1), &[0, 0]);
    }

    #[test]
    fn class_only_counts_are_frequencies() {
        let ds = CategoricalDataset::new(
            vec![bin("X"), bin("C")],
            vec![vec![0, 1], vec![1, 1], vec![0, 0]],
            "C",
        )
        .unwrap();
        let t = ds.tree(&[]).unwrap();
        let tc = tree_counts(&ds, &t).unwrap();
        assert_eq!(tc.vertex(0, 0), &[1, 2]);
        assert_eq!(ds.class_counts(), vec![1, 2]);
    }

    #[test]
    fn unknown_tree_variable() {
        let ds = CategoricalDataset::new(vec![bin("C"), bin("X")], vec![vec![0, 0]], "C").unwrap();
        let other = EventTree::new(bin("C"), vec![bin("Y")]).unwrap();
        assert!(matches!(
            tree_counts(&ds, &other),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn csv_errors() {
        let one_level = "C,X\na,b\na,c\n";
        assert!(
            matches!(read_csv(one_level.as_bytes(), "C", None), Err(Error::SingleLevel(c)) if c == "C")
        );
        assert!(matches!(
            read_csv("C,X\n".as_bytes(), "C", None),
            Err(Error::NoRecords)
        ));
        assert!(matches!(
            read_csv("C,X\na,b\n".as_bytes(), "Y", None),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(
            read_csv("C,X\na,b\n,c\n".as_bytes(), "C", None),
            Err(Error::EmptyCell { row: 2, .. })
        ));
    }

    #[test]
    fn csv_levels_first_appearance_and_pinned() {
        let text = "C,X\nyes,\"b, quoted\"\nno,a\nyes,a\n";
        let ds = read_csv(text.as_bytes(), "C", None).unwrap();
        assert_eq!(ds.variable("C").unwrap().levels(), &["yes", "no"]);
        assert_eq!(ds.variable("X").unwrap().levels(), &["b, quoted", "a"]);
        let order = LevelOrder::parse("C,no,yes\n").unwrap();
        let ds = read_csv(text.as_bytes(), "C", Some(&order)).unwrap();
        assert_eq!(ds.variable("C").unwrap().levels(), &["no", "yes"]);
        assert_eq!(ds.records()[0], vec![1, 0]);
        let bad = LevelOrder::parse("C,no,maybe\n").unwrap();
        assert!(matches!(
            read_csv(text.as_bytes(), "C", Some(&bad)),
            Err(Error::UnknownLevel { .. })
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let recs: Vec<Vec<usize>> = (0..10).map(|i| vec![i % 2, (i / 2) % 2]).collect();
        let ds = CategoricalDataset::new(vec![bin("C"), bin("X")], recs, "C").unwrap();
        let (a, b) = split(&ds, 0.8, 7).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a2, b2) = split(&ds, 0.8, 7).unwrap();
        assert_eq!((a, b), (a2, b2));
        assert!(split(&ds, 0.01, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
        assert!(split(&ds, 0.0, 1).is_err());
    }

    #[test]
    fn encode_decode() {
        let ds = read_csv("C,X\nyes,a\nno,b\n".as_bytes(), "C", None).unwrap();
        for r in ds.records() {
            let labels = ds.decode(r);
            assert_eq!(&ds.encode(&labels).unwrap(), r);
        }
    }
}
