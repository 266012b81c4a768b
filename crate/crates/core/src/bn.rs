//! Bayesian network classifiers as staged trees.
//!
//! A DAG whose variables follow the tree order converts to the staging where
//! two vertices at depth `d` share a stage exactly when their prefixes agree on
//! the parents of variable `d`. Conditional probability tables are stored with
//! parent configurations in mixed radix (earlier parent = more significant
//! digit), the same convention the event tree uses for vertices.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{DepthStaging, EventTree, StagedTreeModel, Staging, VariableSpec};

const CPT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DagSpec {
    variables: Vec<VariableSpec>,
    /// Parent positions per variable, ascending, all earlier in the order.
    parents: Vec<Vec<usize>>,
    /// Per variable, one row per parent configuration.
    cpts: Option<Vec<Vec<Vec<f64>>>>,
}

impl DagSpec {
    /// `variables[0]` is the class; `parents[i]` names parents of variable `i`.
    pub fn new(variables: Vec<VariableSpec>, parents: Vec<Vec<String>>) -> Result<Self> {
        if variables.is_empty() || parents.len() != variables.len() {
            return Err(Error::InvalidDag(
                "one parent list per variable is required".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &variables {
            if !seen.insert(v.name()) {
                return Err(Error::DuplicateVariable(v.name().to_string()));
            }
        }
        let mut resolved = Vec::with_capacity(variables.len());
        for (i, ps) in parents.iter().enumerate() {
            let mut idx = Vec::with_capacity(ps.len());
            for p in ps {
                let j = variables
                    .iter()
                    .position(|v| v.name() == p)
                    .ok_or_else(|| Error::UnknownVariable(p.clone()))?;
                if j >= i {
                    return Err(Error::InvalidDag(format!(
                        "parent `{p}` of `{}` does not precede it in the order",
                        variables[i].name()
                    )));
                }
                idx.push(j);
            }
            idx.sort_unstable();
            idx.dedup();
            resolved.push(idx);
        }
        if !resolved[0].is_empty() {
            return Err(Error::InvalidDag(
                "the class variable cannot have parents".into(),
            ));
        }
        Ok(Self {
            variables,
            parents: resolved,
            cpts: None,
        })
    }

    /// Parent sets given by position.
    pub fn from_indices(variables: Vec<VariableSpec>, parents: Vec<Vec<usize>>) -> Result<Self> {
        let names = parents
            .iter()
            .map(|ps| {
                ps.iter()
                    .map(|&j| {
                        variables
                            .get(j)
                            .map(|v| v.name().to_string())
                            .ok_or_else(|| {
                                Error::InvalidDag(format!("parent index {j} out of range"))
                            })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(variables, names)
    }

    /// Naive Bayes: the class is the only parent of every feature.
    pub fn naive_bayes(tree: &EventTree) -> Self {
        let mut parents = vec![Vec::new()];
        parents.extend((1..tree.depth_count()).map(|_| vec![0]));
        Self {
            variables: tree.variables().to_vec(),
            parents,
            cpts: None,
        }
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn parents(&self, var: usize) -> &[usize] {
        &self.parents[var]
    }

    pub fn cpts(&self) -> Option<&[Vec<Vec<f64>>]> {
        self.cpts.as_deref()
    }

    pub fn parent_configurations(&self, var: usize) -> usize {
        self.parents[var]
            .iter()
            .map(|&p| self.variables[p].cardinality())
            .product()
    }

    /// Attaches CPTs after checking shapes and row sums.
    pub fn with_cpts(mut self, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if cpts.len() != self.variables.len() {
            return Err(Error::InvalidDag(format!(
                "{} cpts for {} variables",
                cpts.len(),
                self.variables.len()
            )));
        }
        for (i, table) in cpts.iter().enumerate() {
            let name = self.variables[i].name();
            if table.len() != self.parent_configurations(i) {
                return Err(Error::InvalidDag(format!(
                    "cpt of `{name}` has {} rows, expected {}",
                    table.len(),
                    self.parent_configurations(i)
                )));
            }
            for (r, row) in table.iter().enumerate() {
                if row.len() != self.variables[i].cardinality()
                    || row.iter().any(|&p| !(0.0..=1.0).contains(&p))
                {
                    return Err(Error::InvalidDag(format!(
                        "cpt row {r} of `{name}` is malformed"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CPT_TOL {
                    return Err(Error::UnnormalizedCpt {
                        var: name.to_string(),
                        row: r,
                        sum,
                    });
                }
            }
        }
        self.cpts = Some(cpts);
        Ok(self)
    }

    fn parent_config(&self, var: usize, assignment: &[usize]) -> usize {
        self.parents[var].iter().fold(0, |acc, &p| {
            acc * self.variables[p].cardinality() + assignment[p]
        })
    }

    fn check_tree(&self, tree: &EventTree) -> Result<()> {
        if tree.variables() != self.variables.as_slice() {
            return Err(Error::OrderMismatch);
        }
        Ok(())
    }

    /// The staging of the staged tree equivalent to this DAG.
    pub fn staging(&self, tree: &EventTree) -> Result<Staging> {
        self.check_tree(tree)?;
        let depths = (0..tree.depth_count())
            .map(|d| {
                let labels = (0..tree.vertex_count(d))
                    .map(|v| self.parent_config(d, &tree.prefix_of(d, v)))
                    .collect();
                DepthStaging::new(labels, None)
            })
            .collect::<Result<Vec<_>>>()?;
        Staging::new(tree, depths)
    }

    /// The staged tree model with florets copied from the CPTs.
    pub fn to_model(&self, tree: &EventTree) -> Result<StagedTreeModel> {
        let cpts = self
            .cpts
            .as_ref()
            .ok_or_else(|| Error::InvalidDag("conversion needs cpts".into()))?;
        let staging = self.staging(tree)?;
        let florets = (0..tree.depth_count())
            .map(|d| {
                staging
                    .depth(d)
                    .members()
                    .iter()
                    .map(|vs| cpts[d][self.parent_config(d, &tree.prefix_of(d, vs[0]))].clone())
                    .collect()
            })
            .collect();
        StagedTreeModel::new(tree.clone(), staging, florets)
    }

    /// `∏_k P(x_k | x_parents(k))`.
    pub fn joint_probability(&self, outcome: &[usize]) -> Result<f64> {
        let cpts = self
            .cpts
            .as_ref()
            .ok_or_else(|| Error::InvalidDag("joint probability needs cpts".into()))?;
        if outcome.len() != self.variables.len() {
            return Err(Error::AssignmentLength {
                expected: self.variables.len(),
                found: outcome.len(),
            });
        }
        for (v, &x) in self.variables.iter().zip(outcome) {
            if x >= v.cardinality() {
                return Err(Error::LevelOutOfRange {
                    var: v.name().to_string(),
                    level: x,
                    cardinality: v.cardinality(),
                });
            }
        }
        Ok((0..self.variables.len())
            .map(|k| cpts[k][self.parent_config(k, outcome)][outcome[k]])
            .product())
    }

    /// Parses the line format
    /// `name | levels: a,b | parents: p,q | cpt: 0.2,0.8,...`.
    /// The first line is the class. `parents` and `cpt` are optional; CPTs must
    /// be given for every variable or for none. Lines starting with `#` are
    /// comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut variables = Vec::new();
        let mut parents = Vec::new();
        let mut cpts: Vec<Option<Vec<f64>>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('|').map(str::trim);
            let name = parts.next().filter(|n| !n.is_empty()).ok_or_else(|| {
                Error::InvalidDag(format!("line {}: missing variable name", lineno + 1))
            })?;
            let (mut levels, mut ps, mut cpt) = (None, Vec::new(), None);
            for part in parts {
                let (key, value) = part.split_once(':').ok_or_else(|| {
                    Error::InvalidDag(format!("line {}: expected `key: value`", lineno + 1))
                })?;
                let items: Vec<&str> = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                match key.trim() {
                    "levels" => {
                        levels = Some(items.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                    }
                    "parents" => ps = items.iter().map(|s| s.to_string()).collect(),
                    "cpt" => {
                        cpt = Some(
                            items
                                .iter()
                                .map(|s| {
                                    s.parse::<f64>().map_err(|_| {
                                        Error::InvalidDag(format!(
                                            "line {}: bad probability `{s}`",
                                            lineno + 1
                                        ))
                                    })
                                })
                                .collect::<Result<Vec<_>>>()?,
                        )
                    }
                    other => {
                        return Err(Error::InvalidDag(format!(
                            "line {}: unknown key `{other}`",
                            lineno + 1
                        )))
                    }
                }
            }
            let levels = levels
                .ok_or_else(|| Error::InvalidDag(format!("line {}: missing levels", lineno + 1)))?;
            variables.push(VariableSpec::new(name, levels)?);
            parents.push(ps);
            cpts.push(cpt);
        }
        let dag = Self::new(variables, parents)?;
        if cpts.iter().all(Option::is_none) {
            return Ok(dag);
        }
        let mut tables = Vec::with_capacity(cpts.len());
        for (i, flat) in cpts.into_iter().enumerate() {
            let name = dag.variables[i].name().to_string();
            let flat = flat.ok_or_else(|| Error::InvalidDag(format!("`{name}` has no cpt")))?;
            let card = dag.variables[i].cardinality();
            if flat.len() != card * dag.parent_configurations(i) {
                return Err(Error::InvalidDag(format!(
                    "cpt of `{name}` has {} entries, expected {}",
                    flat.len(),
                    card * dag.parent_configurations(i)
                )));
            }
            tables.push(flat.chunks(card).map(<[f64]>::to_vec).collect());
        }
        dag.with_cpts(tables)
    }

    /// Writes the line format read by [`DagSpec::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.variables.iter().enumerate() {
            let _ = write!(out, "{} | levels: {}", v.name(), v.levels().join(","));
            if !self.parents[i].is_empty() {
                let names: Vec<&str> = self.parents[i]
                    .iter()
                    .map(|&p| self.variables[p].name())
                    .collect();
                let _ = write!(out, " | parents: {}", names.join(","));
            }
            if let Some(c) = &self.cpts {
                let flat: Vec<String> = c[i].iter().flatten().map(|p| p.to_string()).collect();
                let _ = write!(out, " | cpt: {}", flat.join(","));
            }
            out.push('\n');
        }
        out
    }
}

/// `bn_joint_oracle`: the BN factorization evaluated at one outcome.
pub fn bn_joint_oracle(dag: &DagSpec, outcome: &[usize]) -> Result<f64> {
    dag.joint_probability(outcome)
}

/// `staging_from_dag`.
pub fn staging_from_dag(dag: &DagSpec, tree: &EventTree) -> Result<Staging> {
    dag.staging(tree)
}
