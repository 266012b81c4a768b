//! Event trees, stagings and staged tree models.
//!
//! A tree over the ordered variables `(C, X_1, ..., X_p)` has one internal
//! depth per variable. The vertices at depth `d` are the value prefixes of the
//! first `d` variables, numbered in mixed radix with the class as the most
//! significant digit, so the child of vertex `v` along level `l` of variable
//! `d` is `v * |X_d| + l`.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Largest number of root-to-leaf paths a tree may have.
pub const MAX_LEAVES: u128 = 1 << 26;

/// Default cap for [`StagedTreeModel::joint_table`].
pub const DEFAULT_JOINT_CAP: usize = 10_000_000;

/// Tolerance on floret sums.
pub const FLORET_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpec {
    name: String,
    levels: Vec<String>,
}

impl VariableSpec {
    pub fn new<S: Into<String>>(name: S, levels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if levels.len() < 2 {
            return Err(Error::TooFewLevels {
                name,
                found: levels.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &levels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLevel {
                    var: name,
                    level: l.clone(),
                });
            }
        }
        Ok(Self { name, levels })
    }

    /// Variable with levels named `"0"`, `"1"`, ...
    pub fn indexed<S: Into<String>>(name: S, cardinality: usize) -> Result<Self> {
        Self::new(name, (0..cardinality).map(|i| i.to_string()).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    pub fn level_label(&self, index: usize) -> Option<&str> {
        self.levels.get(index).map(String::as_str)
    }
}

/// The event tree of an ordered variable sequence with the class at the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTree {
    variables: Vec<VariableSpec>,
    cards: Vec<usize>,
    // vertex_counts[d] = product of cards[..d]; the last entry is the leaf count.
    vertex_counts: Vec<usize>,
}

impl EventTree {
    pub fn new(class_var: VariableSpec, feature_vars: Vec<VariableSpec>) -> Result<Self> {
        let mut variables = Vec::with_capacity(feature_vars.len() + 1);
        variables.push(class_var);
        variables.extend(feature_vars);
        Self::from_variables(variables)
    }

    /// Builds a tree from variables in order; the first is the class.
    pub fn from_variables(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidStaging("tree needs a class variable".into()));
        }
        let mut names = HashSet::new();
        for v in &variables {
            if v.cardinality() < 2 {
                return Err(Error::TooFewLevels {
                    name: v.name.clone(),
                    found: v.cardinality(),
                });
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::DuplicateVariable(v.name.clone()));
            }
        }
        let cards: Vec<usize> = variables.iter().map(VariableSpec::cardinality).collect();
        let leaves: u128 = cards.iter().map(|&c| c as u128).product();
        if leaves > MAX_LEAVES {
            return Err(Error::TreeTooLarge {
                leaves,
                cap: MAX_LEAVES,
            });
        }
        let mut vertex_counts = Vec::with_capacity(cards.len() + 1);
        let mut n = 1usize;
        vertex_counts.push(n);
        for &c in &cards {
            n *= c;
            vertex_counts.push(n);
        }
        Ok(Self {
            variables,
            cards,
            vertex_counts,
        })
    }

    /// Number of internal depths, `p + 1`.
    pub fn depth_count(&self) -> usize {
        self.variables.len()
    }

    pub fn feature_count(&self) -> usize {
        self.variables.len() - 1
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn variable(&self, depth: usize) -> &VariableSpec {
        &self.variables[depth]
    }

    pub fn class_var(&self) -> &VariableSpec {
        &self.variables[0]
    }

    pub fn feature_vars(&self) -> &[VariableSpec] {
        &self.variables[1..]
    }

    pub fn class_count(&self) -> usize {
        self.cards[0]
    }

    pub fn cardinality(&self, depth: usize) -> usize {
        self.cards[depth]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Vertices at `depth`; `depth == depth_count()` gives the leaves.
    pub fn vertex_count(&self, depth: usize) -> usize {
        self.vertex_counts[depth]
    }

    pub fn leaf_count(&self) -> usize {
        self.vertex_counts[self.cards.len()]
    }

    pub fn internal_vertex_count(&self) -> usize {
        self.vertex_counts[..self.cards.len()].iter().sum()
    }

    #[inline]
    pub fn child(&self, depth: usize, vertex: usize, level: usize) -> usize {
        vertex * self.cards[depth] + level
    }

    /// Parent vertex and edge level of `vertex` at `depth >= 1`.
    #[inline]
    pub fn parent(&self, depth: usize, vertex: usize) -> (usize, usize) {
        let c = self.cards[depth - 1];
        (vertex / c, vertex % c)
    }

    /// Vertex reached at `depth` by the first `depth` entries of `assignment`.
    pub fn vertex_of(&self, depth: usize, assignment: &[usize]) -> usize {
        assignment[..depth]
            .iter()
            .zip(&self.cards)
            .fold(0, |v, (&x, &c)| v * c + x)
    }

    /// Value prefix (one level per variable `0..depth`) of a vertex.
    pub fn prefix_of(&self, depth: usize, mut vertex: usize) -> Vec<usize> {
        let mut prefix = vec![0; depth];
        for d in (0..depth).rev() {
            prefix[d] = vertex % self.cards[d];
            vertex /= self.cards[d];
        }
        prefix
    }

    pub fn check_assignment(&self, outcome: &[usize]) -> Result<()> {
        if outcome.len() != self.cards.len() {
            return Err(Error::AssignmentLength {
                expected: self.cards.len(),
                found: outcome.len(),
            });
        }
        for (d, (&x, &c)) in outcome.iter().zip(&self.cards).enumerate() {
            if x >= c {
                return Err(Error::LevelOutOfRange {
                    var: self.variables[d].name.clone(),
                    level: x,
                    cardinality: c,
                });
            }
        }
        Ok(())
    }

    pub fn leaf_index(&self, outcome: &[usize]) -> Result<usize> {
        self.check_assignment(outcome)?;
        Ok(self.vertex_of(self.cards.len(), outcome))
    }

    pub fn outcome_of_leaf(&self, leaf: usize) -> Vec<usize> {
        self.prefix_of(self.cards.len(), leaf)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

/// The stage assignment of one depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthStaging {
    stage_of: Vec<usize>,
    stage_count: usize,
    unobserved: Option<usize>,
}

impl DepthStaging {
    /// Canonicalizes `stage_of` (ids renumbered by first occurrence in vertex
    /// order). `unobserved` is given in the caller's labels.
    pub fn new(stage_of: Vec<usize>, unobserved: Option<usize>) -> Result<Self> {
        if stage_of.is_empty() {
            return Err(Error::InvalidStaging("depth without vertices".into()));
        }
        let (stage_of, stage_count, map) = canonicalize(&stage_of);
        let unobserved = match unobserved {
            None => None,
            Some(u) => Some(*map.get(&u).ok_or_else(|| {
                Error::InvalidStaging(format!("unobserved stage {u} has no vertices"))
            })?),
        };
        Ok(Self {
            stage_of,
            stage_count,
            unobserved,
        })
    }

    /// Every vertex in its own stage.
    pub fn singletons(vertices: usize) -> Self {
        Self {
            stage_of: (0..vertices).collect(),
            stage_count: vertices,
            unobserved: None,
        }
    }

    /// All vertices in one stage.
    pub fn single(vertices: usize) -> Self {
        Self {
            stage_of: vec![0; vertices],
            stage_count: 1,
            unobserved: None,
        }
    }

    pub fn stage_of(&self) -> &[usize] {
        &self.stage_of
    }

    pub fn stage(&self, vertex: usize) -> usize {
        self.stage_of[vertex]
    }

    pub fn vertex_count(&self) -> usize {
        self.stage_of.len()
    }

    pub fn stage_count(&self) -> usize {
        self.stage_count
    }

    pub fn unobserved(&self) -> Option<usize> {
        self.unobserved
    }

    pub fn is_unobserved(&self, stage: usize) -> bool {
        self.unobserved == Some(stage)
    }

    pub fn observed_stage_count(&self) -> usize {
        self.stage_count - usize::from(self.unobserved.is_some())
    }

    /// Vertex lists per stage id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.stage_count];
        for (v, &s) in self.stage_of.iter().enumerate() {
            out[s].push(v);
        }
        out
    }
}

fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize, std::collections::HashMap<usize, usize>) {
    let mut map = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        out.push(*map.entry(l).or_insert(next));
    }
    let n = map.len();
    (out, n, map)
}

/// A partition of the internal vertices of a tree into stages, depth by depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staging {
    depths: Vec<DepthStaging>,
}

impl Staging {
    pub fn new(tree: &EventTree, depths: Vec<DepthStaging>) -> Result<Self> {
        if depths.len() != tree.depth_count() {
            return Err(Error::InvalidStaging(format!(
                "{} depth stagings for a tree with {} depths",
                depths.len(),
                tree.depth_count()
            )));
        }
        for (d, s) in depths.iter().enumerate() {
            if s.vertex_count() != tree.vertex_count(d) {
                return Err(Error::InvalidStaging(format!(
                    "depth {d} has {} vertices, staging covers {}",
                    tree.vertex_count(d),
                    s.vertex_count()
                )));
            }
        }
        Ok(Self { depths })
    }

    /// Builds a staging from explicit stages given as `(depth, vertex)` lists.
    /// Stages mixing depths are rejected; every vertex must appear once.
    pub fn from_groups(tree: &EventTree, groups: &[Vec<(usize, usize)>]) -> Result<Self> {
        let mut labels: Vec<Vec<Option<usize>>> = (0..tree.depth_count())
            .map(|d| vec![None; tree.vertex_count(d)])
            .collect();
        for (g, group) in groups.iter().enumerate() {
            let Some(&(first, _)) = group.first() else {
                return Err(Error::InvalidStaging(format!("stage {g} is empty")));
            };
            for &(d, v) in group {
                if d != first {
                    return Err(Error::CrossDepthStage { first, second: d });
                }
                let slot = labels
                    .get_mut(d)
                    .and_then(|l| l.get_mut(v))
                    .ok_or_else(|| Error::InvalidStaging(format!("no vertex {v} at depth {d}")))?;
                if slot.is_some() {
                    return Err(Error::InvalidStaging(format!(
                        "vertex {v} at depth {d} is in two stages"
                    )));
                }
                *slot = Some(g);
            }
        }
        let mut depths = Vec::with_capacity(labels.len());
        for (d, l) in labels.into_iter().enumerate() {
            let assigned = l
                .into_iter()
                .enumerate()
                .map(|(v, s)| {
                    s.ok_or_else(|| {
                        Error::InvalidStaging(format!("vertex {v} at depth {d} unassigned"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            depths.push(DepthStaging::new(assigned, None)?);
        }
        Self::new(tree, depths)
    }

    /// Every vertex in its own stage.
    pub fn full(tree: &EventTree) -> Self {
        Self {
            depths: (0..tree.depth_count())
                .map(|d| DepthStaging::singletons(tree.vertex_count(d)))
                .collect(),
        }
    }

    /// One stage per depth.
    pub fn independent(tree: &EventTree) -> Self {
        Self {
            depths: (0..tree.depth_count())
                .map(|d| DepthStaging::single(tree.vertex_count(d)))
                .collect(),
        }
    }

    pub fn depth_count(&self) -> usize {
        self.depths.len()
    }

    pub fn depth(&self, depth: usize) -> &DepthStaging {
        &self.depths[depth]
    }

    pub fn depths(&self) -> &[DepthStaging] {
        &self.depths
    }

    pub fn stage(&self, depth: usize, vertex: usize) -> usize {
        self.depths[depth].stage_of[vertex]
    }

    pub fn stage_count(&self, depth: usize) -> usize {
        self.depths[depth].stage_count
    }
}

/// A staged tree with one probability vector (floret) per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedTreeModel {
    tree: EventTree,
    staging: Staging,
    florets: Vec<Vec<Vec<f64>>>,
}

impl StagedTreeModel {
    /// Validates shapes and that every floret lies in the closed simplex.
    pub fn new(tree: EventTree, staging: Staging, florets: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if staging.depth_count() != tree.depth_count() || florets.len() != tree.depth_count() {
            return Err(Error::InvalidStaging(
                "staging, florets and tree disagree on the number of depths".into(),
            ));
        }
        for d in 0..tree.depth_count() {
            if staging.depth(d).vertex_count() != tree.vertex_count(d) {
                return Err(Error::InvalidStaging(format!(
                    "depth {d} vertex count mismatch"
                )));
            }
            if florets[d].len() != staging.stage_count(d) {
                return Err(Error::InvalidFloret {
                    depth: d,
                    stage: florets[d].len(),
                    reason: format!(
                        "{} florets for {} stages",
                        florets[d].len(),
                        staging.stage_count(d)
                    ),
                });
            }
            for (s, f) in florets[d].iter().enumerate() {
                check_floret(d, s, f, tree.cardinality(d))?;
            }
        }
        Ok(Self {
            tree,
            staging,
            florets,
        })
    }

    /// Uniform florets on every stage.
    pub fn uniform(tree: EventTree, staging: Staging) -> Self {
        let florets = (0..tree.depth_count())
            .map(|d| {
                let l = tree.cardinality(d);
                vec![vec![1.0 / l as f64; l]; staging.stage_count(d)]
            })
            .collect();
        Self {
            tree,
            staging,
            florets,
        }
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn staging(&self) -> &Staging {
        &self.staging
    }

    pub fn florets(&self) -> &[Vec<Vec<f64>>] {
        &self.florets
    }

    pub fn floret(&self, depth: usize, stage: usize) -> &[f64] {
        &self.florets[depth][stage]
    }

    /// Floret of a vertex, through its stage.
    pub fn vertex_floret(&self, depth: usize, vertex: usize) -> &[f64] {
        &self.florets[depth][self.staging.stage(depth, vertex)]
    }

    pub fn into_parts(self) -> (EventTree, Staging, Vec<Vec<Vec<f64>>>) {
        (self.tree, self.staging, self.florets)
    }

    /// Product of edge probabilities along the path of a full outcome.
    pub fn atom_probability(&self, outcome: &[usize]) -> Result<f64> {
        self.tree.check_assignment(outcome)?;
        Ok(self.path_probability(outcome))
    }

    pub(crate) fn path_probability(&self, outcome: &[usize]) -> f64 {
        let mut v = 0;
        let mut p = 1.0;
        for (d, &x) in outcome.iter().enumerate() {
            p *= self.vertex_floret(d, v)[x];
            v = self.tree.child(d, v, x);
        }
        p
    }

    /// Probability of every leaf, in leaf index order.
    pub fn joint_table(&self) -> Result<JointTable> {
        self.joint_table_capped(DEFAULT_JOINT_CAP)
    }

    pub fn joint_table_capped(&self, cap: usize) -> Result<JointTable> {
        let leaves = self.tree.leaf_count();
        if leaves > cap {
            return Err(Error::TreeTooLarge {
                leaves: leaves as u128,
                cap: cap as u128,
            });
        }
        let mut level = vec![1.0];
        for d in 0..self.tree.depth_count() {
            let card = self.tree.cardinality(d);
            let mut next = Vec::with_capacity(level.len() * card);
            for (v, &p) in level.iter().enumerate() {
                let f = self.vertex_floret(d, v);
                next.extend(f.iter().map(|&q| p * q));
            }
            level = next;
        }
        Ok(JointTable {
            tree: self.tree.clone(),
            probs: level,
        })
    }

    /// Free parameters: `|X_d| - 1` per observed stage.
    pub fn free_parameter_count(&self) -> usize {
        (0..self.tree.depth_count())
            .map(|d| self.staging.depth(d).observed_stage_count() * (self.tree.cardinality(d) - 1))
            .sum()
    }
}

pub(crate) fn check_floret(depth: usize, stage: usize, f: &[f64], card: usize) -> Result<()> {
    let bad = |reason: String| Error::InvalidFloret {
        depth,
        stage,
        reason,
    };
    if f.len() != card {
        return Err(bad(format!("length {} for {} levels", f.len(), card)));
    }
    if let Some(x) = f.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(bad(format!("entry {x} outside [0, 1]")));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > FLORET_SUM_TOL {
        return Err(bad(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Atom probabilities indexed by leaf.
#[derive(Debug, Clone)]
pub struct JointTable {
    tree: EventTree,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn get(&self, outcome: &[usize]) -> Result<f64> {
        Ok(self.probs[self.tree.leaf_index(outcome)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.tree.outcome_of_leaf(i), p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(name: &str) -> VariableSpec {
        VariableSpec::indexed(name, 2).unwrap()
    }

    pub(crate) fn binary_tree(features: usize) -> EventTree {
        EventTree::new(
            binary("C"),
            (1..=features).map(|i| binary(&format!("X{i}"))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn vertex_counts_follow_cardinality_products() {
        let t = binary_tree(3);
        let counts: Vec<_> = (0..t.depth_count()).map(|d| t.vertex_count(d)).collect();
        assert_eq!(counts, vec![1, 2, 4, 8]);
        assert_eq!(t.leaf_count(), 16);
    }

    #[test]
    fn titanic_shape_has_32_leaves() {
        let v = |n: &str, k| VariableSpec::indexed(n, k).unwrap();
        let t = EventTree::new(
            v("Survived", 2),
            vec![v("Sex", 2), v("Age", 2), v("Class", 4)],
        )
        .unwrap();
        assert_eq!(t.leaf_count(), 32);
    }

    #[test]
    fn class_only_tree() {
        let t = EventTree::new(VariableSpec::indexed("C", 3).unwrap(), vec![]).unwrap();
        assert_eq!(t.depth_count(), 1);
        assert_eq!(t.vertex_count(0), 1);
        assert_eq!(t.leaf_count(), 3);
    }

    #[test]
    fn rejects_bad_variables() {
        assert!(matches!(
            EventTree::new(binary("A"), vec![binary("A")]),
            Err(Error::DuplicateVariable(_))
        ));
        assert!(matches!(
            VariableSpec::new("A", vec!["x".into()]),
            Err(Error::TooFewLevels { .. })
        ));
        assert!(matches!(
            VariableSpec::new("A", vec!["x".into(), "x".into()]),
            Err(Error::DuplicateLevel { .. })
        ));
    }

    #[test]
    fn uniform_atoms() {
        let t = binary_tree(2);
        let m = StagedTreeModel::uniform(t.clone(), Staging::full(&t));
        for leaf in 0..t.leaf_count() {
            let o = t.outcome_of_leaf(leaf);
            assert_eq!(m.atom_probability(&o).unwrap(), 0.125);
        }
    }

    #[test]
    fn single_variable_atoms_read_floret() {
        let t = EventTree::new(binary("C"), vec![]).unwrap();
        let m = StagedTreeModel::new(t.clone(), Staging::full(&t), vec![vec![vec![0.75, 0.25]]])
            .unwrap();
        assert_eq!(m.atom_probability(&[0]).unwrap(), 0.75);
        assert_eq!(m.atom_probability(&[1]).unwrap(), 0.25);
        assert!(matches!(
            m.atom_probability(&[2]),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(
            m.atom_probability(&[0, 1]),
            Err(Error::AssignmentLength { .. })
        ));
    }

    #[test]
    fn joint_table_uniform_two_vars() {
        let t = EventTree::new(binary("C"), vec![binary("X")]).unwrap();
        let m = StagedTreeModel::uniform(t.clone(), Staging::independent(&t));
        let j = m.joint_table().unwrap();
        assert_eq!(j.probabilities(), &[0.25; 4]);
        assert!(matches!(
            m.joint_table_capped(3),
            Err(Error::TreeTooLarge { .. })
        ));
    }

    #[test]
    fn joint_table_order_is_leaf_order() {
        let t = binary_tree(2);
        let florets = vec![
            vec![vec![0.3, 0.7]],
            vec![vec![0.2, 0.8], vec![0.6, 0.4]],
            vec![
                vec![0.1, 0.9],
                vec![0.5, 0.5],
                vec![0.35, 0.65],
                vec![0.99, 0.01],
            ],
        ];
        let m = StagedTreeModel::new(t.clone(), Staging::full(&t), florets).unwrap();
        let j = m.joint_table().unwrap();
        for (o, p) in j.iter() {
            assert_eq!(p, m.atom_probability(&o).unwrap());
        }
        assert!((j.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_counts() {
        let t = binary_tree(3);
        assert_eq!(
            StagedTreeModel::uniform(t.clone(), Staging::full(&t)).free_parameter_count(),
            15
        );
        assert_eq!(
            StagedTreeModel::uniform(t.clone(), Staging::independent(&t)).free_parameter_count(),
            4
        );
        // naive: every feature depth split by class
        let naive: Vec<DepthStaging> = (0..4)
            .map(|d| {
                let n = t.vertex_count(d);
                let per_class = n / 2;
                DepthStaging::new(
                    (0..n)
                        .map(|v| if d == 0 { 0 } else { v / per_class })
                        .collect(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let s = Staging::new(&t, naive).unwrap();
        assert_eq!(
            StagedTreeModel::uniform(t.clone(), s).free_parameter_count(),
            7
        );

        // depth 2 wholly unobserved contributes nothing
        let mut depths = Staging::full(&t).depths().to_vec();
        depths[2] = DepthStaging::new(vec![0; 4], Some(0)).unwrap();
        let s = Staging::new(&t, depths).unwrap();
        assert_eq!(
            StagedTreeModel::uniform(t, s).free_parameter_count(),
            1 + 2 + 8
        );
    }

    #[test]
    fn canonical_stage_ids() {
        let s = DepthStaging::new(vec![7, 3, 7, 9], Some(9)).unwrap();
        assert_eq!(s.stage_of(), &[0, 1, 0, 2]);
        assert_eq!(s.unobserved(), Some(2));
        assert_eq!(s, DepthStaging::new(vec![1, 0, 1, 5], Some(5)).unwrap());
        assert!(DepthStaging::new(vec![0, 0], Some(1)).is_err());
    }

    #[test]
    fn cross_depth_stage_rejected() {
        let t = binary_tree(2);
        let groups = vec![
            vec![(0, 0)],
            vec![(1, 0), (2, 0)],
            vec![(1, 1)],
            vec![(2, 1), (2, 2), (2, 3)],
        ];
        assert!(matches!(
            Staging::from_groups(&t, &groups),
            Err(Error::CrossDepthStage {
                first: 1,
                second: 2
            })
        ));
        let ok = vec![
            vec![(0, 0)],
            vec![(1, 0), (1, 1)],
            vec![(2, 0), (2, 3)],
            vec![(2, 1), (2, 2)],
        ];
        let s = Staging::from_groups(&t, &ok).unwrap();
        assert_eq!(s.depth(2).stage_of(), &[0, 1, 1, 0]);
        // missing vertex
        assert!(Staging::from_groups(&t, &ok[..3]).is_err());
    }

    #[test]
    fn invalid_florets_rejected() {
        let t = EventTree::new(binary("C"), vec![]).unwrap();
        let s = Staging::full(&t);
        assert!(StagedTreeModel::new(t.clone(), s.clone(), vec![vec![vec![0.5, 0.4]]]).is_err());
        assert!(StagedTreeModel::new(t.clone(), s.clone(), vec![vec![vec![1.5, -0.5]]]).is_err());
        assert!(StagedTreeModel::new(t, s, vec![vec![vec![1.0, 0.0]]]).is_ok());
    }

    #[test]
    fn parent_child_inverse() {
        let v = |n: &str, k| VariableSpec::indexed(n, k).unwrap();
        let t = EventTree::new(v("C", 3), vec![v("A", 2), v("B", 4)]).unwrap();
        for d in 0..t.depth_count() {
            for vtx in 0..t.vertex_count(d) {
                for l in 0..t.cardinality(d) {
                    let c = t.child(d, vtx, l);
                    assert_eq!(t.parent(d + 1, c), (vtx, l));
                }
                let p = t.prefix_of(d, vtx);
                assert_eq!(t.vertex_of(d, &p), vtx);
            }
        }
    }
}
