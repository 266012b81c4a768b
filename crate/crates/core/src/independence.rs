//! Conditional independence statements read off a staging.
//!
//! The read-out is syntactic: it inspects which vertices share a stage and
//! never looks at the floret values.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EventTree, StagedTreeModel, Staging};

/// Budget (subsets times feature prefixes) for the context search at one depth.
const CONTEXT_SEARCH_BUDGET: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiKind {
    Marginal,
    ContextConditional,
    FullConditional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiStatement {
    pub kind: CiKind,
    pub subject: String,
    pub independent_of: Vec<String>,
    pub conditioning: Vec<String>,
    /// Partial assignment `(variable, level)` of variables preceding the subject.
    pub context: Vec<(String, String)>,
}

impl CiStatement {
    pub fn involves(&self, name: &str) -> bool {
        self.subject == name || self.independent_of.iter().any(|n| n == name)
    }
}

impl fmt::Display for CiStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ⊥ ", self.subject)?;
        if self.independent_of.len() == 1 {
            write!(f, "{}", self.independent_of[0])?;
        } else {
            write!(f, "({})", self.independent_of.join(", "))?;
        }
        let ctx: Vec<String> = self
            .context
            .iter()
            .map(|(n, l)| format!("{n} = {l}"))
            .collect();
        let mut rhs = self.conditioning.clone();
        rhs.extend(ctx);
        if !rhs.is_empty() {
            write!(f, " | {}", rhs.join(", "))?;
        }
        Ok(())
    }
}

/// `(C, X_1, ..., X_{k-1}) ⊥ X_k` for every depth whose vertices form one stage.
pub fn read_marginal_independencies(model: &StagedTreeModel) -> Vec<CiStatement> {
    marginal_from_staging(model.tree(), model.staging())
}

pub fn marginal_from_staging(tree: &EventTree, staging: &Staging) -> Vec<CiStatement> {
    (1..tree.depth_count())
        .filter(|&k| staging.stage_count(k) == 1)
        .map(|k| CiStatement {
            kind: CiKind::Marginal,
            subject: tree.variable(k).name().to_string(),
            independent_of: tree.variables()[..k]
                .iter()
                .map(|v| v.name().to_string())
                .collect(),
            conditioning: Vec::new(),
            context: Vec::new(),
        })
        .collect()
}

/// Statements `X_k ⊥ C | ...` implied by class-matched vertices sharing stages.
///
/// For every feature depth `k`, the vertices `(c, y)` that differ only in the
/// class value are compared. If they share a stage for every feature prefix
/// `y` the full-conditional statement is emitted. Otherwise each minimal
/// partial assignment of preceding features whose completions all match is
/// emitted as a context-specific statement.
pub fn read_class_conditional_independencies(model: &StagedTreeModel) -> Vec<CiStatement> {
    class_conditional_from_staging(model.tree(), model.staging())
}

pub fn class_conditional_from_staging(tree: &EventTree, staging: &Staging) -> Vec<CiStatement> {
    let class_name = tree.class_var().name().to_string();
    let mut out = Vec::new();
    for k in 1..tree.depth_count() {
        let n_classes = tree.class_count();
        let prefixes = tree.vertex_count(k) / n_classes;
        let depth = staging.depth(k);
        let holds: Vec<bool> = (0..prefixes)
            .map(|y| {
                let s0 = depth.stage(y);
                (1..n_classes).all(|c| depth.stage(c * prefixes + y) == s0)
            })
            .collect();
        let preceding: Vec<String> = tree.variables()[1..k]
            .iter()
            .map(|v| v.name().to_string())
            .collect();
        let subject = tree.variable(k).name().to_string();
        if holds.iter().all(|&h| h) {
            out.push(CiStatement {
                kind: CiKind::FullConditional,
                subject,
                independent_of: vec![class_name.clone()],
                conditioning: preceding,
                context: Vec::new(),
            });
            continue;
        }
        if !holds.iter().any(|&h| h) {
            continue;
        }
        let cards = &tree.cardinalities()[1..k];
        for (subset, assignment) in minimal_contexts(cards, &holds) {
            let context = subset
                .iter()
                .zip(&assignment)
                .map(|(&i, &l)| {
                    let v = tree.variable(i + 1);
                    (v.name().to_string(), v.levels()[l].clone())
                })
                .collect();
            let conditioning = (0..cards.len())
                .filter(|i| !subset.contains(i))
                .map(|i| preceding[i].clone())
                .collect();
            out.push(CiStatement {
                kind: CiKind::ContextConditional,
                subject: subject.clone(),
                independent_of: vec![class_name.clone()],
                conditioning,
                context,
            });
        }
    }
    out
}

/// Minimal `(subset, assignment)` contexts over mixed-radix prefixes such that
/// every prefix consistent with the assignment satisfies `holds`.
fn minimal_contexts(cards: &[usize], holds: &[bool]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = cards.len();
    let budget = (1u128 << n.min(100)) * holds.len() as u128;
    if n >= 64 || budget > CONTEXT_SEARCH_BUDGET {
        // Too many subsets to search: fall back to fully specified contexts.
        return holds
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(y, _)| ((0..n).collect(), digits(y, cards)))
            .collect();
    }
    let prefix_digits: Vec<Vec<usize>> = (0..holds.len()).map(|y| digits(y, cards)).collect();
    let valid = |mask: u64, assignment: &[usize]| -> bool {
        prefix_digits.iter().zip(holds).all(|(d, &h)| {
            h || (0..n)
                .filter(|&i| mask >> i & 1 == 1)
                .zip(assignment)
                .any(|(i, &a)| d[i] != a)
        })
    };
    let mut masks: Vec<u64> = (1..(1u64 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut out = Vec::new();
    for mask in masks {
        let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let sub_cards: Vec<usize> = subset.iter().map(|&i| cards[i]).collect();
        let combos: usize = sub_cards.iter().product();
        for idx in 0..combos {
            let assignment = digits(idx, &sub_cards);
            if !valid(mask, &assignment) {
                continue;
            }
            let minimal = (0..subset.len()).all(|drop| {
                let m = mask & !(1u64 << subset[drop]);
                let a: Vec<usize> = assignment
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != drop)
                    .map(|(_, &x)| x)
                    .collect();
                m == 0 || !valid(m, &a)
            });
            if minimal {
                out.push((subset.clone(), assignment));
            }
        }
    }
    out
}

fn digits(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut d = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        d[i] = index % cards[i];
        index /= cards[i];
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DepthStaging, VariableSpec};

    fn tree(cards: &[(&str, usize)]) -> EventTree {
        EventTree::from_variables(
            cards
                .iter()
                .map(|&(n, k)| VariableSpec::indexed(n, k).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn staging(t: &EventTree, depths: Vec<Vec<usize>>) -> Staging {
        Staging::new(
            t,
            depths
                .into_iter()
                .map(|d| DepthStaging::new(d, None).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn marginal_statement_for_collapsed_depth() {
        // X3 depth in one stage, the rest full.
        let t = tree(&[("C", 2), ("X1", 2), ("X2", 2), ("X3", 2)]);
        let s = staging(&t, vec![vec![0], vec![0, 1], vec![0, 1, 2, 3], vec![0; 8]]);
        let m = StagedTreeModel::uniform(t, s);
        let st = read_marginal_independencies(&m);
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].subject, "X3");
        assert_eq!(st[0].independent_of, vec!["C", "X1", "X2"]);
        assert_eq!(st[0].to_string(), "X3 ⊥ (C, X1, X2)");
    }

    #[test]
    fn full_and_independence_models() {
        let t = tree(&[("C", 2), ("X1", 2), ("X2", 2)]);
        let full = StagedTreeModel::uniform(t.clone(), Staging::full(&t));
        assert!(read_marginal_independencies(&full).is_empty());
        assert!(read_class_conditional_independencies(&full).is_empty());
        let indep = StagedTreeModel::uniform(t.clone(), Staging::independent(&t));
        assert_eq!(read_marginal_independencies(&indep).len(), 2);
    }

    #[test]
    fn full_conditional_statement() {
        // depth X3: vertex (0, y) shares a stage with (1, y) for every y
        let t = tree(&[("C", 2), ("X1", 2), ("X2", 2), ("X3", 2)]);
        let s = staging(
            &t,
            vec![
                vec![0],
                vec![0, 1],
                vec![0, 1, 2, 3],
                vec![0, 1, 2, 3, 0, 1, 2, 3],
            ],
        );
        let st = read_class_conditional_independencies(&StagedTreeModel::uniform(t, s));
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].kind, CiKind::FullConditional);
        assert_eq!(st[0].to_string(), "X3 ⊥ C | X1, X2");
    }

    #[test]
    fn naive_staging_has_no_class_statement() {
        let t = tree(&[("C", 2), ("X1", 2), ("X2", 2), ("X3", 2)]);
        let s = staging(
            &t,
            vec![
                vec![0],
                vec![0, 1],
                vec![0, 0, 1, 1],
                vec![0, 0, 0, 0, 1, 1, 1, 1],
            ],
        );
        assert!(read_class_conditional_independencies(&StagedTreeModel::uniform(t, s)).is_empty());
    }

    #[test]
    fn context_specific_statement() {
        // Survived, Sex(Male, Female), Age(Child, Adult), Class.
        // Class florets of males do not depend on Survived.
        let t = EventTree::from_variables(vec![
            VariableSpec::new("Survived", vec!["No".into(), "Yes".into()]).unwrap(),
            VariableSpec::new("Sex", vec!["Male".into(), "Female".into()]).unwrap(),
            VariableSpec::new("Age", vec!["Child".into(), "Adult".into()]).unwrap(),
            VariableSpec::new(
                "Class",
                ["1st", "2nd", "3rd", "Crew"].map(String::from).to_vec(),
            )
            .unwrap(),
        ])
        .unwrap();
        // vertex = survived*4 + sex*2 + age
        let class_depth = vec![0, 1, 2, 3, 0, 1, 4, 5];
        let s = staging(&t, vec![vec![0], vec![0, 1], vec![0, 1, 2, 3], class_depth]);
        let st = read_class_conditional_independencies(&StagedTreeModel::uniform(t, s));
        assert_eq!(st.len(), 1);
        assert_eq!(st[0].kind, CiKind::ContextConditional);
        assert_eq!(st[0].context, vec![("Sex".to_string(), "Male".to_string())]);
        assert_eq!(st[0].to_string(), "Class ⊥ Survived | Age, Sex = Male");
        assert!(st[0].involves("Survived"));
    }

    #[test]
    fn contexts_are_minimal() {
        // holds for (a=0, b=*) and (a=1, b=1): minimal contexts are a=0 and (a=1,b=1)
        let ctx = minimal_contexts(&[2, 2], &[true, true, false, true]);
        assert_eq!(ctx, vec![(vec![0], vec![0]), (vec![1], vec![1])]);
        let ctx = minimal_contexts(&[2, 2], &[true, true, false, false]);
        assert_eq!(ctx, vec![(vec![0], vec![0])]);
        let ctx = minimal_contexts(&[2, 2], &[false, false, false, true]);
        assert_eq!(ctx, vec![(vec![0, 1], vec![1, 1])]);
    }
}
