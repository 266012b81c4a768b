//! JSON model files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "variables": [{ "name": "C", "levels": ["no", "yes"] }, ...],
//!   "staging": [{ "stage_of": [0], "unobserved": null }, ...],
//!   "florets": [[[0.4, 0.6]], ...],
//!   "provenance": { "algorithm": "bj", "seed": 0, "flags": {}, "data_digest": "..." }
//! }
//! ```
//!
//! Variables are listed in tree order with the class first. `stage_of[v]` is the
//! stage of vertex `v` at that depth, and `florets[d][s]` is the distribution of
//! stage `s` over the levels of variable `d`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DepthStaging, EventTree, StagedTreeModel, Staging, VariableSpec};

pub const FORMAT_VERSION: u32 = 1;

const SECTIONS: [&str; 5] = [
    "format_version",
    "variables",
    "staging",
    "florets",
    "provenance",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub algorithm: String,
    pub seed: u64,
    /// Learner settings and the data file, as given.
    pub flags: BTreeMap<String, String>,
    pub data_digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableEntry {
    name: String,
    levels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthEntry {
    stage_of: Vec<usize>,
    unobserved: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    variables: Vec<VariableEntry>,
    staging: Vec<DepthEntry>,
    florets: Vec<Vec<Vec<f64>>>,
    provenance: Provenance,
}

pub fn serialize_model(model: &StagedTreeModel, provenance: &Provenance) -> Result<Vec<u8>> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        variables: model
            .tree()
            .variables()
            .iter()
            .map(|v| VariableEntry {
                name: v.name().to_string(),
                levels: v.levels().to_vec(),
            })
            .collect(),
        staging: model
            .staging()
            .depths()
            .iter()
            .map(|d| DepthEntry {
                stage_of: d.stage_of().to_vec(),
                unobserved: d.unobserved(),
            })
            .collect(),
        florets: model.florets().to_vec(),
        provenance: provenance.clone(),
    };
    let mut bytes =
        serde_json::to_vec_pretty(&file).map_err(|e| Error::ModelFile(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<(StagedTreeModel, Provenance)> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
        if e.is_eof() {
            Error::MissingSection(first_absent_section(bytes).to_string())
        } else {
            Error::ModelFile(e.to_string())
        }
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::ModelFile("top level is not an object".into()))?;
    let version = obj
        .get("format_version")
        .ok_or_else(|| Error::MissingSection("format_version".into()))?;
    let found = version
        .as_u64()
        .ok_or_else(|| Error::ModelFile("format_version is not an integer".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION.into(),
        });
    }
    if let Some(key) = SECTIONS.iter().find(|k| !obj.contains_key(**k)) {
        return Err(Error::MissingSection(key.to_string()));
    }
    if let Some(key) = obj.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        // fields this version does not know are the mark of a newer writer
        return Err(Error::UnknownField(key.clone()));
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::ModelFile(e.to_string()))?;

    let variables = file
        .variables
        .into_iter()
        .map(|v| VariableSpec::new(v.name, v.levels))
        .collect::<Result<Vec<_>>>()?;
    let tree = EventTree::from_variables(variables)?;
    if file.staging.len() != tree.depth_count() || file.florets.len() != tree.depth_count() {
        return Err(Error::ModelFile(format!(
            "{} variables but {} staging and {} floret entries",
            tree.depth_count(),
            file.staging.len(),
            file.florets.len()
        )));
    }
    let depths = file
        .staging
        .into_iter()
        .enumerate()
        .map(|(d, e)| {
            let ds = DepthStaging::new(e.stage_of.clone(), e.unobserved)?;
            // ids must already be canonical, otherwise florets would be misaligned
            if ds.stage_of() != e.stage_of.as_slice() || ds.unobserved() != e.unobserved {
                return Err(Error::ModelFile(format!(
                    "stage ids at depth {d} are not in first-occurrence order"
                )));
            }
            Ok(ds)
        })
        .collect::<Result<Vec<_>>>()?;
    let staging = Staging::new(&tree, depths)?;
    let model = StagedTreeModel::new(tree, staging, file.florets)?;
    Ok((model, file.provenance))
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &StagedTreeModel,
    provenance: &Provenance,
) -> Result<()> {
    std::fs::write(path, serialize_model(model, provenance)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(StagedTreeModel, Provenance)> {
    deserialize_model(&std::fs::read(path)?)
}

/// The first expected top-level key whose name does not occur in the text.
fn first_absent_section(bytes: &[u8]) -> &'static str {
    let text = String::from_utf8_lossy(bytes);
    SECTIONS
        .iter()
        .find(|k| !text.contains(&format!("\"{k}\"")))
        .copied()
        .unwrap_or("provenance")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> StagedTreeModel {
        let t = EventTree::new(
            VariableSpec::new("C", vec!["no".into(), "yes".into()]).unwrap(),
            vec![VariableSpec::new("X", vec!["a".into(), "b".into(), "c".into()]).unwrap()],
        )
        .unwrap();
        let staging = Staging::new(
            &t,
            vec![
                DepthStaging::single(1),
                DepthStaging::new(vec![0, 1], Some(1)).unwrap(),
            ],
        )
        .unwrap();
        let third = 1.0 / 3.0;
        let florets = vec![
            vec![vec![0.1, 0.9]],
            vec![vec![0.2, 0.3, 0.5], vec![third, third, third]],
        ];
        StagedTreeModel::new(t, staging, florets).unwrap()
    }

    fn prov() -> Provenance {
        let mut flags = BTreeMap::new();
        flags.insert("kl_threshold".into(), "0.01".into());
        Provenance {
            algorithm: "bj".into(),
            seed: 7,
            flags,
            data_digest: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        let bytes = serialize_model(&m, &prov()).unwrap();
        let (back, p) = deserialize_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(p, prov());
        assert_eq!(serialize_model(&back, &p).unwrap(), bytes);
    }

    #[test]
    fn truncated_names_section() {
        let bytes = serialize_model(&model(), &prov()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let cut = text.find("\"florets\"").unwrap();
        match deserialize_model(text[..cut].as_bytes()) {
            Err(Error::MissingSection(s)) => assert_eq!(s, "florets"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_floret_rejected() {
        let text = String::from_utf8(serialize_model(&model(), &prov()).unwrap()).unwrap();
        let bad = text.replacen("0.9", "0.8", 1);
        assert!(matches!(
            deserialize_model(bad.as_bytes()),
            Err(Error::InvalidFloret { .. })
        ));
    }

    #[test]
    fn version_and_unknown_fields() {
        let text = String::from_utf8(serialize_model(&model(), &prov()).unwrap()).unwrap();
        let newer = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(
            deserialize_model(newer.as_bytes()),
            Err(Error::Version { found: 2, .. })
        ));
        let extra = text.replacen('{', "{\n  \"weights\": [],", 1);
        let err = deserialize_model(extra.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("weights"), "{err}");
    }

    #[test]
    fn shape_mismatch() {
        let text = String::from_utf8(serialize_model(&model(), &prov()).unwrap()).unwrap();
        let bad = text.replacen(
            "\"stage_of\": [\n        0,\n        1\n      ]",
            "\"stage_of\": [0]",
            1,
        );
        assert_ne!(bad, text);
        assert!(deserialize_model(bad.as_bytes()).is_err());
    }
}
