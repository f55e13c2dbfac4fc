//! Model files.
//!
//! General form: `{"n", "q", "k", "edges": [{"vertices": [...], "table": [...]}],
//! "fields": [[q reals] × n]}` with tables row-major in vertex order. Ising
//! form: `{"n", "J": [[...]], "h": [...]}`. Missing fields default to zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::model::{HyperEdge, IsingModel, Mrf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneralFile {
    n: usize,
    q: usize,
    k: usize,
    #[serde(default)]
    edges: Vec<HyperEdge>,
    #[serde(default)]
    fields: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IsingFile {
    n: usize,
    #[serde(rename = "J")]
    j: Vec<Vec<f64>>,
    #[serde(default)]
    h: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ModelFile {
    General(GeneralFile),
    Ising(IsingFile),
}

/// A parsed model; `ising` is set when the file used the Ising form or the
/// general form describes a binary pairwise model.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub mrf: Mrf,
    pub ising: Option<IsingModel>,
}

impl LoadedModel {
    pub fn require_ising(&self) -> Result<&IsingModel> {
        self.ising
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this operation needs a binary pairwise model".into()))
    }
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("model JSON: {e}")))?;
    match file {
        ModelFile::General(g) => {
            let fields = g.fields.unwrap_or_else(|| vec![vec![0.0; g.q]; g.n]);
            let mrf = Mrf::new(g.n, g.q, g.k, g.edges, fields)?;
            let ising = mrf.to_ising().map(|(m, _)| m);
            Ok(LoadedModel { mrf, ising })
        }
        ModelFile::Ising(f) => {
            if f.j.len() != f.n {
                return invalid(format!("J has {} rows, expected n = {}", f.j.len(), f.n));
            }
            let h = f.h.unwrap_or_else(|| vec![0.0; f.n]);
            let ising = IsingModel::new(Matrix::from_rows(f.j)?, h)?;
            Ok(LoadedModel { mrf: ising.to_mrf(), ising: Some(ising) })
        }
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text)
}

/// General-form JSON for `model`.
pub fn mrf_to_json(model: &Mrf) -> String {
    let file = GeneralFile {
        n: model.n(),
        q: model.q(),
        k: model.k(),
        edges: model.edges().to_vec(),
        fields: Some(model.fields().to_vec()),
    };
    serde_json::to_string(&file).expect("plain data serializes")
}

/// Ising-form JSON for `model`.
pub fn ising_to_json(model: &IsingModel) -> String {
    let file = IsingFile { n: model.n(), j: model.couplings().to_rows(), h: Some(model.fields().to_vec()) };
    serde_json::to_string(&file).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_ising;
    use crate::rng::rng_from_seed;

    #[test]
    fn both_forms_roundtrip() {
        let im = random_ising(5, 1.0, 0.5, &mut rng_from_seed(3));
        let a = parse_model(&ising_to_json(&im)).unwrap();
        assert_eq!(a.ising.as_ref(), Some(&im));
        let b = parse_model(&mrf_to_json(&a.mrf)).unwrap();
        assert_eq!(b.mrf, a.mrf);
        let x = crate::model::SpinConfiguration(vec![0, 1, 1, 0, 1]);
        assert!((b.mrf.energy(&x).unwrap() - im.energy_spins(&[1.0, -1.0, -1.0, 1.0, -1.0])).abs() < 1e-12);
    }

    #[test]
    fn two_spin_file() {
        let m = parse_model(r#"{"n": 2, "J": [[0, 1.0], [1.0, 0]]}"#).unwrap();
        let f = crate::exact::exact_free_energy(&m.mrf).unwrap();
        assert!((f - (2.0 * 1f64.exp() + 2.0 * (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_model("{"), Err(Error::InvalidInput(_))));
        assert!(parse_model(r#"{"n": 2, "J": [[0, 1], [2, 0]]}"#).is_err());
        assert!(parse_model(r#"{"n": 2, "q": 2, "k": 2, "edges": [{"vertices": [0, 0], "table": [0,0,0,0]}]}"#).is_err());
    }
}
