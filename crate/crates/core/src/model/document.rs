//! Versioned JSON document for model persistence.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LmssnModel, NrbfNetwork, OutputLocalModel, ScalingTransform, StateLocalModel};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateLmDoc {
    /// Row-major `n_x x n_x`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub o: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputLmDoc {
    pub c: Vec<f64>,
    pub d: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub n_x: usize,
    pub n_u: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub train_x0: bool,
    pub scaling: ScalingTransform,
    pub state_models: Vec<StateLmDoc>,
    pub output_models: Vec<OutputLmDoc>,
    pub state_validity: NrbfNetwork,
    pub output_validity: NrbfNetwork,
}

impl From<&LmssnModel> for ModelDocument {
    fn from(m: &LmssnModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            n_x: m.n_x,
            n_u: m.n_u,
            x0: m.x0.clone(),
            train_x0: m.train_x0,
            scaling: m.scaling.clone(),
            state_models: m
                .state_lms
                .iter()
                .map(|lm| StateLmDoc {
                    a: lm
                        .a
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                    b: lm.b.clone(),
                    o: lm.o.clone(),
                })
                .collect(),
            output_models: m
                .output_lms
                .iter()
                .map(|lm| OutputLmDoc {
                    c: lm.c.clone(),
                    d: lm.d,
                    p: lm.p,
                })
                .collect(),
            state_validity: m.state_validity.clone(),
            output_validity: m.output_validity.clone(),
        }
    }
}

impl TryFrom<ModelDocument> for LmssnModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported model schema version {}",
                doc.schema_version
            )));
        }
        let n = doc.n_x;
        let mut state_lms = Vec::with_capacity(doc.state_models.len());
        for lm in doc.state_models {
            if lm.a.len() != n || lm.a.iter().any(|r| r.len() != n) {
                return Err(Error::Format("state matrix has wrong shape".into()));
            }
            let flat: Vec<f64> = lm.a.into_iter().flatten().collect();
            state_lms.push(StateLocalModel {
                a: DMatrix::from_row_slice(n, n, &flat),
                b: lm.b,
                o: lm.o,
            });
        }
        let output_lms = doc
            .output_models
            .into_iter()
            .map(|lm| OutputLocalModel {
                c: lm.c,
                d: lm.d,
                p: lm.p,
            })
            .collect();
        let model = LmssnModel {
            n_x: n,
            n_u: doc.n_u,
            state_lms,
            output_lms,
            state_validity: NrbfNetwork::new(doc.state_validity.members)?,
            output_validity: NrbfNetwork::new(doc.output_validity.members)?,
            scaling: ScalingTransform::new(doc.scaling.offset, doc.scaling.range)?,
            x0: doc.x0,
            train_x0: doc.train_x0,
        };
        model.validate()?;
        Ok(model)
    }
}

impl LmssnModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianValidity;

    #[test]
    fn json_round_trip() {
        let net = NrbfNetwork::new(vec![
            GaussianValidity::new(vec![0.25, 0.5, 0.5], vec![0.1, 0.3, 0.3]).unwrap(),
            GaussianValidity::new(vec![0.75, 0.5, 0.5], vec![0.1, 0.3, 0.3]).unwrap(),
        ])
        .unwrap();
        let mut m = LmssnModel::new(
            vec![StateLocalModel::zeros(2); 2],
            vec![OutputLocalModel::zeros(2); 2],
            net.clone(),
            net,
            ScalingTransform::new(vec![-1.0, 0.5, 0.0], vec![2.0, 3.0, 1.0]).unwrap(),
        )
        .unwrap();
        let theta: Vec<f64> = (0..24).map(|v| (v as f64) * 0.37 - 3.1).collect();
        m.unpack_parameters(&theta).unwrap();
        let back = LmssnModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_unknown_version() {
        let m = LmssnModel::new(
            vec![StateLocalModel::zeros(1)],
            vec![OutputLocalModel::zeros(1)],
            NrbfNetwork::new(vec![GaussianValidity::new(vec![0.5; 2], vec![0.3; 2]).unwrap()])
                .unwrap(),
            NrbfNetwork::new(vec![GaussianValidity::new(vec![0.5; 2], vec![0.3; 2]).unwrap()])
                .unwrap(),
            ScalingTransform::identity(2),
        )
        .unwrap();
        let s = m.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(LmssnModel::from_json(&s).is_err());
    }
}
