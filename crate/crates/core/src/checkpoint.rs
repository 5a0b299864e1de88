//! JSON checkpoints: model arrays plus the metadata needed to rebuild a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Activation, ModelParams};
use crate::task::Op;

pub const FORMAT: &str = "modlab-checkpoint-v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub noise: u64,
    pub init: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub modulus: usize,
    pub op: Op,
    pub width: usize,
    pub activation: Activation,
    pub tied: bool,
    pub seeds: Seeds,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    format: String,
    meta: CheckpointMeta,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    mu: Vec<f64>,
}

impl Checkpoint {
    pub fn new(op: Op, seeds: Seeds, epoch: usize, params: ModelParams) -> Self {
        let meta = CheckpointMeta {
            modulus: params.modulus(),
            op,
            width: params.width(),
            activation: params.activation(),
            tied: params.is_tied(),
            seeds,
            epoch,
        };
        Self { meta, params }
    }

    pub fn to_json(&self) -> String {
        let p = &self.params;
        let wire = Wire {
            format: FORMAT.to_string(),
            meta: self.meta.clone(),
            u: p.u().clone().into(),
            v: p.v().clone().into(),
            w: p.w().clone().into(),
            mu: p.mu().to_vec(),
        };
        serde_json::to_string(&wire).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: Wire = serde_json::from_str(text).map_err(|e| Error::parse("checkpoint", e))?;
        if wire.format != FORMAT {
            return Err(Error::parse("checkpoint", format!("unknown format tag {:?}", wire.format)));
        }
        let meta = wire.meta;
        if meta.width == 0 {
            return Err(Error::parse("checkpoint", "model width is 0"));
        }
        let matrix = |rows: Vec<Vec<f64>>, shape: (usize, usize), name: &str| -> Result<Matrix> {
            let m = Matrix::try_from(rows).map_err(|e| Error::parse("checkpoint", format!("{name}: {e}")))?;
            if m.shape() != shape {
                return Err(Error::parse(
                    "checkpoint",
                    format!("{name} has shape {:?}, expected {:?}", m.shape(), shape),
                ));
            }
            Ok(m)
        };
        let (m, p) = (meta.width, meta.modulus);
        let u = matrix(wire.u, (m, p), "u")?;
        let v = matrix(wire.v, (m, p), "v")?;
        let w = matrix(wire.w, (p, m), "w")?;
        if meta.tied && u != v {
            return Err(Error::parse("checkpoint", "tied checkpoint with u != v"));
        }
        let v = (!meta.tied).then_some(v);
        let params = ModelParams::new(u, v, w, wire.mu, meta.activation)
            .map_err(|e| Error::parse("checkpoint", e))?;
        if !params.is_finite() {
            return Err(Error::parse("checkpoint", "non-finite weights"));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    #[test]
    fn round_trip_is_exact() {
        for tied in [false, true] {
            let params = init_params(7, 5, Activation::Gelu, tied, 9).unwrap();
            let ck = Checkpoint::new(Op::Add, Seeds { split: 1, noise: 2, init: 9 }, 40, params);
            let back = Checkpoint::from_json(&ck.to_json()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let params = init_params(5, 3, Activation::Relu, false, 1).unwrap();
        let json = Checkpoint::new(Op::Sub, Seeds::default(), 0, params).to_json();
        assert!(Checkpoint::from_json(&json[..json.len() / 2]).is_err());
        assert!(Checkpoint::from_json(&json.replace("\"width\":3", "\"width\":0")).is_err());
        assert!(Checkpoint::from_json(&json.replace("\"width\":3", "\"width\":4")).is_err());
        assert!(Checkpoint::from_json(&json.replace(FORMAT, "other")).is_err());
    }
}
