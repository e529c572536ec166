//! JSON checkpoints of trained models.
//!
//! A checkpoint names every parameter tensor in registration order with its
//! shape and row-major data. Floats are written as shortest round-trip
//! decimals, so loading gives back bit-identical parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rkn::{RknArch, RknModel};

pub const CHECKPOINT_FORMAT: &str = "rkn-checkpoint/1";
/// Hex digits of the file hash kept in model labels.
pub const LABEL_HASH_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub arch: RknArch,
    pub feat_dim: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub params: Vec<ParamRecord>,
    /// Free-form training metadata (config, history summary, data provenance).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn from_model(model: &RknModel, training: Option<serde_json::Value>) -> Self {
        let params = model
            .params
            .infos()
            .iter()
            .map(|info| ParamRecord {
                name: info.name.clone(),
                shape: [info.rows, info.cols],
                data: model.params.flat()[info.offset..info.offset + info.len()].to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            arch: model.arch,
            feat_dim: model.arch.feat_dim(),
            m: model.arch.m,
            n: model.arch.n,
            seed: model.seed,
            params,
            training,
        }
    }

    /// Rebuilds the model, checking metadata, names, shapes and values.
    pub fn into_model(self) -> Result<RknModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let arch = RknArch::new(self.arch.m, self.arch.n, self.arch.hidden)
            .map_err(|e| Error::Validation(format!("bad architecture: {e}")))?;
        if self.m != arch.m || self.n != arch.n {
            return Err(Error::Validation(format!(
                "m = {}, n = {} disagree with the architecture ({}, {})",
                self.m, self.n, arch.m, arch.n
            )));
        }
        if self.feat_dim != arch.feat_dim() {
            return Err(Error::Validation(format!(
                "feat_dim = {} but the architecture implies {}",
                self.feat_dim,
                arch.feat_dim()
            )));
        }
        let mut model = RknModel::new(arch, self.seed);
        let infos = model.params.infos().to_vec();
        if infos.len() != self.params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                infos.len(),
                self.params.len()
            )));
        }
        for (info, rec) in infos.iter().zip(&self.params) {
            if rec.name != info.name {
                return Err(Error::Validation(format!("expected parameter {:?}, found {:?}", info.name, rec.name)));
            }
            if rec.shape != [info.rows, info.cols] || rec.data.len() != info.len() {
                return Err(Error::Validation(format!(
                    "parameter {:?}: expected shape {}x{}, found {:?} with {} values",
                    rec.name,
                    info.rows,
                    info.cols,
                    rec.shape,
                    rec.data.len()
                )));
            }
            if rec.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("parameter {:?} has non-finite values", rec.name)));
            }
        }
        let flat: Vec<f64> = self.params.into_iter().flat_map(|r| r.data).collect();
        model.params.set_flat(&flat)?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }
}

/// `rkn:<hash prefix>` for checkpoint file contents.
pub fn checkpoint_label(bytes: &[u8]) -> String {
    format!("rkn:{}", &checkpoint_hash(bytes)[..LABEL_HASH_LEN])
}

/// Hex SHA-256 of the bytes.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses checkpoint text; the returned model is labelled with its hash.
pub fn parse_checkpoint(text: &str) -> Result<RknModel> {
    let ck: Checkpoint =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    let mut model = ck.into_model()?;
    model.label = checkpoint_label(text.as_bytes());
    Ok(model)
}

/// Writes the checkpoint and returns the label of the written file.
pub fn save_checkpoint(model: &RknModel, training: Option<serde_json::Value>, path: &Path) -> Result<String> {
    let text = Checkpoint::from_model(model, training).to_json();
    std::fs::write(path, &text)?;
    Ok(checkpoint_label(text.as_bytes()))
}

pub fn load_checkpoint(path: &Path) -> Result<RknModel> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut model = RknModel::new(RknArch::cv(), 9);
        for (i, v) in model.params.flat_mut().iter_mut().enumerate() {
            *v += (i as f64 * 0.37).sin() * 1e-3;
        }
        let text = Checkpoint::from_model(&model, None).to_json();
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back.params.flat(), model.params.flat());
        assert_eq!(back.label, checkpoint_label(text.as_bytes()));
        assert!(back.label.starts_with("rkn:") && back.label.len() == 4 + LABEL_HASH_LEN);
    }

    #[test]
    fn schema_guards() {
        let model = RknModel::new(RknArch::cv(), 1);
        let mut ck = Checkpoint::from_model(&model, None);
        ck.feat_dim = 7;
        assert!(matches!(ck.clone().into_model(), Err(Error::Validation(m)) if m.contains("feat_dim")));
        ck.feat_dim = 6;
        ck.params[0].name = "other".into();
        assert!(matches!(ck.clone().into_model(), Err(Error::Validation(_))));
        ck = Checkpoint::from_model(&model, None);
        ck.params[1].data.pop();
        assert!(matches!(ck.into_model(), Err(Error::Validation(_))));
        assert!(matches!(parse_checkpoint("{"), Err(Error::Parse { .. })));
        assert!(matches!(parse_checkpoint(r#"{"format":"x","extra":1}"#), Err(Error::Parse { .. })));
    }

    #[test]
    fn hash_known_value() {
        assert_eq!(checkpoint_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
