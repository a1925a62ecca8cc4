//! Checkpoint files.
//!
//! The binary form is a `FRAGCKPT` container: JSON header (spec, layer shapes,
//! epoch, run id) followed by current weights, current biases, initial
//! weights and initial biases as little-endian `f64`s in flatten order. A
//! file starting with `{` is read as the pure-JSON form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, CheckpointMeta, NetSpec};
use crate::container;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"FRAGCKPT";

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetSpec,
    shapes: Vec<(usize, usize)>,
    epoch: usize,
    run_id: String,
    spec_hash: String,
    /// Free-form labels such as the producing config hash.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tags: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct JsonForm {
    spec: NetSpec,
    checkpoint: Checkpoint,
}

pub fn save_checkpoint(path: impl AsRef<Path>, spec: &NetSpec, ckpt: &Checkpoint) -> Result<()> {
    save_checkpoint_tagged(path, spec, ckpt, &BTreeMap::new())
}

/// Binary checkpoint whose header also carries `tags`.
pub fn save_checkpoint_tagged(
    path: impl AsRef<Path>,
    spec: &NetSpec,
    ckpt: &Checkpoint,
    tags: &BTreeMap<String, String>,
) -> Result<()> {
    ckpt.check(spec)?;
    let header = Header {
        spec: spec.clone(),
        shapes: ckpt.weights.iter().map(Matrix::shape).collect(),
        epoch: ckpt.meta.epoch,
        run_id: ckpt.meta.run_id.clone(),
        spec_hash: ckpt.meta.spec_hash.clone(),
        tags: tags.clone(),
    };
    let mut data = ckpt.flat();
    data.extend(ckpt.flat_init());
    container::write_file(path.as_ref(), &container::encode(MAGIC, &header, &data)?)
}

pub fn save_checkpoint_json(path: impl AsRef<Path>, spec: &NetSpec, ckpt: &Checkpoint) -> Result<()> {
    ckpt.check(spec)?;
    let doc = JsonForm {
        spec: spec.clone(),
        checkpoint: ckpt.clone(),
    };
    container::write_file(path.as_ref(), &serde_json::to_vec_pretty(&doc)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetSpec, Checkpoint)> {
    let bytes = container::read_file(path.as_ref())?;
    if bytes.first() == Some(&b'{') {
        let doc: JsonForm = serde_json::from_slice(&bytes)?;
        doc.checkpoint.check(&doc.spec)?;
        return Ok((doc.spec, doc.checkpoint));
    }
    let (h, data): (Header, Vec<f64>) = container::decode(MAGIC, &bytes)?;
    h.spec.validate()?;
    let shapes: Vec<(usize, usize)> = (0..h.spec.num_layers()).map(|i| h.spec.shape(i)).collect();
    if shapes != h.shapes {
        return Err(Error::ShapeMismatch("header shapes disagree with spec".into()));
    }
    let bias_len: usize = if h.spec.bias_enabled { shapes.iter().map(|s| s.0).sum() } else { 0 };
    let per_copy: usize = shapes.iter().map(|(r, c)| r * c).sum::<usize>() + bias_len;
    if data.len() != 2 * per_copy {
        return Err(Error::format(
            bytes.len() as u64,
            format!("expected {} values, found {}", 2 * per_copy, data.len()),
        ));
    }
    let mut it = data.into_iter();
    let mut take_copy = || {
        let weights: Vec<Matrix> = shapes
            .iter()
            .map(|&(r, c)| Matrix::from_vec(r, c, it.by_ref().take(r * c).collect()))
            .collect();
        let biases: Vec<Vec<f64>> = if h.spec.bias_enabled {
            shapes.iter().map(|&(r, _)| it.by_ref().take(r).collect()).collect()
        } else {
            Vec::new()
        };
        (weights, biases)
    };
    let (weights, biases) = take_copy();
    let (init_weights, init_biases) = take_copy();
    let ck = Checkpoint {
        weights,
        biases,
        init_weights,
        init_biases,
        meta: CheckpointMeta {
            spec_hash: h.spec_hash,
            run_id: h.run_id,
            epoch: h.epoch,
        },
    };
    Ok((h.spec, ck))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_and_json_round_trip() {
        let spec = NetSpec::relu(&[3, 4, 2], true);
        let mut ck = Checkpoint::init(&spec, 3).unwrap();
        ck.weights[1].set(0, 0, 0.123_456_789_012_345_6);
        ck.biases[0][2] = -1.5;
        ck.meta.epoch = 7;
        ck.meta.run_id = "abc".into();
        let dir = tempfile::tempdir().unwrap();
        for (name, json) in [("c.bin", false), ("c.json", true)] {
            let p = dir.path().join(name);
            if json {
                save_checkpoint_json(&p, &spec, &ck).unwrap();
            } else {
                save_checkpoint(&p, &spec, &ck).unwrap();
            }
            let (s2, c2) = load_checkpoint(&p).unwrap();
            assert_eq!(s2, spec);
            assert_eq!(c2, ck);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = NetSpec::relu(&[3, 2], false);
        let ck = Checkpoint::init(&spec, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        save_checkpoint(&p, &spec, &ck).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));
    }
}
