//! Dataset cache files: JSON header (shape, labels, provenance) followed by
//! the feature matrix as little-endian `f64`s.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::container;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"FRAGDSET";

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    dim: usize,
    num_classes: usize,
    labels: Vec<usize>,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tags: BTreeMap<String, String>,
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    write_dataset_tagged(path, ds, &BTreeMap::new())
}

/// Cache file whose header also carries `tags`.
pub fn write_dataset_tagged(path: impl AsRef<Path>, ds: &Dataset, tags: &BTreeMap<String, String>) -> Result<()> {
    let header = Header {
        n: ds.len(),
        dim: ds.dim(),
        num_classes: ds.num_classes,
        labels: ds.labels.clone(),
        provenance: ds.provenance.clone(),
        tags: tags.clone(),
    };
    container::write_file(
        path.as_ref(),
        &container::encode(MAGIC, &header, &ds.features.data)?,
    )
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = container::read_file(path.as_ref())?;
    let (h, data): (Header, _) = container::decode(MAGIC, &bytes)?;
    if data.len() != h.n * h.dim {
        return Err(Error::format(
            bytes.len() as u64,
            format!("expected {} features, found {}", h.n * h.dim, data.len()),
        ));
    }
    Dataset::new(Matrix::from_vec(h.n, h.dim, data), h.labels, h.num_classes, h.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ds = crate::datakit::synth_blobs(12, 3, 2, 1.5, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_dataset(&p, &ds).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), ds);
    }
}
