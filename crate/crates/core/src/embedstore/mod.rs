//! On-disk and in-memory representation of embeddings, manifests and datasets.

mod dataset;
mod format;
mod manifest;

pub use dataset::{bind, ClassVocab, Dataset, Selector};
pub use format::{read_embeddings, write_embeddings, EmbeddingMatrix, HEADER_LEN, MAGIC, VERSION};
pub use manifest::{read_manifest, write_manifest, Manifest, Record, Split, TaskType};

use std::path::Path;

use crate::error::Result;

/// Read an EMB1 file and a manifest and bind them.
pub fn load_dataset(
    embeddings: impl AsRef<Path>,
    manifest: impl AsRef<Path>,
    task: TaskType,
) -> Result<Dataset> {
    let matrix = read_embeddings(embeddings)?;
    let manifest = read_manifest(manifest, task)?;
    bind(matrix, manifest)
}
