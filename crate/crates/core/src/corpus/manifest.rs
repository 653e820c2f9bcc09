//! Corpus directory format.
//!
//! A corpus directory holds `manifest.json` and one raw little-endian `f32`
//! block per leaf:
//!
//! ```json
//! {
//!   "format": "domain-scope-corpus",
//!   "version": 1,
//!   "nodes": [
//!     {"id": 0, "label": "root", "parent": null, "children": [1]},
//!     {"id": 1, "label": "leaf", "parent": 0, "children": [],
//!      "samples_file": "leaf_1.f32", "shape": [4], "count": 1}
//!   ]
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusNode, CorpusTree, NodeId};
use crate::sample::SampleSet;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "domain-scope-corpus";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    nodes: Vec<ManifestNode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestNode {
    id: NodeId,
    label: String,
    parent: Option<NodeId>,
    #[serde(default)]
    children: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and validates a corpus directory.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<CorpusTree, CorpusError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(CorpusError::Manifest(format!(
            "unknown format {:?}, expected {FORMAT:?}",
            manifest.format
        )));
    }
    if manifest.version != VERSION {
        return Err(CorpusError::Manifest(format!(
            "unsupported version {}",
            manifest.version
        )));
    }

    let mut nodes = Vec::with_capacity(manifest.nodes.len());
    for entry in manifest.nodes {
        let samples = match (entry.samples_file, entry.shape, entry.count) {
            (None, None, None) => None,
            (Some(file), Some(shape), Some(count)) => {
                if Path::new(&file).file_name().and_then(|f| f.to_str()) != Some(file.as_str()) {
                    return Err(CorpusError::Manifest(format!(
                        "node {}: samples_file {file:?} must be a plain file name",
                        entry.id
                    )));
                }
                let path = dir.join(&file);
                Some(SampleSet::read_block(&path, shape, count).map_err(io_err(&path))?)
            }
            _ => {
                return Err(CorpusError::Manifest(format!(
                    "node {}: samples_file, shape and count must appear together",
                    entry.id
                )))
            }
        };
        nodes.push(CorpusNode {
            id: entry.id,
            label: entry.label,
            parent: entry.parent,
            children: entry.children,
            samples,
        });
    }
    CorpusTree::new(nodes)
}

/// Writes `tree` as a corpus directory, creating `dir` if needed.
///
/// Output is deterministic: the same tree always produces the same bytes.
pub fn write_corpus(tree: &CorpusTree, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(tree.len());
    for node in tree.nodes() {
        let mut entry = ManifestNode {
            id: node.id,
            label: node.label.clone(),
            parent: node.parent,
            children: node.children.clone(),
            samples_file: None,
            shape: None,
            count: None,
        };
        if let Some(samples) = &node.samples {
            let file = format!("leaf_{}.f32", node.id);
            let path = dir.join(&file);
            samples.write_block(&path).map_err(io_err(&path))?;
            entry.samples_file = Some(file);
            entry.shape = Some(samples.shape().to_vec());
            entry.count = Some(samples.len());
        }
        entries.push(entry);
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: VERSION,
        nodes: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CorpusError::Manifest(e.to_string()))?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(io_err(&path))
}
