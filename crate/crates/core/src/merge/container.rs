//! Adapter container I/O: a header JSON plus a raw little-endian f32 blob.
//!
//! Layout per module: `A` (r×k row-major) at `a_offset`, `B` (d×r row-major)
//! at `b_offset`, byte offsets into the blob. Round-trips are bit-exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::{AdapterMetadata, LoraAdapter, LoraModule, MergeError};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    modules: Vec<ModuleEntry>,
    metadata: AdapterMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModuleEntry {
    name: String,
    d: usize,
    k: usize,
    r: usize,
    alpha: f32,
    a_offset: u64,
    b_offset: u64,
}

fn bundle_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = if path.extension().is_some_and(|e| e == "json") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    };
    (stem.with_extension("json"), stem.with_extension("bin"))
}

fn write_matrix(blob: &mut Vec<u8>, m: &Matrix) -> u64 {
    let offset = blob.len() as u64;
    for &v in m.data() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    offset
}

fn read_matrix(
    blob: &[u8],
    offset: u64,
    rows: usize,
    cols: usize,
) -> Result<Matrix, MergeError> {
    let start = offset as usize;
    let len = rows * cols * 4;
    let end = start
        .checked_add(len)
        .ok_or(MergeError::MalformedContainer { offset: start })?;
    if end > blob.len() {
        return Err(MergeError::MalformedContainer { offset: blob.len() });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in blob[start..end].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    Matrix::new(rows, cols, data)
}

/// Writes the two-file bundle `<stem>.json` + `<stem>.bin`.
pub fn save_adapter(adapter: &LoraAdapter, path: impl AsRef<Path>) -> Result<(), MergeError> {
    let (header_path, blob_path) = bundle_paths(path.as_ref());
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, module) in &adapter.modules {
        let a_offset = write_matrix(&mut blob, &module.a);
        let b_offset = write_matrix(&mut blob, &module.b);
        entries.push(ModuleEntry {
            name: name.clone(),
            d: module.b.rows(),
            k: module.a.cols(),
            r: module.rank,
            alpha: module.alpha,
            a_offset,
            b_offset,
        });
    }
    let mut metadata = adapter.metadata.clone();
    if metadata.target_modules.is_empty() {
        metadata.target_modules = adapter.modules.keys().cloned().collect();
    }
    let header = Header {
        modules: entries,
        metadata,
    };
    let io = |path: &Path, source: std::io::Error| MergeError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::write(
        &header_path,
        serde_json::to_string_pretty(&header).expect("header serializes"),
    )
    .map_err(|e| io(&header_path, e))?;
    std::fs::write(&blob_path, &blob).map_err(|e| io(&blob_path, e))?;
    Ok(())
}

/// Loads a bundle saved by [`save_adapter`]. `path` may be the stem or the
/// header path.
pub fn load_adapter(path: impl AsRef<Path>) -> Result<LoraAdapter, MergeError> {
    let (header_path, blob_path) = bundle_paths(path.as_ref());
    let io = |path: &Path, source: std::io::Error| MergeError::Io {
        path: path.display().to_string(),
        source,
    };
    let header_text = std::fs::read_to_string(&header_path).map_err(|e| io(&header_path, e))?;
    let header: Header =
        serde_json::from_str(&header_text).map_err(|source| MergeError::HeaderJson {
            path: header_path.display().to_string(),
            source,
        })?;
    let blob = std::fs::read(&blob_path).map_err(|e| io(&blob_path, e))?;

    let mut adapter = LoraAdapter {
        modules: Default::default(),
        metadata: header.metadata,
    };
    for entry in &header.modules {
        if entry.r == 0 {
            return Err(MergeError::ZeroRank {
                module: entry.name.clone(),
            });
        }
        let a = read_matrix(&blob, entry.a_offset, entry.r, entry.k)?;
        let b = read_matrix(&blob, entry.b_offset, entry.d, entry.r)?;
        adapter.modules.insert(
            entry.name.clone(),
            LoraModule {
                a,
                b,
                rank: entry.r,
                alpha: entry.alpha,
            },
        );
    }
    for wanted in &adapter.metadata.target_modules {
        if !adapter.modules.contains_key(wanted) {
            return Err(MergeError::MissingModule {
                module: wanted.clone(),
            });
        }
    }
    Ok(adapter)
}
