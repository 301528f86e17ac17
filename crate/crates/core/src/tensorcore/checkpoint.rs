//! Checkpoint files: a JSON manifest plus a flat little-endian float64 blob
//! holding every parameter in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor, TensorError};

pub const FORMAT: &str = "sospct-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub params: Vec<ParamEntry>,
    /// Free-form metadata (hyperparameters, codec edges, grid spec, variant).
    pub meta: serde_json::Value,
}

/// `(manifest, blob)` paths for a checkpoint stem such as `runs/model`.
pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn encode_blob(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(store.num_scalars() * 8);
    for (_, _, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn manifest_for(store: &ParamStore, meta: serde_json::Value) -> Manifest {
    Manifest {
        format: FORMAT.to_string(),
        params: store
            .iter()
            .map(|(_, name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta,
    }
}

pub fn save(stem: &Path, store: &ParamStore, meta: serde_json::Value) -> Result<(), TensorError> {
    let (mpath, bpath) = checkpoint_paths(stem);
    if let Some(parent) = mpath.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let manifest = manifest_for(store, meta);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    fs::write(mpath, json)?;
    fs::write(bpath, encode_blob(store))?;
    Ok(())
}

pub fn decode(manifest: &Manifest, blob: &[u8]) -> Result<ParamStore, TensorError> {
    if manifest.format != FORMAT {
        return Err(TensorError::Checkpoint(format!(
            "unknown checkpoint format {:?}",
            manifest.format
        )));
    }
    let expected: usize = manifest
        .params
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum();
    if blob.len() != expected * 8 {
        return Err(TensorError::Checkpoint(format!(
            "blob holds {} bytes, manifest needs {}",
            blob.len(),
            expected * 8
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut store = ParamStore::new();
    for p in &manifest.params {
        let n = p.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        store.add(p.name.clone(), Tensor::new(p.shape.clone(), data));
    }
    Ok(store)
}

pub fn load(stem: &Path) -> Result<(Manifest, ParamStore), TensorError> {
    let (mpath, bpath) = checkpoint_paths(stem);
    let manifest: Manifest = serde_json::from_slice(&fs::read(mpath)?)
        .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let store = decode(&manifest, &fs::read(bpath)?)?;
    Ok((manifest, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_layout_is_little_endian_in_order() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::row(vec![1.0, -2.5]));
        store.add("b", Tensor::scalar(0.125));
        let blob = encode_blob(&store);
        assert_eq!(blob.len(), 24);
        assert_eq!(&blob[8..16], &(-2.5f64).to_le_bytes());
        assert_eq!(&blob[16..24], &0.125f64.to_le_bytes());
    }

    #[test]
    fn save_load_restores_values() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ck");
        let mut store = ParamStore::new();
        store.add("w", Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, f64::MIN_POSITIVE]));
        save(&stem, &store, serde_json::json!({"variant": "sosp-CT"})).unwrap();
        let (manifest, loaded) = load(&stem).unwrap();
        assert_eq!(manifest.meta["variant"], "sosp-CT");
        assert_eq!(loaded.get(loaded.find("w").unwrap()), store.get(store.find("w").unwrap()));
    }

    #[test]
    fn truncated_blob_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::row(vec![1.0, 2.0]));
        let m = manifest_for(&store, serde_json::Value::Null);
        let blob = encode_blob(&store);
        assert!(decode(&m, &blob[..8]).is_err());
    }
}
