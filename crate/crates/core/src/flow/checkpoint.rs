//! Checkpoint format: `<name>.manifest.json` describing the architecture
//! and tensor table, plus `<name>.params.f32` holding every tensor
//! concatenated as little-endian f32. Save-then-load of an f32 model is
//! bit-exact.

use super::params::FlowModel;
use super::{FlowArch, Objective};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::standardize::StandardizeStats;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    /// Byte offset into the params file.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    arch: FlowArch,
    objective: Objective,
    cond_dropout: f32,
    standardize: StandardizeStats,
    tensors: Vec<TensorEntry>,
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write `<base>.manifest.json` and `<base>.params.f32`.
pub fn save_model<T: Real>(model: &FlowModel<T>, base: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut bytes: Vec<u8> = Vec::new();
    for (name, tensor, _) in model.tensors() {
        entries.push(TensorEntry {
            name,
            rows: tensor.rows(),
            cols: tensor.cols(),
            offset: bytes.len(),
        });
        for v in tensor.as_slice() {
            bytes.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        arch: model.arch.clone(),
        objective: model.objective,
        cond_dropout: model.cond_dropout_used,
        standardize: model.standardize.clone(),
        tensors: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
    std::fs::write(with_suffix(base, ".manifest.json"), json + "\n")?;
    std::fs::write(with_suffix(base, ".params.f32"), bytes)?;
    Ok(())
}

/// Load a checkpoint. Unknown format versions and any shape or size
/// mismatch are rejected.
pub fn load_model<T: Real>(base: &Path) -> Result<FlowModel<T>> {
    let manifest_path = with_suffix(base, ".manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Io(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} (this build reads {})",
            manifest.format_version, CHECKPOINT_VERSION
        )));
    }
    let params_path = with_suffix(base, ".params.f32");
    let bytes = std::fs::read(&params_path)?;

    let mut model = FlowModel::<T>::zeros(&manifest.arch)?;
    model.objective = manifest.objective;
    model.cond_dropout_used = manifest.cond_dropout;
    if manifest.standardize.dim() != manifest.arch.input_dim {
        return Err(Error::Format(format!(
            "standardize stats have dimension {}, architecture expects {}",
            manifest.standardize.dim(),
            manifest.arch.input_dim
        )));
    }
    model.standardize = manifest.standardize.clone();

    let mut expected_total = 0usize;
    for entry in &manifest.tensors {
        expected_total += entry.rows * entry.cols * 4;
    }
    if bytes.len() != expected_total {
        return Err(Error::Format(format!(
            "{}: expected {} bytes, got {}",
            params_path.display(),
            expected_total,
            bytes.len()
        )));
    }

    let mut by_name: std::collections::BTreeMap<&str, &TensorEntry> = Default::default();
    for e in &manifest.tensors {
        if by_name.insert(e.name.as_str(), e).is_some() {
            return Err(Error::Format(format!("duplicate tensor {:?}", e.name)));
        }
    }
    let mut seen = 0usize;
    for (name, tensor, _) in model.tensors_mut() {
        let entry = by_name.get(name.as_str()).ok_or_else(|| {
            Error::Format(format!("checkpoint is missing tensor {name:?}"))
        })?;
        if entry.rows != tensor.rows() || entry.cols != tensor.cols() {
            return Err(Error::Format(format!(
                "tensor {name:?} has shape {}x{}, expected {}x{}",
                entry.rows,
                entry.cols,
                tensor.rows(),
                tensor.cols()
            )));
        }
        let start = entry.offset;
        let end = start + tensor.len() * 4;
        if end > bytes.len() {
            return Err(Error::Format(format!(
                "tensor {name:?} extends past end of params file"
            )));
        }
        for (slot, chunk) in tensor.as_mut_slice().iter_mut().zip(bytes[start..end].chunks_exact(4)) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            *slot = T::from_f64(v as f64);
        }
        seen += 1;
    }
    if seen != manifest.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, model expects {}",
            manifest.tensors.len(),
            seen
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::params::init_model;
    use super::super::FlowArch;
    use super::*;
    use crate::num::Mat;
    use tempfile::tempdir;

    fn arch() -> FlowArch {
        FlowArch {
            input_dim: 3,
            hidden_dim: 8,
            time_dim: 4,
            cond_dim: 2,
            layers: 2,
            rank: 2,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_and_forward_identical() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("model");
        let mut model = init_model::<f32>(&arch(), 5).unwrap();
        model.cond_dropout_used = 0.1;
        save_model(&model, &base).unwrap();
        let loaded = load_model::<f32>(&base).unwrap();
        assert_eq!(model, loaded);

        let x = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f32 * 0.17 - 0.5);
        let t = vec![0.25f32, 0.5, 0.75];
        let a = model.forward(&x, &t, None).unwrap();
        let b = loaded.forward(&x, &t, None).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn save_twice_identical_bytes() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("model");
        let model = init_model::<f32>(&arch(), 7).unwrap();
        save_model(&model, &base).unwrap();
        let a = std::fs::read(dir.path().join("model.params.f32")).unwrap();
        let am = std::fs::read(dir.path().join("model.manifest.json")).unwrap();
        save_model(&model, &base).unwrap();
        let b = std::fs::read(dir.path().join("model.params.f32")).unwrap();
        let bm = std::fs::read(dir.path().join("model.manifest.json")).unwrap();
        assert_eq!(a, b);
        assert_eq!(am, bm);
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("model");
        let model = init_model::<f32>(&arch(), 7).unwrap();
        save_model(&model, &base).unwrap();
        let path = dir.path().join("model.manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, text).unwrap();
        let err = load_model::<f32>(&base).unwrap_err();
        assert!(err.to_string().contains("version 99"), "{err}");
    }

    #[test]
    fn truncated_params_rejected() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("model");
        let model = init_model::<f32>(&arch(), 7).unwrap();
        save_model(&model, &base).unwrap();
        let path = dir.path().join("model.params.f32");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model::<f32>(&base), Err(Error::Format(_))));
    }
}
