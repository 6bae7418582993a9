//! Embedding file format and training pair files.
//!
//! An embedding file is the triple `<name>.meta.json` (JSON object
//! `{"dim": D, "count": N, "dtype": "f32le"}`), `<name>.f32` (raw
//! little-endian 32-bit floats, row-major, exactly N*D values), and an
//! optional `<name>.ids` (N newline-separated UTF-8 ids). Paths passed to
//! the functions here are the `<name>` base; extensions are appended.

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    dim: usize,
    count: usize,
    dtype: String,
}

fn meta_path(base: &Path) -> PathBuf {
    with_suffix(base, ".meta.json")
}

fn raw_path(base: &Path) -> PathBuf {
    with_suffix(base, ".f32")
}

fn ids_path(base: &Path) -> PathBuf {
    with_suffix(base, ".ids")
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write `<base>.meta.json` + `<base>.f32` (+ `<base>.ids` when explicit
/// ids are set). Re-running with identical input overwrites with identical
/// bytes.
pub fn save_embeddings(x: &EmbeddingMatrix, base: &Path) -> Result<()> {
    let meta = Meta {
        dim: x.cols(),
        count: x.rows(),
        dtype: "f32le".to_string(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Format(format!("meta encode: {e}")))?;
    std::fs::write(meta_path(base), json + "\n")?;
    let mut bytes = Vec::with_capacity(x.data().len() * 4);
    for v in x.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(raw_path(base), bytes)?;
    if let Some(ids) = x.explicit_ids() {
        let mut text = ids.join("\n");
        text.push('\n');
        std::fs::write(ids_path(base), text)?;
    }
    Ok(())
}

/// Load an embedding file pair, validating sizes, finiteness, and ids.
pub fn load_embeddings(base: &Path) -> Result<EmbeddingMatrix> {
    let meta_file = meta_path(base);
    let text = std::fs::read_to_string(&meta_file)
        .map_err(|e| Error::Io(format!("{}: {e}", meta_file.display())))?;
    let meta: Meta = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_file.display())))?;
    if meta.dtype != "f32le" {
        return Err(Error::Format(format!(
            "{}: unsupported dtype {:?} (expected \"f32le\")",
            meta_file.display(),
            meta.dtype
        )));
    }
    if meta.dim == 0 {
        return Err(Error::Format(format!(
            "{}: dim must be >= 1",
            meta_file.display()
        )));
    }
    let raw_file = raw_path(base);
    let bytes = std::fs::read(&raw_file)
        .map_err(|e| Error::Io(format!("{}: {e}", raw_file.display())))?;
    let expected = meta
        .count
        .checked_mul(meta.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("count * dim overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {} bytes ({} x {} f32), got {}",
            raw_file.display(),
            expected,
            meta.count,
            meta.dim,
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut m = EmbeddingMatrix::new(meta.count, meta.dim, data).map_err(|e| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{}: {msg}", raw_file.display())),
        other => other,
    })?;
    let ids_file = ids_path(base);
    if ids_file.exists() {
        let text = std::fs::read_to_string(&ids_file)?;
        let ids: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        m.set_ids(ids).map_err(|e| {
            Error::Format(format!("{}: {e}", ids_file.display()))
        })?;
    }
    Ok(m)
}

/// Load `(condition row, target row)` index pairs from a two-column TSV.
pub fn load_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Format(format!(
                "{}:{}: expected 2 tab-separated indices, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: {:?} is not an index",
                    path.display(),
                    lineno + 1,
                    s
                ))
            })
        };
        pairs.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        let data: Vec<f32> = (0..35).map(|i| (i as f32).sin() * 7.3).collect();
        let x = EmbeddingMatrix::new(7, 5, data).unwrap();
        save_embeddings(&x, &base).unwrap();
        let back = load_embeddings(&base).unwrap();
        assert_eq!(x.data(), back.data());
        assert_eq!(back.rows(), 7);
        assert_eq!(back.cols(), 5);
    }

    #[test]
    fn ids_round_trip() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        let x = EmbeddingMatrix::with_ids(
            2,
            1,
            vec![1.0, 2.0],
            vec!["doc-a".into(), "doc-b".into()],
        )
        .unwrap();
        save_embeddings(&x, &base).unwrap();
        let back = load_embeddings(&base).unwrap();
        assert_eq!(back.id(0), "doc-a");
        assert_eq!(back.id(1), "doc-b");
    }

    #[test]
    fn truncated_raw_file_names_sizes() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        let x = EmbeddingMatrix::new(3, 2, vec![0.0; 6]).unwrap();
        save_embeddings(&x, &base).unwrap();
        let raw = dir.path().join("emb.f32");
        let bytes = std::fs::read(&raw).unwrap();
        std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_embeddings(&base).unwrap_err().to_string();
        assert!(err.contains("expected 24 bytes"), "{err}");
        assert!(err.contains("got 20"), "{err}");
    }

    #[test]
    fn zero_dim_meta_rejected() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        std::fs::write(
            dir.path().join("emb.meta.json"),
            r#"{"dim": 0, "count": 1, "dtype": "f32le"}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("emb.f32"), []).unwrap();
        let err = load_embeddings(&base).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn non_finite_values_rejected_with_location() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        std::fs::write(
            dir.path().join("emb.meta.json"),
            r#"{"dim": 2, "count": 2, "dtype": "f32le"}"#,
        )
        .unwrap();
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, f32::INFINITY, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.path().join("emb.f32"), bytes).unwrap();
        let err = load_embeddings(&base).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("column 0"), "{err}");
    }

    #[test]
    fn bad_json_rejected() {
        let dir = tempdir().unwrap();
        let base = dir.path().join("emb");
        std::fs::write(dir.path().join("emb.meta.json"), "{not json").unwrap();
        std::fs::write(dir.path().join("emb.f32"), []).unwrap();
        assert!(matches!(load_embeddings(&base), Err(Error::Format(_))));
    }

    #[test]
    fn pairs_parse_and_reject_garbage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        std::fs::write(&path, "0\t1\n2\t3\n").unwrap();
        assert_eq!(load_pairs(&path).unwrap(), vec![(0, 1), (2, 3)]);
        std::fs::write(&path, "0\tx\n").unwrap();
        assert!(load_pairs(&path).is_err());
    }
}
