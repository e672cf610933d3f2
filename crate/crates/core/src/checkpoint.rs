//! Versioned binary container for model weights.
//!
//! Layout (all integers little-endian):
//!   magic "SIPE" | u32 version | u32 tensor count |
//!   per tensor: u32 name len, name bytes, u64 rows, u64 cols |
//!   payload: all tensors as row-major f64, in table order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::nn::Mat;

const MAGIC: &[u8; 4] = b"SIPE";
const VERSION: u32 = 1;

pub fn save(path: &Path, entries: &[(&str, &Mat)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, m) in entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
    }
    for (_, m) in entries {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Mat)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Checkpoint(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    if count > 1_000_000 {
        return Err(CoreError::Checkpoint(format!("implausible tensor count {count}")));
    }
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 4096 {
            return Err(CoreError::Checkpoint(format!("implausible name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CoreError::Checkpoint("tensor name is not utf-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        if rows.saturating_mul(cols) > 100_000_000 {
            return Err(CoreError::Checkpoint(format!(
                "implausible tensor shape {rows}x{cols}"
            )));
        }
        table.push((name, rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (name, rows, cols) in table {
        let mut data = vec![0.0; rows * cols];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        out.push((name, Mat::from_vec(rows, cols, data)));
    }
    Ok(out)
}

/// Fetch one tensor by name from a loaded checkpoint.
pub fn take(entries: &mut Vec<(String, Mat)>, name: &str) -> Result<Mat> {
    let idx = entries
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| CoreError::Checkpoint(format!("missing tensor `{name}`")))?;
    Ok(entries.remove(idx).1)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sipe");
        let a = Mat::from_vec(2, 3, vec![1.0, -2.5, 3.25, 0.0, f64::MIN_POSITIVE, 1e300]);
        let b = Mat::row(vec![0.1, 0.2]);
        save(&path, &[("layer.w", &a), ("layer.b", &b)]).unwrap();
        let mut loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let la = take(&mut loaded, "layer.w").unwrap();
        let lb = take(&mut loaded, "layer.b").unwrap();
        // bit-exact round trip
        for (x, y) in a.data().iter().zip(la.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(b, lb);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.sipe");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load(&path), Err(CoreError::Checkpoint(_))));
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.sipe");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SIPE");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncated_payload_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.sipe");
        let a = Mat::from_vec(4, 4, (0..16).map(|i| i as f64).collect());
        save(&path, &[("w", &a)]).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 9]).unwrap();
        assert!(load(&path).is_err());
    }
}
