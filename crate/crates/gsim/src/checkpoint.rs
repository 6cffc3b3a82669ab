//! Binary checkpoint format for a `ParamStore` plus a JSON metadata blob.
//!
//! Layout, all integers little-endian:
//!   magic `GSIMCKPT` (8 bytes)
//!   format version u32
//!   metadata length u64, then that many bytes of UTF-8 JSON
//!   entry count u64
//!   per entry: name length u64 + UTF-8 name; ndim u64 + u64 dims; f64 values
//!
//! Each parameter contributes three entries: the value under its own name and
//! the Adam moments under `name#m` / `name#v`. The optimizer step counter is
//! stored in the metadata wrapper.

use crate::error::{Error, Result};
use crate::nn::{ParamEntry, ParamStore};
use crate::tensor::Tensor;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GSIMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MetaWrapper<M> {
    step: u64,
    meta: M,
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_tensor_entry(w: &mut impl Write, name: &str, t: &Tensor) -> Result<()> {
    write_u64(w, name.len() as u64)?;
    w.write_all(name.as_bytes())?;
    write_u64(w, t.shape().len() as u64)?;
    for &d in t.shape() {
        write_u64(w, d as u64)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor_entry(r: &mut impl Read) -> Result<(String, Tensor)> {
    let name_len = read_u64(r)? as usize;
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf)
        .map_err(|_| Error::Checkpoint("entry name is not valid UTF-8".into()))?;
    let ndim = read_u64(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u64(r)? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut buf = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok((name, Tensor::from_vec(&shape, data)?))
}

pub fn checkpoint_write<M: Serialize>(
    w: &mut impl Write,
    store: &ParamStore,
    meta: &M,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let wrapper = MetaWrapper {
        step: store.step(),
        meta,
    };
    let meta_bytes = serde_json::to_vec(&wrapper)?;
    write_u64(w, meta_bytes.len() as u64)?;
    w.write_all(&meta_bytes)?;
    write_u64(w, store.len() as u64 * 3)?;
    for (name, entry) in store.iter() {
        write_tensor_entry(w, name, &entry.value)?;
        write_tensor_entry(w, &format!("{name}#m"), &entry.adam_m)?;
        write_tensor_entry(w, &format!("{name}#v"), &entry.adam_v)?;
    }
    Ok(())
}

pub fn checkpoint_read<M: DeserializeOwned>(r: &mut impl Read) -> Result<(ParamStore, M)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let meta_len = read_u64(r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let wrapper: MetaWrapper<M> = serde_json::from_slice(&meta_bytes)?;

    let count = read_u64(r)? as usize;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let (name, t) = read_tensor_entry(r)?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry `{name}`")));
        }
    }

    let mut store = ParamStore::new();
    let names: Vec<String> = tensors
        .keys()
        .filter(|n| !n.contains('#'))
        .cloned()
        .collect();
    for name in names {
        let value = tensors.remove(&name).unwrap();
        let adam_m = tensors
            .remove(&format!("{name}#m"))
            .ok_or_else(|| Error::Checkpoint(format!("missing Adam m for `{name}`")))?;
        let adam_v = tensors
            .remove(&format!("{name}#v"))
            .ok_or_else(|| Error::Checkpoint(format!("missing Adam v for `{name}`")))?;
        if !adam_m.same_shape(&value) || !adam_v.same_shape(&value) {
            return Err(Error::Checkpoint(format!(
                "Adam moment shape mismatch for `{name}`"
            )));
        }
        store.insert_entry(
            &name,
            ParamEntry {
                value,
                adam_m,
                adam_v,
            },
        );
    }
    if let Some(orphan) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!(
            "moment entry `{orphan}` has no matching parameter"
        )));
    }
    store.set_step(wrapper.step);
    Ok((store, wrapper.meta))
}

pub fn checkpoint_save<M: Serialize>(path: &Path, store: &ParamStore, meta: &M) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    checkpoint_write(&mut file, store, meta)?;
    file.flush()?;
    Ok(())
}

pub fn checkpoint_load<M: DeserializeOwned>(path: &Path) -> Result<(ParamStore, M)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    checkpoint_read(&mut file)
}

/// Checks that a loaded store has exactly the parameter names and shapes of a
/// freshly initialized one; errors name the first offending tensor.
pub fn validate_against(loaded: &ParamStore, expected: &ParamStore) -> Result<()> {
    for (name, entry) in expected.iter() {
        match loaded.entry(name) {
            None => {
                return Err(Error::Checkpoint(format!(
                    "checkpoint is missing parameter `{name}`"
                )))
            }
            Some(got) if !got.value.same_shape(&entry.value) => {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for `{name}`: checkpoint {:?}, model {:?}",
                    got.value.shape(),
                    entry.value.shape()
                )))
            }
            Some(_) => {}
        }
    }
    for (name, _) in loaded.iter() {
        if expected.entry(name).is_none() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has unexpected parameter `{name}`"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_store() -> ParamStore {
        let mut store = ParamStore::new();
        store.insert(
            "layer.w0",
            Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 0.25, -1.0]).unwrap(),
        );
        store.insert("layer.b0", Tensor::from_vec(&[1, 3], vec![0.1, 0.2, 0.3]).unwrap());
        store.set_step(17);
        store
    }

    #[test]
    fn roundtrip_preserves_store_and_meta() {
        let store = sample_store();
        let meta = json!({"kind": "test", "dim": 3});
        let mut buf = Vec::new();
        checkpoint_write(&mut buf, &store, &meta).unwrap();
        let (loaded, meta2): (ParamStore, serde_json::Value) =
            checkpoint_read(&mut &buf[..]).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(meta2, meta);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let store = sample_store();
        let meta = json!({"seed": 7});
        let mut buf1 = Vec::new();
        checkpoint_write(&mut buf1, &store, &meta).unwrap();
        let (loaded, meta2): (ParamStore, serde_json::Value) =
            checkpoint_read(&mut &buf1[..]).unwrap();
        let mut buf2 = Vec::new();
        checkpoint_write(&mut buf2, &loaded, &meta2).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let store = sample_store();
        let mut buf = Vec::new();
        checkpoint_write(&mut buf, &store, &json!({})).unwrap();

        let mut corrupted = buf.clone();
        corrupted[0] = b'X';
        assert!(checkpoint_read::<serde_json::Value>(&mut &corrupted[..]).is_err());

        let mut wrong_version = buf.clone();
        wrong_version[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(checkpoint_read::<serde_json::Value>(&mut &wrong_version[..]).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let store = sample_store();
        let mut buf = Vec::new();
        checkpoint_write(&mut buf, &store, &json!({})).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(checkpoint_read::<serde_json::Value>(&mut &buf[..]).is_err());
    }

    #[test]
    fn validate_detects_missing_extra_and_mismatched() {
        let store = sample_store();
        assert!(validate_against(&store, &store).is_ok());

        let mut missing = ParamStore::new();
        missing.insert("layer.w0", Tensor::zeros(&[2, 3]));
        assert!(validate_against(&missing, &store).is_err());
        // extra param in loaded
        assert!(validate_against(&store, &missing).is_err());

        let mut wrong_shape = sample_store();
        wrong_shape.insert("layer.b0", Tensor::zeros(&[1, 4]));
        assert!(validate_against(&wrong_shape, &store).is_err());
    }

    #[test]
    fn adam_state_survives_roundtrip() {
        let mut store = sample_store();
        let grads: BTreeMap<String, Tensor> = store
            .iter()
            .map(|(n, e)| (n.clone(), Tensor::filled(e.value.shape(), 0.5)))
            .collect();
        store.adam_step(&grads, 0.01, 0.9, 0.999, 1e-8).unwrap();

        let mut buf = Vec::new();
        checkpoint_write(&mut buf, &store, &json!({})).unwrap();
        let (loaded, _): (ParamStore, serde_json::Value) =
            checkpoint_read(&mut &buf[..]).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(loaded.step(), store.step());
    }
}
