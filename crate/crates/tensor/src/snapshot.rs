//! Parameter snapshot files.
//!
//! Layout: the magic line `HNAM`, one line of JSON manifest, then the raw
//! little-endian `f64` payload. Manifest offsets are byte offsets into the
//! payload.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &str = "HNAM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub root_seed: u64,
    pub config_hash: String,
    /// Caller-defined metadata (architecture config, covariate specs, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

pub fn write<W: Write>(
    mut out: W,
    store: &ParamStore,
    root_seed: u64,
    config_hash: &str,
    metadata: serde_json::Value,
) -> Result<()> {
    let mut offset = 0u64;
    let params = store
        .iter()
        .map(|(_, p)| {
            let entry = ParamEntry {
                name: p.name.clone(),
                shape: p.value().shape().to_vec(),
                offset,
            };
            offset += 8 * p.value().numel() as u64;
            entry
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        root_seed,
        config_hash: config_hash.to_string(),
        metadata,
        params,
    };
    let json =
        serde_json::to_string(&manifest).map_err(|e| TensorError::Snapshot(e.to_string()))?;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{json}")?;
    let mut buf = Vec::with_capacity(offset as usize);
    for (_, p) in store.iter() {
        for v in p.value().data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(input: R) -> Result<(Manifest, ParamStore)> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(TensorError::Snapshot(format!(
            "bad magic {:?}",
            line.trim_end()
        )));
    }
    line.clear();
    reader.read_line(&mut line)?;
    let manifest: Manifest =
        serde_json::from_str(line.trim_end()).map_err(|e| TensorError::Snapshot(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TensorError::Snapshot(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + 8 * n;
        let bytes = payload.get(start..end).ok_or_else(|| {
            TensorError::Snapshot(format!("payload truncated at `{}`", entry.name))
        })?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
    }
    Ok((manifest, store))
}

pub fn save(
    path: impl AsRef<Path>,
    store: &ParamStore,
    root_seed: u64,
    config_hash: &str,
    metadata: serde_json::Value,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w, store, root_seed, config_hash, metadata)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(Manifest, ParamStore)> {
    read(std::fs::File::open(path)?)
}
