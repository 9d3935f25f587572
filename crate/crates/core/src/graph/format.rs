//! Reading and writing the `.mlg` / `.mlw` file pair.
//!
//! Weights blob layout, all integers little-endian:
//!
//! ```text
//! magic "MLW0" | u32 entry count
//! per entry: u32 key | u8 dtype code | u8 rank | rank x u32 dims | u64 byte length | raw data
//! ```
//!
//! Entries are written in ascending key order and the graph JSON uses
//! lexicographic key order, so saving a loaded bundle reproduces its bytes.

use std::fs;
use std::path::Path;

use super::{
    validate, ComputationalGraph, DataType, GraphError, ModelBundle, Result, WeightEntry, WeightStore, FORMAT_VERSION,
};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MLW0";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_graph(text: &[u8]) -> Result<ComputationalGraph> {
    let value: serde_json::Value = serde_json::from_slice(text)?;
    if let Some(found) = value.get("version").and_then(|v| v.as_u64()) {
        if found != FORMAT_VERSION as u64 {
            return Err(GraphError::VersionMismatch {
                expected: FORMAT_VERSION,
                found: found as u32,
            });
        }
    }
    Ok(serde_json::from_value(value)?)
}

/// Canonical JSON text of a graph: sorted keys, two-space indent, trailing newline.
pub fn graph_to_json(graph: &ComputationalGraph) -> String {
    // Value's map is ordered, which gives lexicographic keys at every level.
    let value = serde_json::to_value(graph).expect("graph serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(GraphError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(GraphError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(b);
        Ok(u64::from_le_bytes(buf))
    }
}

pub fn parse_weights(bytes: &[u8]) -> Result<WeightStore> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(GraphError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let count = r.u32()?;
    let mut store = WeightStore::default();
    for _ in 0..count {
        let key = r.u32()?;
        let code = r.u8()?;
        let dtype = DataType::from_code(code)
            .ok_or_else(|| GraphError::MalformedWeights(format!("unknown dtype code {code}")))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let len = r.u64()?;
        let len = usize::try_from(len).map_err(|_| GraphError::Truncated)?;
        let data = r.take(len)?.to_vec();
        let expected = shape.iter().product::<usize>() * dtype.byte_width();
        if data.len() != expected {
            return Err(GraphError::MalformedWeights(format!(
                "entry {key}: byte length {} does not match {expected} for shape {shape:?}",
                data.len()
            )));
        }
        if store.entries.contains_key(&key) {
            return Err(GraphError::MalformedWeights(format!("duplicate key {key}")));
        }
        store.insert(key, WeightEntry { dtype, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(GraphError::MalformedWeights(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(store)
}

pub fn weights_to_bytes(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(store.entries.len() as u32).to_le_bytes());
    for (key, entry) in &store.entries {
        out.extend_from_slice(&key.to_le_bytes());
        out.push(entry.dtype.code());
        out.push(entry.shape.len() as u8);
        for &d in &entry.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(entry.data.len() as u64).to_le_bytes());
        out.extend_from_slice(&entry.data);
    }
    out
}

pub fn parse_bundle(graph_text: &[u8], weight_bytes: &[u8]) -> Result<ModelBundle> {
    let bundle = ModelBundle {
        graph: parse_graph(graph_text)?,
        weights: parse_weights(weight_bytes)?,
    };
    let report = validate(&bundle);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report));
    }
    Ok(bundle)
}

pub fn load_bundle(graph_path: impl AsRef<Path>, weights_path: impl AsRef<Path>) -> Result<ModelBundle> {
    let graph_text = read_file(graph_path.as_ref())?;
    let weight_bytes = read_file(weights_path.as_ref())?;
    parse_bundle(&graph_text, &weight_bytes)
}

pub fn save_bundle(bundle: &ModelBundle, graph_path: impl AsRef<Path>, weights_path: impl AsRef<Path>) -> Result<()> {
    let report = validate(bundle);
    if !report.is_valid() {
        return Err(GraphError::Invalid(report));
    }
    write_file(graph_path.as_ref(), graph_to_json(&bundle.graph).as_bytes())?;
    write_file(weights_path.as_ref(), &weights_to_bytes(&bundle.weights))
}
