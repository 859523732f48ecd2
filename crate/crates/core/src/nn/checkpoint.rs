//! Self-describing binary checkpoints.
//!
//! Layout: the magic bytes `VRFAMCKP`, a little-endian `u32` format version,
//! a `u64` header length, a JSON header, then every tensor listed in the
//! header as consecutive little-endian `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, GraphSpec};
use super::layers::Layer;
use super::tensor::{Precision, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VRFAMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRecord {
    pub node: usize,
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    graph: GraphSpec,
    precision: Precision,
    tensors: Vec<TensorRecord>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Serializes parameters and running statistics with caller metadata.
pub fn to_bytes<T: Real>(graph: &Graph<T>, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (i, layer) in graph.layers().iter().enumerate() {
        let named = layer.param_names().iter().zip(layer.params()).chain(layer.state_names().iter().zip(layer.state()));
        for (name, t) in named {
            tensors.push(TensorRecord { node: i, name: (*name).to_string(), shape: t.shape().to_vec() });
            for v in t.data() {
                payload.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    let header = Header { graph: graph.spec().clone(), precision: T::PRECISION, tensors, meta: meta.clone() };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

/// Reads the precision a checkpoint was written with, without loading it.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    Ok(parse_header(bytes)?.0.precision)
}

fn parse_header(mut bytes: &[u8]) -> Result<(Header, &[u8])> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let json = take(&mut bytes, len as usize, "header")?;
    let header: Header = serde_json::from_slice(json)?;
    Ok((header, bytes))
}

/// Rebuilds a graph and returns it with the stored metadata.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<(Graph<T>, serde_json::Value)> {
    let (header, mut payload) = parse_header(bytes)?;
    // initial values are overwritten below; the RNG only has to exist
    let mut rng = crate::seed::rng_from_seed(0);
    let mut layers: Vec<Layer<T>> = header.graph.nodes.iter().map(|n| Layer::new(&n.layer, &mut rng)).collect();
    let mut seen = vec![0usize; layers.len()];
    for rec in &header.tensors {
        let layer = layers
            .get_mut(rec.node)
            .ok_or_else(|| Error::Checkpoint(format!("tensor for missing node {}", rec.node)))?;
        let n: usize = rec.shape.iter().product();
        let raw = take(&mut payload, n * 8, "payload")?;
        let values: Vec<T> = raw
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        let param_idx = layer.param_names().iter().position(|&p| p == rec.name);
        let state_idx = layer.state_names().iter().position(|&p| p == rec.name);
        let slot = match (param_idx, state_idx) {
            (Some(i), _) => layer.params_mut().into_iter().nth(i),
            (None, Some(i)) => layer.state_mut().into_iter().nth(i),
            _ => None,
        }
        .ok_or_else(|| Error::Checkpoint(format!("node {} has no tensor {:?}", rec.node, rec.name)))?;
        if slot.shape() != rec.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "node {} {}: shape {:?}, expected {:?}",
                rec.node,
                rec.name,
                rec.shape,
                slot.shape()
            )));
        }
        *slot = Tensor::from_vec(rec.shape.clone(), values)?;
        seen[rec.node] += 1;
    }
    for (i, layer) in layers.iter().enumerate() {
        if seen[i] != layer.param_names().len() + layer.state_names().len() {
            return Err(Error::Checkpoint(format!("node {i} is missing tensors")));
        }
    }
    if !payload.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload.len())));
    }
    Ok((Graph::from_parts(header.graph, layers)?, header.meta))
}

pub fn save<T: Real>(graph: &Graph<T>, meta: &serde_json::Value, path: &Path) -> Result<()> {
    let bytes = to_bytes(graph, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<(Graph<T>, serde_json::Value)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
