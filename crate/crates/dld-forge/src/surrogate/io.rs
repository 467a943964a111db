//! Model files: a JSON header with the layer descriptors, normalization and
//! training metadata, followed by the weight payload as little-endian
//! 64-bit floats in canonical tensor order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::direct::fcnn_build;
use super::field::cnn_build;
use super::{DirectNet, FieldNet, InputNorm, TrainMeta};

const MAGIC: &[u8; 7] = b"DLDNN1\n";

/// Either trained network.
#[derive(Debug, Clone)]
pub enum NetModel {
    Direct(DirectNet),
    Field(FieldNet),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    res: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_filters: Option<usize>,
    /// Tensor lengths in payload order, a layout checksum.
    tensor_lens: Vec<usize>,
    norm: InputNorm,
    meta: TrainMeta,
}

pub fn save_model(model: &NetModel, path: &Path) -> Result<()> {
    let (header, tensors) = match model {
        NetModel::Direct(net) => {
            let tensors = net.tensors();
            let hidden_layers = net.layers.len() - 1;
            let width = net.layers[0].out_w;
            (
                Header {
                    kind: "direct".into(),
                    hidden_layers: Some(hidden_layers),
                    width: Some(width),
                    res: None,
                    base_filters: None,
                    tensor_lens: tensors.iter().map(|t| t.data.len()).collect(),
                    norm: net.norm.clone(),
                    meta: net.meta.clone(),
                },
                tensors,
            )
        }
        NetModel::Field(net) => {
            let tensors = net.tensors();
            (
                Header {
                    kind: "field".into(),
                    hidden_layers: None,
                    width: None,
                    res: Some(net.res),
                    base_filters: Some(net.base_filters),
                    tensor_lens: tensors.iter().map(|t| t.data.len()).collect(),
                    norm: net.norm.clone(),
                    meta: net.meta.clone(),
                },
                tensors,
            )
        }
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header_json.len() as u64).to_le_bytes())?;
    out.write_all(&header_json)?;
    for tensor in tensors {
        for &w in &tensor.data {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NetModel> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 7];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: "bad magic".into(),
        });
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    input.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)?;

    let mut model = match header.kind.as_str() {
        "direct" => NetModel::Direct(fcnn_build(
            header.hidden_layers.ok_or_else(|| bad(path, "missing hidden_layers"))?,
            header.width.ok_or_else(|| bad(path, "missing width"))?,
        )?),
        "field" => NetModel::Field(cnn_build(
            header.res.ok_or_else(|| bad(path, "missing res"))?,
            header.base_filters.ok_or_else(|| bad(path, "missing base_filters"))?,
        )?),
        other => return Err(bad(path, &format!("unknown kind {other}"))),
    };

    {
        let tensors = match &mut model {
            NetModel::Direct(net) => net.tensors_mut(),
            NetModel::Field(net) => net.tensors_mut(),
        };
        if header.tensor_lens.len() != tensors.len() {
            return Err(bad(path, "tensor count mismatch"));
        }
        for (tensor, &expect) in tensors.into_iter().zip(&header.tensor_lens) {
            if tensor.data.len() != expect {
                return Err(bad(path, "tensor length mismatch"));
            }
            let mut buf = vec![0u8; expect * 8];
            input.read_exact(&mut buf)?;
            for (slot, chunk) in tensor.data.iter_mut().zip(buf.chunks_exact(8)) {
                *slot = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
    }
    match &mut model {
        NetModel::Direct(net) => {
            net.norm = header.norm;
            net.meta = header.meta;
        }
        NetModel::Field(net) => {
            net.norm = header.norm;
            net.meta = header.meta;
        }
    }
    Ok(model)
}

fn bad(path: &Path, reason: &str) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}
