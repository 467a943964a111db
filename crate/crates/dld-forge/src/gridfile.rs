//! Binary grid files: little-endian 64-bit floats, row-major, u-plane then
//! v-plane, with a JSON sidecar carrying the configuration.
//!
//! The sidecar distinguishes "critical diameter never extracted" (key
//! absent) from "extracted, no separation" (explicit null).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{field_viscosity, FlowField};
use crate::geometry::DldParams;
use crate::walls::WallField;

/// Sidecar metadata for a stored field.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub f: f64,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "Re")]
    pub re: f64,
    pub res: usize,
    pub achieved_re: f64,
    /// Outer `None`: never extracted (key omitted). Inner `None`: extracted,
    /// no separation (explicit null).
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "present_key"
    )]
    pub d_c: Option<Option<f64>>,
}

/// Map an explicit `null` to `Some(None)` instead of collapsing to `None`.
fn present_key<'de, D>(de: D) -> std::result::Result<Option<Option<f64>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<f64>::deserialize(de).map(Some)
}

pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut p = data_path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

fn write_plane(out: &mut impl Write, plane: &Array2<f64>) -> Result<()> {
    for &value in plane.iter() {
        out.write_all(&value.to_le_bytes())?;
    }
    Ok(())
}

fn read_plane(input: &mut impl Read, res: usize) -> Result<Array2<f64>> {
    let mut buf = vec![0u8; res * res * 8];
    input.read_exact(&mut buf)?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((res, res), values)
        .map_err(|e| Error::Format {
            path: String::new(),
            reason: e.to_string(),
        })
}

/// Persist a field and its sidecar; `d_c` as in [`Sidecar::d_c`].
pub fn save_field(field: &FlowField, d_c: Option<Option<f64>>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_plane(&mut out, &field.u)?;
    write_plane(&mut out, &field.v)?;
    out.flush()?;
    let sidecar = Sidecar {
        f: field.params.f,
        n: field.params.n,
        re: field.params.re,
        res: field.res,
        achieved_re: field.achieved_re,
        d_c,
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Load a field; the viscosity is reconstructed from the deterministic
/// viscosity rule, matching what the solver used.
pub fn load_field(path: &Path) -> Result<(FlowField, Sidecar)> {
    let json = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: Sidecar = serde_json::from_str(&json)?;
    let params = DldParams::new(sidecar.f, sidecar.n, sidecar.re)?;
    let mut input = BufReader::new(File::open(path)?);
    let u = read_plane(&mut input, sidecar.res).map_err(|e| annotate(e, path))?;
    let v = read_plane(&mut input, sidecar.res).map_err(|e| annotate(e, path))?;
    let field = FlowField {
        u,
        v,
        params,
        res: sidecar.res,
        achieved_re: sidecar.achieved_re,
        viscosity: field_viscosity(sidecar.f, sidecar.re, sidecar.res),
    };
    Ok((field, sidecar))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    }
}

/// Debug dump of a wall distance plane in the same grid format.
pub fn save_wall_plane(wf: &WallField, params: &DldParams, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_plane(&mut out, &wf.dist)?;
    out.flush()?;
    let sidecar = Sidecar {
        f: params.f,
        n: params.n,
        re: params.re,
        res: wf.res,
        achieved_re: 0.0,
        d_c: None,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
