//! JSON kernel files.
//!
//! Discrete kernels are stored as `{"p": [...], "q": [...], "r": [...],
//! "values": [[[...]]]}`; step-function kernels replace the marginals with
//! `"x_cuts"`, `"y_cuts"`, `"z_cuts"`. An optional `"schema_version"` field is
//! written on output and checked on input.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DiscreteKernel, PiecewiseKernel};
use crate::error::{Error, Result};

pub const KERNEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub x_cuts: Vec<f64>,
    pub y_cuts: Vec<f64>,
    pub z_cuts: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Either kind of kernel file, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelDocument {
    Discrete(DiscreteKernel),
    Piecewise(PiecewiseKernel),
}

impl KernelDocument {
    /// Parses either file kind; the presence of `"x_cuts"` selects the
    /// step-function form.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let is_piecewise = raw.get("x_cuts").is_some();
        if is_piecewise {
            let file: PiecewiseFile = serde_json::from_str(text)?;
            check_version(file.schema_version)?;
            let [nx, ny, nz] = [file.x_cuts.len(), file.y_cuts.len(), file.z_cuts.len()]
                .map(|n| n.saturating_sub(1));
            let values = flatten("values", &file.values, nx, ny, nz)?;
            Ok(KernelDocument::Piecewise(PiecewiseKernel::new(
                file.x_cuts,
                file.y_cuts,
                file.z_cuts,
                values,
            )?))
        } else {
            Ok(KernelDocument::Discrete(DiscreteKernel::from_json_str(text)?))
        }
    }

    /// The discrete form, converting a step function if needed.
    pub fn into_discrete(self) -> Result<DiscreteKernel> {
        match self {
            KernelDocument::Discrete(k) => Ok(k),
            KernelDocument::Piecewise(pk) => pk.to_discrete(),
        }
    }
}

fn check_version(v: Option<u32>) -> Result<()> {
    match v {
        Some(v) if v != KERNEL_SCHEMA_VERSION => Err(Error::Parse(format!(
            "unsupported schema_version {v} (expected {KERNEL_SCHEMA_VERSION})"
        ))),
        _ => Ok(()),
    }
}

fn flatten(field: &str, nested: &[Vec<Vec<f64>>], nx: usize, ny: usize, nz: usize) -> Result<Vec<f64>> {
    if nested.len() != nx {
        return Err(Error::Validation(format!("{field} has {} planes, expected {nx}", nested.len())));
    }
    let mut out = Vec::with_capacity(nx * ny * nz);
    for (i, plane) in nested.iter().enumerate() {
        if plane.len() != ny {
            return Err(Error::Validation(format!("{field}[{i}] has {} rows, expected {ny}", plane.len())));
        }
        for (j, row) in plane.iter().enumerate() {
            if row.len() != nz {
                return Err(Error::Validation(format!(
                    "{field}[{i}][{j}] has {} entries, expected {nz}",
                    row.len()
                )));
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

fn nest(values: &[f64], [_, ny, nz]: [usize; 3]) -> Vec<Vec<Vec<f64>>> {
    values
        .chunks(ny * nz)
        .map(|plane| plane.chunks(nz).map(<[f64]>::to_vec).collect())
        .collect()
}

impl DiscreteKernel {
    pub fn to_file(&self) -> KernelFile {
        KernelFile {
            schema_version: Some(KERNEL_SCHEMA_VERSION),
            p: self.p.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            values: self.to_nested(),
        }
    }

    pub fn from_file(file: KernelFile) -> Result<Self> {
        check_version(file.schema_version)?;
        DiscreteKernel::from_nested(file.p, file.q, file.r, &file.values)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: KernelFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("kernel serialization cannot fail")
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_string(&self.to_file()).expect("kernel serialization cannot fail");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}

impl PiecewiseKernel {
    pub fn to_file(&self) -> PiecewiseFile {
        PiecewiseFile {
            schema_version: Some(KERNEL_SCHEMA_VERSION),
            x_cuts: self.x_cuts.clone(),
            y_cuts: self.y_cuts.clone(),
            z_cuts: self.z_cuts.clone(),
            values: nest(&self.values, self.shape()),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("kernel serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_discrete_and_piecewise() {
        let text = r#"{"p":[0.5,0.5],"q":[0.5,0.5],"r":[0.5,0.5],
            "values":[[[0,1],[1,1]],[[1,1],[1,0]]]}"#;
        let doc = KernelDocument::from_json_str(text).unwrap();
        assert_eq!(doc, KernelDocument::Discrete(DiscreteKernel::diagonal_gap()));

        let text = r#"{"x_cuts":[0,0.5,1],"y_cuts":[0,0.5,1],"z_cuts":[0,0.5,1],
            "values":[[[0,1],[1,1]],[[1,1],[1,0]]]}"#;
        let k = KernelDocument::from_json_str(text).unwrap().into_discrete().unwrap();
        assert_eq!(k, DiscreteKernel::diagonal_gap());
    }

    #[test]
    fn json_round_trip() {
        let g = DiscreteKernel::diagonal_gap().tensor_power(2).unwrap();
        let back = DiscreteKernel::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(back, g);
        let pk = g.to_piecewise();
        let doc = KernelDocument::from_json_str(&pk.to_json_string()).unwrap();
        assert_eq!(doc, KernelDocument::Piecewise(pk));
    }

    #[test]
    fn reports_bad_input() {
        assert!(matches!(DiscreteKernel::from_json_str("{\"p\": [1.0], "), Err(Error::Json(_))));
        let bad_sum = r#"{"p":[0.5,0.4],"q":[1],"r":[1],"values":[[[0]],[[0]]]}"#;
        match DiscreteKernel::from_json_str(bad_sum) {
            Err(Error::Validation(msg)) => assert!(msg.contains("marginal p")),
            other => panic!("{other:?}"),
        }
        let ragged = r#"{"p":[1],"q":[1],"r":[0.5,0.5],"values":[[[0]]]}"#;
        assert!(matches!(DiscreteKernel::from_json_str(ragged), Err(Error::Validation(_))));
        let version = r#"{"schema_version":9,"p":[1],"q":[1],"r":[1],"values":[[[0]]]}"#;
        assert!(matches!(DiscreteKernel::from_json_str(version), Err(Error::Parse(_))));
    }

    #[test]
    fn hash_is_stable() {
        let g = DiscreteKernel::diagonal_gap();
        assert_eq!(g.content_hash(), DiscreteKernel::diagonal_gap().content_hash());
        assert_ne!(g.content_hash(), g.scale(0.5).unwrap().content_hash());
        assert_eq!(g.content_hash().len(), 64);
    }
}
