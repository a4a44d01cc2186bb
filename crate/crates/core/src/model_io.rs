//! On-disk format for trained generators.
//!
//! Layout:
//!
//! ```text
//! GENTUNE-MODEL 1\n
//! <header JSON, one line>\n
//! <param_count little-endian f64 values>
//! ```
//!
//! The header carries `format_version`, the family tag (`linear`, `mlp`,
//! `hypernet-mlp`, ...), `output_dim`, `param_count`, the training seed, a
//! caller-supplied config hash and a family-specific `spec` object. Values
//! are stored as raw IEEE-754 bits, so a round trip is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Family, GeneratorModel, InputSpec};

pub const MAGIC: &str = "GENTUNE-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    pub family: String,
    pub output_dim: usize,
    pub param_count: usize,
    pub seed: u64,
    pub config_hash: String,
    pub spec: serde_json::Value,
}

pub fn write_model<W: Write>(mut out: W, header: &ModelHeader, params: &[f64]) -> Result<()> {
    if header.param_count != params.len() {
        return Err(Error::DimensionMismatch {
            what: "serialized parameter count",
            expected: header.param_count,
            actual: params.len(),
        });
    }
    let json = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "{json}")?;
    for v in params {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<(ModelHeader, Vec<f64>)> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let expected = format!("{MAGIC} {FORMAT_VERSION}\n");
    if line != expected {
        return Err(Error::Format(format!(
            "bad model magic line {:?}",
            line.trim_end()
        )));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: ModelHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("model header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.param_count * 8 {
        return Err(Error::Format(format!(
            "expected {} parameter bytes, found {}",
            header.param_count * 8,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, params))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSpec {
    family: Family,
    input: InputSpec,
}

impl GeneratorModel {
    pub fn header(&self, seed: u64, config_hash: &str) -> Result<ModelHeader> {
        let spec = GeneratorSpec {
            family: self.family.clone(),
            input: self.input.clone(),
        };
        Ok(ModelHeader {
            format_version: FORMAT_VERSION,
            family: self.family.tag().to_string(),
            output_dim: self.output_dim,
            param_count: self.phi.len(),
            seed,
            config_hash: config_hash.to_string(),
            spec: serde_json::to_value(spec).map_err(|e| Error::Format(e.to_string()))?,
        })
    }

    pub fn write_to<W: Write>(&self, out: W, seed: u64, config_hash: &str) -> Result<()> {
        write_model(out, &self.header(seed, config_hash)?, &self.phi)
    }

    pub fn read_from<R: Read>(input: R) -> Result<(Self, ModelHeader)> {
        let (header, phi) = read_model(input)?;
        let spec: GeneratorSpec = serde_json::from_value(header.spec.clone())
            .map_err(|e| Error::Format(format!("generator spec: {e}")))?;
        if spec.family.tag() != header.family {
            return Err(Error::Format(format!(
                "family tag {} does not match spec {}",
                header.family,
                spec.family.tag()
            )));
        }
        let model = GeneratorModel {
            family: spec.family,
            input: spec.input,
            output_dim: header.output_dim,
            phi,
        };
        model.validate()?;
        Ok((model, header))
    }

    pub fn save(&self, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?), seed, config_hash)
    }

    pub fn load(path: &Path) -> Result<(Self, ModelHeader)> {
        Self::read_from(File::open(path)?)
    }
}
