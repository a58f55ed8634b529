//! Checkpoint format: one line of JSON header, then the parameters as raw
//! little-endian `f64`s.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "nwos-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub architecture: Architecture,
    pub num_params: usize,
    pub seed: u64,
    pub step: u64,
    /// Problem the network was trained on, if any.
    #[serde(default)]
    pub problem: Option<String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &Network, seed: u64, step: u64, problem: Option<&str>) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        architecture: net.arch(),
        num_params: net.params().len(),
        seed,
        step,
        problem: problem.map(str::to_string),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(CheckpointHeader, Network)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format `{}`", header.format)));
    }
    if header.num_params != header.architecture.param_count() {
        return Err(Error::Checkpoint("parameter count disagrees with the architecture".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.num_params {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * header.num_params,
            bytes.len()
        )));
    }
    let params = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let net = Network::from_params(header.architecture, params)?;
    Ok((header, net))
}

pub fn save_checkpoint(path: &Path, net: &Network, seed: u64, step: u64, problem: Option<&str>) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), net, seed, step, problem)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Network)> {
    read_checkpoint(File::open(path)?)
}
