use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::state::{PiTable, VariationalState};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Tables {
    iteration: usize,
    eta: Vec<f64>,
    pi: PiTable,
}

/// Paths of the `ξ` binary and the `η`/`π` JSON for one iteration.
pub fn checkpoint_paths(dir: &Path, iteration: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("xi_{iteration:06}.bin")),
        dir.join(format!("tables_{iteration:06}.json")),
    )
}

/// Writes `ξ` as three little-endian `u64` header fields `n, K, iteration`
/// followed by row-major little-endian `f64`, and `η`, `π` as JSON.
pub fn write_checkpoint(dir: &Path, state: &VariationalState) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let (xi_path, json_path) = checkpoint_paths(dir, state.iteration);
    let mut w = BufWriter::new(File::create(&xi_path)?);
    for h in [state.n(), state.k(), state.iteration] {
        w.write_all(&(h as u64).to_le_bytes())?;
    }
    for v in state.xi.as_standard_layout().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let tables = Tables {
        iteration: state.iteration,
        eta: state.eta.clone(),
        pi: state.pi.clone(),
    };
    serde_json::to_writer(BufWriter::new(File::create(&json_path)?), &tables)?;
    Ok((xi_path, json_path))
}

/// Reads `ξ` and its header.
pub fn read_xi(path: &Path) -> Result<(Array2<f64>, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word) as usize;
    }
    let [n, k, iteration] = header;
    let mut data = Vec::with_capacity(n.saturating_mul(k));
    for _ in 0..n * k {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::InvalidInput(format!(
            "{}: trailing bytes after {n}×{k} matrix",
            path.display()
        )));
    }
    let xi =
        Array2::from_shape_vec((n, k), data).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((xi, iteration))
}

pub fn read_checkpoint(dir: &Path, iteration: usize) -> Result<VariationalState> {
    let (xi_path, json_path) = checkpoint_paths(dir, iteration);
    let (xi, it) = read_xi(&xi_path)?;
    let tables: Tables = serde_json::from_reader(BufReader::new(File::open(json_path)?))?;
    if it != tables.iteration {
        return Err(Error::InvalidInput(format!(
            "checkpoint iterations disagree: {it} vs {}",
            tables.iteration
        )));
    }
    let state = VariationalState {
        xi,
        eta: tables.eta,
        pi: tables.pi,
        iteration: it,
        trace: Vec::new(),
    };
    state.validate()?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let state = VariationalState {
            xi: VariationalState::smoothed_one_hot(&[0, 1, 1], 2, 0.1),
            eta: vec![0.4, 0.6],
            pi: PiTable::constant(2, 1, 0.25),
            iteration: 7,
            trace: vec![],
        };
        write_checkpoint(dir.path(), &state).unwrap();
        let back = read_checkpoint(dir.path(), 7).unwrap();
        assert_eq!(back.xi, state.xi);
        assert_eq!(back.eta, state.eta);
        assert_eq!(back.pi, state.pi);
        let raw = std::fs::read(checkpoint_paths(dir.path(), 7).0).unwrap();
        assert_eq!(raw.len(), 24 + 6 * 8);
        assert_eq!(&raw[..8], &3u64.to_le_bytes());
    }
}
