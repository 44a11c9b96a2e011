//! Binary parameter files.
//!
//! Layout: 8-byte magic, u32 format version, u32 header length, a JSON
//! header, the f64 little-endian payload in tensor order, and a trailing
//! 32-byte SHA-256 of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyParams, TENSOR_NAMES};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AIRCTLPP";
pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFileHeader {
    pub scenario: String,
    pub scenario_hash: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: usize,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_params(path: &Path, params: &PolicyParams, scenario: &str, scenario_hash: &str) -> Result<()> {
    let header = ParamFileHeader {
        scenario: scenario.to_string(),
        scenario_hash: scenario_hash.to_string(),
        obs_dim: params.obs_dim(),
        act_dim: params.act_dim(),
        hidden: params.hidden(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(params.shapes())
            .map(|(name, shape)| TensorEntry { name: name.to_string(), shape })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut payload = Vec::with_capacity(params.num_params() * 8);
    for slice in params.slices() {
        for v in slice {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut bytes = Vec::with_capacity(16 + header_json.len() + payload.len() + 32);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&PARAM_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(&Sha256::digest(&payload));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Loads a parameter file. When `expected_hash` is given the file must have
/// been written for that scenario; `expected_dims` checks `(obs_dim, act_dim)`.
pub fn load_params(
    path: &Path,
    expected_hash: Option<&str>,
    expected_dims: Option<(usize, usize)>,
) -> Result<(PolicyParams, ParamFileHeader)> {
    let bad = |message: String| Error::ParamFile { path: path.to_path_buf(), message };
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a parameter file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != PARAM_FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end {
        return Err(bad("truncated header".into()));
    }
    let header: ParamFileHeader =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| bad(format!("corrupt header: {e}")))?;

    if let Some(hash) = expected_hash {
        if header.scenario_hash != hash {
            return Err(bad(format!(
                "written for scenario '{}' with hash {}, expected hash {hash}",
                header.scenario, header.scenario_hash
            )));
        }
    }
    if let Some((obs, act)) = expected_dims {
        if header.obs_dim != obs || header.act_dim != act {
            return Err(bad(format!(
                "network expects {} inputs and {} outputs, scenario needs {obs} and {act}",
                header.obs_dim, header.act_dim
            )));
        }
    }

    let mut params = PolicyParams::zeros(header.obs_dim, header.act_dim, header.hidden);
    let shapes = params.shapes();
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(bad(format!("expected {} tensors, found {}", TENSOR_NAMES.len(), header.tensors.len())));
    }
    for ((entry, name), shape) in header.tensors.iter().zip(TENSOR_NAMES).zip(&shapes) {
        if entry.name != name || &entry.shape != shape {
            return Err(bad(format!("tensor '{}' {:?} does not match '{name}' {shape:?}", entry.name, entry.shape)));
        }
    }

    let payload_len = params.num_params() * 8;
    let expected_len = header_end + payload_len + 32;
    if bytes.len() != expected_len {
        return Err(bad(format!("expected {expected_len} bytes, found {} (truncated or padded)", bytes.len())));
    }
    let payload = &bytes[header_end..header_end + payload_len];
    if Sha256::digest(payload).as_slice() != &bytes[header_end + payload_len..] {
        return Err(bad("payload checksum mismatch".into()));
    }
    let mut chunks = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for slice in params.slices_mut() {
        for v in slice.iter_mut() {
            *v = chunks.next().expect("length checked");
        }
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter values".into()));
    }
    Ok((params, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> PolicyParams {
        PolicyParams::init(6, 2, 16, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = sample();
        save_params(&path, &p, "1C1F", "abc").unwrap();
        let (q, header) = load_params(&path, Some("abc"), Some((6, 2))).unwrap();
        assert_eq!(p, q);
        assert_eq!(header.scenario, "1C1F");
        assert_eq!(header.hidden, 16);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &sample(), "s", "h").unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_params(&path, None, None), Err(Error::ParamFile { .. })));
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_params(&path, None, None), Err(Error::ParamFile { .. })));
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &sample(), "s", "h").unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 40] ^= 0x55;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_params(&path, None, None), Err(Error::ParamFile { .. })));
    }

    #[test]
    fn scenario_and_shape_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &sample(), "s", "h").unwrap();
        assert!(matches!(load_params(&path, Some("other"), None), Err(Error::ParamFile { .. })));
        assert!(matches!(load_params(&path, None, Some((7, 2))), Err(Error::ParamFile { .. })));
        let err = load_params(&path, None, Some((6, 3))).unwrap_err();
        assert!(err.is_config());
    }
}
