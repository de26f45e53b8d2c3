//! Network checkpoints: one JSON header line followed by the parameters as
//! little-endian `f64`, layer by layer, weights row-major then bias.

use std::fs;
use std::path::Path;

use privfly_core::neural::{Activation, DenseNet};
use privfly_core::vime::VimeConfig;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Seed the network was initialized or trained from, when known.
    pub seed: Option<u64>,
}

pub fn encode_checkpoint(net: &DenseNet, seed: Option<u64>) -> Vec<u8> {
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        layer_dims: net.layer_dims(),
        activations: net.activations(),
        seed,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, DenseNet)> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let blob = &bytes[nl + 1..];
    if blob.len() % 8 != 0 {
        return Err(bad(format!("parameter blob of {} bytes is not a multiple of 8", blob.len())));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let net = DenseNet::from_params(&header.layer_dims, &header.activations, &params)
        .map_err(|e| bad(e.to_string()))?;
    Ok((header, net))
}

pub fn save_checkpoint(path: &Path, net: &DenseNet, seed: Option<u64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
    }
    fs::write(path, encode_checkpoint(net, seed)).map_err(Error::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, DenseNet)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_checkpoint(&bytes, path)
}

/// Sidecar written next to a pretrained encoder checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimeSidecar {
    pub p: f64,
    pub alpha: f64,
    pub latent_dim: usize,
    pub pretrain_seed: u64,
}

impl VimeSidecar {
    pub fn new(cfg: &VimeConfig) -> Self {
        Self {
            p: cfg.mask_prob,
            alpha: cfg.alpha,
            latent_dim: cfg.latent_dim(),
            pretrain_seed: cfg.seed,
        }
    }
}

/// `<stem>.ckpt` plus `<stem>.json`.
pub fn save_encoder(dir: &Path, stem: &str, encoder: &DenseNet, cfg: &VimeConfig) -> Result<()> {
    save_checkpoint(&dir.join(format!("{stem}.ckpt")), encoder, Some(cfg.seed))?;
    write_json(&dir.join(format!("{stem}.json")), &VimeSidecar::new(cfg))
}

pub fn load_encoder(dir: &Path, stem: &str) -> Result<(DenseNet, VimeSidecar)> {
    let (_, net) = load_checkpoint(&dir.join(format!("{stem}.ckpt")))?;
    let side: VimeSidecar = read_json(&dir.join(format!("{stem}.json")))?;
    if net.output_dim() != side.latent_dim {
        return Err(Error::Checkpoint {
            path: dir.join(format!("{stem}.json")),
            message: format!(
                "sidecar latent_dim {} does not match encoder output {}",
                side.latent_dim,
                net.output_dim()
            ),
        });
    }
    Ok((net, side))
}
