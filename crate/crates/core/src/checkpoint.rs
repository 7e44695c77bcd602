//! Versioned JSON checkpoints. Floating-point payloads are stored as
//! base64 of little-endian `f64` bytes so they restore bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncoderState;
use crate::lif::LifLayerState;
use crate::network::{Network, NetworkConfig, NetworkError, WeightMatrix};

pub const CHECKPOINT_FORMAT: &str = "vacuum-spiker-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint (format `{0}`)")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("bad payload `{field}`: {reason}")]
    Payload { field: &'static str, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn encode_f64s(xs: &[f64]) -> String {
    let bytes: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f64s(field: &'static str, s: &str) -> Result<Vec<f64>, CheckpointError> {
    let bad = |reason: String| CheckpointError::Payload { field, reason };
    let bytes = STANDARD.decode(s).map_err(|e| bad(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(bad(format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl MatrixPayload {
    fn of(w: &WeightMatrix) -> Self {
        Self {
            rows: w.rows(),
            cols: w.cols(),
            data: encode_f64s(w.as_slice()),
        }
    }

    fn restore(&self, field: &'static str) -> Result<WeightMatrix, CheckpointError> {
        let data = decode_f64s(field, &self.data)?;
        let len = data.len();
        WeightMatrix::from_vec(self.rows, self.cols, data).ok_or(CheckpointError::Payload {
            field,
            reason: format!("{len} values for a {}x{} matrix", self.rows, self.cols),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPayload {
    pub voltages: String,
    pub refractory_remaining: Vec<u32>,
    pub spiked_last_step: Vec<bool>,
}

/// On-disk form of a [`Network`].
///
/// New forward rows are drawn from a generator keyed by seed and row index,
/// so the config and the row count fully determine future growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    pub encoder: EncoderState,
    pub forward_weights: MatrixPayload,
    pub recurrent_weights: Option<MatrixPayload>,
    pub layer: LayerPayload,
    pub previous_spikes: Vec<bool>,
    pub step_counter: u64,
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        let layer = net.layer();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            network: net.config().clone(),
            encoder: net.encoder().clone(),
            forward_weights: MatrixPayload::of(net.forward_weights()),
            recurrent_weights: net.recurrent_weights().map(MatrixPayload::of),
            layer: LayerPayload {
                voltages: encode_f64s(&layer.voltages),
                refractory_remaining: layer.refractory_remaining.clone(),
                spiked_last_step: layer.spiked_last_step.clone(),
            },
            previous_spikes: net.previous_spikes().to_vec(),
            step_counter: net.step_counter(),
        }
    }

    pub fn into_network(self) -> Result<Network, CheckpointError> {
        self.check_header()?;
        let w_ir = self.forward_weights.restore("forward_weights")?;
        let w_rr = match &self.recurrent_weights {
            Some(p) => Some(p.restore("recurrent_weights")?),
            None => None,
        };
        let layer = LifLayerState {
            voltages: decode_f64s("layer.voltages", &self.layer.voltages)?,
            refractory_remaining: self.layer.refractory_remaining,
            spiked_last_step: self.layer.spiked_last_step,
        };
        if layer.refractory_remaining.len() != layer.voltages.len()
            || layer.spiked_last_step.len() != layer.voltages.len()
        {
            return Err(CheckpointError::Payload {
                field: "layer",
                reason: "state vectors differ in length".into(),
            });
        }
        Ok(Network::from_parts(
            self.network,
            self.encoder,
            w_ir,
            w_rr,
            layer,
            self.previous_spikes,
            self.step_counter,
        )?)
    }

    fn check_header(&self) -> Result<(), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(self.format.clone()));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(net: &Network, writer: W) -> Result<(), CheckpointError> {
    serde_json::to_writer_pretty(writer, &Checkpoint::from_network(net))?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<Network, CheckpointError> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    // check the header before the body so a version bump reports as such
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or_default();
    if format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(format.to_string()));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let cp: Checkpoint = serde_json::from_value(value)?;
    cp.into_network()
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Interval;
    use crate::stdp::{train_values, StdpParams};

    fn trained(recurrent: bool) -> Network {
        let enc = EncoderState::new(Interval::new(0.0, 10.0), 0.1, None).unwrap();
        let cfg = NetworkConfig { n_r: 12, recurrent, seed: 3, ..Default::default() };
        let mut net = Network::build(cfg, enc).unwrap();
        let values: Vec<f64> = (0..200).map(|i| 5.0 + 4.0 * (i as f64 * 0.3).sin()).collect();
        let rec = recurrent.then(|| StdpParams::new(-0.1, -0.1));
        train_values(&mut net, &values, StdpParams::new(0.1, 0.1), rec, 2).unwrap();
        net
    }

    #[test]
    fn round_trip_resumes_bit_exactly() {
        for recurrent in [false, true] {
            let mut a = trained(recurrent);
            for v in [1.0, 2.0, 9.5] {
                a.infer_step(v, 0.0).unwrap();
            }
            let mut buf = Vec::new();
            write_checkpoint(&a, &mut buf).unwrap();
            let mut b = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(a.forward_weights(), b.forward_weights());
            assert_eq!(a.recurrent_weights(), b.recurrent_weights());
            assert_eq!(a.layer(), b.layer());
            // values outside the domain force growth on both sides
            for v in [3.3, -4.0, 14.0, 7.7, -6.5, 0.2] {
                assert_eq!(a.infer_step(v, 0.0).unwrap(), b.infer_step(v, 0.0).unwrap());
            }
            assert_eq!(a.forward_weights(), b.forward_weights());
            assert_eq!(a.encoder(), b.encoder());
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut cp = Checkpoint::from_network(&trained(false));
        cp.version = 99;
        let json = serde_json::to_vec(&cp).unwrap();
        assert!(matches!(
            read_checkpoint(json.as_slice()),
            Err(CheckpointError::Version { found: 99, expected: 1 })
        ));
        let mut cp = Checkpoint::from_network(&trained(false));
        cp.format = "other".into();
        assert!(matches!(cp.into_network(), Err(CheckpointError::Format(_))));
    }

    #[test]
    fn corrupt_payload_rejected() {
        let mut cp = Checkpoint::from_network(&trained(false));
        cp.forward_weights.rows += 1;
        assert!(matches!(cp.into_network(), Err(CheckpointError::Payload { .. })));
        let mut cp = Checkpoint::from_network(&trained(false));
        cp.layer.voltages = "!!".into();
        assert!(matches!(cp.into_network(), Err(CheckpointError::Payload { .. })));
    }

    #[test]
    fn payload_is_little_endian() {
        let s = encode_f64s(&[1.0]);
        assert_eq!(STANDARD.decode(&s).unwrap(), 1.0f64.to_le_bytes().to_vec());
        assert_eq!(decode_f64s("x", &s).unwrap(), vec![1.0]);
    }
}
