//! Versioned binary checkpoint container.
//!
//! Byte layout, in order:
//!
//! ```text
//! magic      4 bytes   b"SBCK"
//! version    u32 LE    currently 1
//! header_len u64 LE    byte length of the JSON header
//! header     JSON      config echo, training config, history, best epoch,
//!                      optimizer step count, and the array manifest
//!                      (name + shape per array, in storage order)
//! payload    f64 LE    every array's elements back to back, row-major,
//!                      in manifest order
//! ```
//!
//! The payload stores raw IEEE-754 bits, so save/load round trips are
//! exact. Array order is: trainable parameters in canonical order, then
//! batch-norm running statistics, then (when optimizer state is saved) the
//! Adam first and second moments over the trainable order again.

use std::io::{Read, Write};
use std::path::Path;

use super::adam::AdamState;
use super::train::{EpochStats, TrainConfig};
use super::{build_unet, UNetConfig, UNetParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SBCK";
const VERSION: u32 = 1;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct Header {
    unet: UNetConfig,
    train: Option<TrainConfig>,
    history: Vec<EpochStats>,
    best_epoch: usize,
    adam_step: Option<u64>,
    arrays: Vec<ArrayInfo>,
}

/// A checkpoint's full contents.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: UNetParams,
    pub train_config: Option<TrainConfig>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub adam: Option<AdamState>,
}

fn array_manifest(params: &UNetParams, with_adam: bool) -> Vec<ArrayInfo> {
    let mut arrays = Vec::new();
    let trainable = params.trainable_slices();
    for (i, s) in trainable.iter().enumerate() {
        arrays.push(ArrayInfo {
            name: format!("trainable/{i}"),
            shape: vec![s.len()],
        });
    }
    for (i, s) in params.running_slices().iter().enumerate() {
        arrays.push(ArrayInfo {
            name: format!("running/{i}"),
            shape: vec![s.len()],
        });
    }
    if with_adam {
        for (i, s) in trainable.iter().enumerate() {
            arrays.push(ArrayInfo {
                name: format!("adam_m/{i}"),
                shape: vec![s.len()],
            });
        }
        for (i, s) in trainable.iter().enumerate() {
            arrays.push(ArrayInfo {
                name: format!("adam_v/{i}"),
                shape: vec![s.len()],
            });
        }
    }
    arrays
}

fn write_slices(out: &mut Vec<u8>, slices: &[&[f64]]) {
    for s in slices {
        for v in s.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(cp: &Checkpoint) -> Vec<u8> {
    let header = Header {
        unet: cp.params.config.clone(),
        train: cp.train_config.clone(),
        history: cp.history.clone(),
        best_epoch: cp.best_epoch,
        adam_step: cp.adam.as_ref().map(|a| a.t),
        arrays: array_manifest(&cp.params, cp.adam.is_some()),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    write_slices(&mut out, &cp.params.trainable_slices());
    write_slices(&mut out, &cp.params.running_slices());
    if let Some(adam) = &cp.adam {
        write_slices(&mut out, &adam.m.trainable_slices());
        write_slices(&mut out, &adam.v.trainable_slices());
    }
    out
}

pub fn save(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(&to_bytes(cp))?;
    Ok(())
}

fn read_into(slices: Vec<&mut [f64]>, bytes: &[u8], offset: &mut usize) -> Result<()> {
    for s in slices {
        for v in s.iter_mut() {
            let end = *offset + 8;
            let chunk = bytes
                .get(*offset..end)
                .ok_or_else(|| Error::Checkpoint("payload truncated".into()))?;
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
            *offset = end;
        }
    }
    Ok(())
}

/// Deserializes a checkpoint from bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    let header_bytes = bytes
        .get(16..header_end)
        .ok_or_else(|| Error::Checkpoint("header truncated".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;

    let mut params = build_unet(&header.unet)?;
    let mut offset = header_end;
    read_into(params.trainable_slices_mut(), bytes, &mut offset)?;
    read_into(params.running_slices_mut(), bytes, &mut offset)?;
    let adam = match header.adam_step {
        Some(t) => {
            let mut state = AdamState::new(&params);
            state.t = t;
            read_into(state.m.trainable_slices_mut(), bytes, &mut offset)?;
            read_into(state.v.trainable_slices_mut(), bytes, &mut offset)?;
            Some(state)
        }
        None => None,
    };
    if offset != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - offset
        )));
    }
    Ok(Checkpoint {
        params,
        train_config: header.train,
        history: header.history,
        best_epoch: header.best_epoch,
        adam,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::adam::adam_step;

    fn tiny_params() -> UNetParams {
        build_unet(&UNetConfig {
            depth: 2,
            base_channels: 2,
            in_channels: 1,
            input_h: 16,
            input_w: 16,
            dropout_p: 0.5,
            dropout_sites: None,
            seed: 33,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut params = tiny_params();
        // Touch running stats so they are not all default.
        for s in params.running_slices_mut() {
            for (i, v) in s.iter_mut().enumerate() {
                *v += (i as f64 + 1.0) * 1e-3;
            }
        }
        let mut state = AdamState::new(&params);
        let mut grads = params.zeros_like();
        for s in grads.trainable_slices_mut() {
            for (i, g) in s.iter_mut().enumerate() {
                *g = (i as f64).sin();
            }
        }
        adam_step(&mut params, &grads, &mut state, &TrainConfig::default());
        let cp = Checkpoint {
            params,
            train_config: Some(TrainConfig::default()),
            history: vec![EpochStats {
                epoch: 1,
                train_loss: 0.5,
                val_accuracy: 0.9,
            }],
            best_epoch: 1,
            adam: Some(state),
        };
        let bytes = to_bytes(&cp);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.params, cp.params);
        assert_eq!(back.history, cp.history);
        assert_eq!(back.best_epoch, 1);
        let adam = back.adam.unwrap();
        let orig = cp.adam.unwrap();
        assert_eq!(adam.t, orig.t);
        assert_eq!(adam.m, orig.m);
        assert_eq!(adam.v, orig.v);
        // Serialization itself is deterministic.
        assert_eq!(
            to_bytes(&Checkpoint {
                params: back.params,
                train_config: back.train_config,
                history: back.history,
                best_epoch: back.best_epoch,
                adam: Some(adam),
            }),
            bytes
        );
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(from_bytes(b"nope").is_err());
        let cp = Checkpoint {
            params: tiny_params(),
            train_config: None,
            history: Vec::new(),
            best_epoch: 0,
            adam: None,
        };
        let mut bytes = to_bytes(&cp);
        bytes.truncate(bytes.len() - 9);
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(_))));
    }
}
