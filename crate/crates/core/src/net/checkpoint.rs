//! Binary checkpoints for stacks of [`Sequential`] modules.
//!
//! ```text
//! "CHCKPT01"
//! u64 LE   metadata length
//! [u8]     metadata, UTF-8 JSON (see `CheckpointMeta`)
//! [u8]     parameter values, then batchnorm buffers, then (optionally)
//!          Adam m, v and step per parameter; all little-endian, in the
//!          order listed in the metadata
//! u64 LE   first 8 bytes of SHA-256 over everything above
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::nn::{LayerSpec, Scalar, Sequential, Tensor};
use crate::seed::digest64;

pub const MAGIC: &[u8; 8] = b"CHCKPT01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleMeta {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

/// Provenance of the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub steps: usize,
    pub seed: u64,
    pub corpus_digest: Option<String>,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    /// `decryptor` or `classifier`.
    pub kind: String,
    pub element_width: usize,
    pub config: serde_json::Value,
    pub modules: Vec<ModuleMeta>,
    pub params: Vec<TensorMeta>,
    pub buffers: Vec<TensorMeta>,
    pub optimizer: bool,
    pub training: TrainingMeta,
}

fn write_tensor<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    t.data().iter().for_each(|&v| v.write_le(out));
}

/// Serializes the modules' parameters, buffers and optionally Adam state.
pub fn encode<T: Scalar>(
    kind: &str,
    config: serde_json::Value,
    modules: &[(&str, &Sequential<T>)],
    training: TrainingMeta,
    optimizer: bool,
) -> Result<Vec<u8>, NetError> {
    let mut params = Vec::new();
    let mut buffers = Vec::new();
    let mut data = Vec::new();
    for (_, m) in modules {
        for p in m.params() {
            params.push(TensorMeta {
                name: p.name.clone(),
                shape: p.shape().to_vec(),
            });
            write_tensor(&p.value, &mut data);
        }
    }
    for (name, m) in modules {
        for (i, b) in m.buffers().into_iter().enumerate() {
            buffers.push(TensorMeta {
                name: format!("{name}.buffer{i}"),
                shape: b.shape().to_vec(),
            });
            write_tensor(b, &mut data);
        }
    }
    if optimizer {
        for (_, m) in modules {
            for p in m.params() {
                write_tensor(&p.adam_m, &mut data);
                write_tensor(&p.adam_v, &mut data);
                data.extend_from_slice(&p.step.to_le_bytes());
            }
        }
    }
    let meta = CheckpointMeta {
        version: FORMAT_VERSION,
        kind: kind.to_string(),
        element_width: T::WIDTH,
        config,
        modules: modules
            .iter()
            .map(|(name, m)| ModuleMeta {
                name: name.to_string(),
                layers: m.specs(),
            })
            .collect(),
        params,
        buffers,
        optimizer,
        training,
    };
    let meta_bytes = serde_json::to_vec(&meta).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + meta_bytes.len() + data.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    out.extend_from_slice(&data);
    let digest = digest64(&out);
    out.extend_from_slice(&digest.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    width: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.offset + n > self.bytes.len() {
            return Err(NetError::Truncated {
                offset: self.offset,
                needed: n,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill<T: Scalar>(&mut self, t: &mut Tensor<T>) -> Result<(), NetError> {
        let width = self.width;
        let raw = self.take(t.len() * width)?;
        for (dst, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(width)) {
            *dst = match width {
                4 => T::lit(f32::from_le_bytes(chunk.try_into().unwrap()) as f64),
                _ => T::lit(f64::from_le_bytes(chunk.try_into().unwrap())),
            };
        }
        Ok(())
    }
}

/// Parses and verifies a checkpoint, rebuilding one [`Sequential`] per module.
/// Values stored at a different element width are converted.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(CheckpointMeta, Vec<Sequential<T>>), NetError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let found = bytes.iter().take(8).copied().collect();
        return Err(NetError::BadMagic(found));
    }
    if bytes.len() < MAGIC.len() + 16 {
        return Err(NetError::Truncated {
            offset: bytes.len(),
            needed: MAGIC.len() + 16 - bytes.len(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = digest64(body);
    let mut r = Reader {
        bytes: body,
        offset: MAGIC.len(),
        width: 8,
    };
    let meta_len = r.u64()? as usize;
    let meta_raw = r.take(meta_len)?;
    if stored != computed {
        return Err(NetError::Digest { stored, computed });
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(meta_raw).map_err(|e| NetError::Checkpoint(format!("metadata: {e}")))?;
    if meta.version != FORMAT_VERSION {
        return Err(NetError::Version(meta.version));
    }
    if meta.element_width != 4 && meta.element_width != 8 {
        return Err(NetError::Checkpoint(format!(
            "unsupported element width {}",
            meta.element_width
        )));
    }
    r.width = meta.element_width;

    // the rng only seeds weights that are overwritten below
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut modules: Vec<Sequential<T>> = meta
        .modules
        .iter()
        .map(|m| Sequential::from_specs(&m.name, &m.layers, &mut rng))
        .collect();

    let mut param_meta = meta.params.iter();
    for m in &mut modules {
        for p in m.params_mut() {
            let expect = param_meta
                .next()
                .ok_or_else(|| NetError::Checkpoint("fewer parameters listed than layers need".into()))?;
            if expect.name != p.name || expect.shape != p.shape() {
                return Err(NetError::Checkpoint(format!(
                    "parameter {} {:?} listed as {} {:?}",
                    p.name,
                    p.shape(),
                    expect.name,
                    expect.shape
                )));
            }
            r.fill(&mut p.value)?;
        }
    }
    let mut buffer_meta = meta.buffers.iter();
    for m in &mut modules {
        for b in m.buffers_mut() {
            match buffer_meta.next() {
                Some(e) if e.shape == b.shape() => r.fill(b)?,
                other => {
                    return Err(NetError::Checkpoint(format!(
                        "buffer of shape {:?} listed as {other:?}",
                        b.shape()
                    )))
                }
            }
        }
    }
    if meta.optimizer {
        for m in &mut modules {
            for p in m.params_mut() {
                r.fill(&mut p.adam_m)?;
                r.fill(&mut p.adam_v)?;
                let saved = r.width;
                r.width = 8;
                p.step = r.u64()?;
                r.width = saved;
            }
        }
    }
    if r.offset != body.len() {
        return Err(NetError::Checkpoint(format!(
            "{} unexpected trailing bytes",
            body.len() - r.offset
        )));
    }
    Ok((meta, modules))
}

pub fn save(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), NetError> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<u8>, NetError> {
    let path = path.as_ref();
    fs::read(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn module() -> Sequential<f32> {
        let specs = [
            LayerSpec::Conv {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::BatchNorm { channels: 2 },
            LayerSpec::Relu,
        ];
        Sequential::from_specs("m", &specs, &mut ChaCha8Rng::seed_from_u64(3))
    }

    fn bytes(optimizer: bool) -> Vec<u8> {
        let m = module();
        encode("test", serde_json::json!({"a": 1}), &[("m", &m)], TrainingMeta::default(), optimizer).unwrap()
    }

    #[test]
    fn round_trip_preserves_values() {
        let mut m = module();
        if let crate::nn::Layer::BatchNorm(bn) = &mut m.layers[1] {
            bn.running_mean.data_mut()[1] = 0.25;
        }
        m.params_mut()[0].adam_m.data_mut()[0] = 0.5;
        m.params_mut()[0].step = 7;
        let b = encode("test", serde_json::json!(null), &[("m", &m)], TrainingMeta::default(), true).unwrap();
        let (meta, back) = decode::<f32>(&b).unwrap();
        assert_eq!(meta.kind, "test");
        let back = &back[0];
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
            assert_eq!(a.adam_m.data(), b.adam_m.data());
            assert_eq!(a.step, b.step);
        }
        for (a, b) in m.buffers().iter().zip(back.buffers()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn widens_to_f64() {
        let (_, back) = decode::<f64>(&bytes(false)).unwrap();
        let m = module();
        for (a, b) in m.params().iter().zip(back[0].params()) {
            let a64: Vec<f64> = a.value.data().iter().map(|&v| v as f64).collect();
            assert_eq!(a64, b.value.data());
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut b = bytes(false);
        b[0] = b'X';
        assert!(matches!(decode::<f32>(&b), Err(NetError::BadMagic(_))));
    }

    #[test]
    fn flipped_byte_fails_digest() {
        let mut b = bytes(false);
        let i = b.len() - 12;
        b[i] ^= 1;
        assert!(matches!(decode::<f32>(&b), Err(NetError::Digest { .. })));
    }

    #[test]
    fn truncation_is_detected() {
        let b = bytes(true);
        assert!(decode::<f32>(&b[..10]).is_err());
        assert!(decode::<f32>(&b[..b.len() - 1]).is_err());
    }
}
