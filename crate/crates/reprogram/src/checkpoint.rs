//! Binary checkpoint format for frozen models.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..8    magic "RPKMODEL"
//! u32           format version (1)
//! u32           manifest byte length
//! manifest      u32 layer count, then per layer a u32 kind tag
//!               (0 dense, 1 relu, 2 flatten, 3 softmax); dense layers are
//!               followed by u32 in_dim and u32 out_dim; after the layer
//!               list two f64 give the input range
//! payload       f64 parameters, dense weights row-major then bias,
//!               in layer order
//! trailer       32 bytes, SHA-256 of the payload
//! ```
//!
//! The trailer doubles as the parameter digest: its hex form equals
//! [`FrozenModel::param_digest`].

use crate::error::{Error, Result};
use crate::model::{param_bytes, ArchLayer, FrozenModel, LayerSpec};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"RPKMODEL";
const VERSION: u32 = 1;

pub fn save(model: &FrozenModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FrozenModel> {
    from_bytes(&fs::read(path)?)
}

pub fn to_bytes(model: &FrozenModel) -> Vec<u8> {
    let mut manifest = Vec::new();
    let arch = model.arch();
    push_u32(&mut manifest, arch.len() as u32);
    for layer in &arch {
        match layer {
            ArchLayer::Dense { in_dim, out_dim } => {
                push_u32(&mut manifest, 0);
                push_u32(&mut manifest, *in_dim as u32);
                push_u32(&mut manifest, *out_dim as u32);
            }
            ArchLayer::Relu => push_u32(&mut manifest, 1),
            ArchLayer::Flatten => push_u32(&mut manifest, 2),
            ArchLayer::Softmax => push_u32(&mut manifest, 3),
        }
    }
    let (lo, hi) = model.input_range();
    manifest.extend_from_slice(&lo.to_le_bytes());
    manifest.extend_from_slice(&hi.to_le_bytes());

    let payload = param_bytes(model.layers());
    let digest = Sha256::digest(&payload);

    let mut out = Vec::with_capacity(8 + 8 + manifest.len() + payload.len() + 32);
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    push_u32(&mut out, manifest.len() as u32);
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<FrozenModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(8, "magic header")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {:02x?}, expected {MAGIC:02x?}", magic),
        });
    }
    let version = cur.u32("format version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: cur.pos - 4,
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let manifest_len = cur.u32("manifest length")? as usize;
    let manifest_end = cur.pos + manifest_len;
    if manifest_end > bytes.len() {
        return Err(Error::Parse {
            offset: cur.pos,
            message: format!(
                "manifest claims {manifest_len} bytes but only {} remain",
                bytes.len() - cur.pos
            ),
        });
    }

    let n_layers = cur.u32("layer count")? as usize;
    let mut arch = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let kind = cur.u32("layer kind")?;
        arch.push(match kind {
            0 => {
                let in_dim = cur.u32("dense in_dim")? as usize;
                let out_dim = cur.u32("dense out_dim")? as usize;
                ArchLayer::Dense { in_dim, out_dim }
            }
            1 => ArchLayer::Relu,
            2 => ArchLayer::Flatten,
            3 => ArchLayer::Softmax,
            other => {
                return Err(Error::Parse {
                    offset: cur.pos - 4,
                    message: format!("unknown layer kind {other} in layer {i}"),
                })
            }
        });
    }
    let lo = cur.f64("input range low")?;
    let hi = cur.f64("input range high")?;
    if cur.pos != manifest_end {
        return Err(Error::Parse {
            offset: cur.pos,
            message: format!("manifest length mismatch: ended at {}, declared {manifest_end}", cur.pos),
        });
    }

    let param_count: usize = arch
        .iter()
        .map(|l| match l {
            ArchLayer::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            _ => 0,
        })
        .sum();
    let payload_len = param_count * 8;
    if cur.pos + payload_len + 32 != bytes.len() {
        return Err(Error::Parse {
            offset: cur.pos,
            message: format!(
                "expected {} payload+trailer bytes, found {}",
                payload_len + 32,
                bytes.len() - cur.pos
            ),
        });
    }
    let payload = cur.take(payload_len, "parameter payload")?;
    let expected = Sha256::digest(payload);
    let trailer = cur.take(32, "digest trailer")?;
    if trailer != expected.as_slice() {
        return Err(Error::Parse {
            offset: cur.pos - 32,
            message: "parameter digest mismatch, checkpoint is corrupt".into(),
        });
    }

    let mut values = payload.chunks_exact(8).map(|c| {
        f64::from_le_bytes(c.try_into().expect("8-byte chunk"))
    });
    let layers = arch
        .iter()
        .map(|l| match *l {
            ArchLayer::Dense { in_dim, out_dim } => {
                let weight: Vec<f64> = values.by_ref().take(in_dim * out_dim).collect();
                let bias: Vec<f64> = values.by_ref().take(out_dim).collect();
                LayerSpec::Dense { in_dim, out_dim, weight, bias }
            }
            ArchLayer::Relu => LayerSpec::Relu,
            ArchLayer::Flatten => LayerSpec::Flatten,
            ArchLayer::Softmax => LayerSpec::Softmax,
        })
        .collect();
    FrozenModel::new(layers, (lo, hi))
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{train_source, SourceTrainConfig};
    use crate::tensor::Tensor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_model() -> FrozenModel {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..80 {
            let c = i % 2;
            let base = if c == 0 { -0.5 } else { 0.5 };
            data.push(base + rng.gen_range(-0.2..0.2));
            data.push(-base + rng.gen_range(-0.2..0.2));
            labels.push(c);
        }
        train_source(
            &Tensor::matrix(80, 2, data).unwrap(),
            &labels,
            &[
                ArchLayer::Dense { in_dim: 2, out_dim: 4 },
                ArchLayer::Relu,
                ArchLayer::Dense { in_dim: 4, out_dim: 2 },
                ArchLayer::Softmax,
            ],
            &SourceTrainConfig {
                epochs: 5,
                batch_size: 8,
                learning_rate: 0.3,
                momentum: 0.9,
                seed: 9,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let m = small_model();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.param_digest(), back.param_digest());
    }

    #[test]
    fn file_round_trip() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&m, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(m.param_digest(), back.param_digest());
        assert_eq!(m.layers(), back.layers());
    }

    #[test]
    fn flipped_payload_byte_is_rejected() {
        let m = small_model();
        let mut bytes = to_bytes(&m);
        // Well inside the f64 payload.
        let idx = bytes.len() - 40;
        bytes[idx] ^= 0x01;
        let err = from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("digest mismatch"), "{err}");
    }

    #[test]
    fn wrong_magic_is_a_parse_error() {
        let m = small_model();
        let mut bytes = to_bytes(&m);
        bytes[0] = b'X';
        let err = from_bytes(&bytes).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn truncation_reports_missing_bytes() {
        let m = small_model();
        let bytes = to_bytes(&m);
        let err = from_bytes(&bytes[..bytes.len() - 7]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected") || msg.contains("truncated"), "{msg}");
    }
}
