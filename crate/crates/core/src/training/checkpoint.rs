use super::config::TrainConfig;
use crate::error::{io_err, Result, SasrError};
use sasr_tensor::Tensor;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SASRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized training state: configuration, counters and named f32 tensors.
///
/// Layout (little-endian): magic, u32 version, u32-length-prefixed config
/// text, u64 epoch, u64 step, u64 generator and discriminator Adam steps, u32
/// record count, then per record a u32-prefixed name, u32 rank, u32 dims and
/// the raw f32 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimisation steps.
    pub step: u64,
    pub g_adam_step: u64,
    pub d_adam_step: u64,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SasrError::CorruptCheckpoint(format!(
                "truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| SasrError::CorruptCheckpoint("string is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_str(&mut out, &self.config.to_text());
        put_u64(&mut out, self.epoch);
        put_u64(&mut out, self.step);
        put_u64(&mut out, self.g_adam_step);
        put_u64(&mut out, self.d_adam_step);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(SasrError::NotACheckpoint);
        }
        let mut r = Reader { bytes, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(SasrError::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let config = TrainConfig::parse(&r.string()?)
            .map_err(|e| SasrError::CorruptCheckpoint(format!("embedded config: {e}")))?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let g_adam_step = r.u64()?;
        let d_adam_step = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes = numel
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| SasrError::CorruptCheckpoint(format!("`{name}` has absurd shape {shape:?}")))?;
            let data = r
                .take(bytes)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data)
                .map_err(|e| SasrError::CorruptCheckpoint(format!("`{name}`: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(SasrError::CorruptCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            epoch,
            step,
            g_adam_step,
            d_adam_step,
            tensors,
        })
    }

    /// Writes through a temporary file and renames it, so an interrupted save
    /// never leaves a half-written checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode()).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::decode(&bytes)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| SasrError::CorruptCheckpoint(format!("missing tensor `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config: TrainConfig {
                seed: 9,
                ..TrainConfig::default()
            },
            epoch: 3,
            step: 12,
            g_adam_step: 12,
            d_adam_step: 11,
            tensors: vec![
                ("a".into(), Tensor::new([2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5e-20, 7.0, -1e30]).unwrap()),
                ("b".into(), Tensor::new([1], vec![0.25]).unwrap()),
            ],
        }
    }

    #[test]
    fn bit_exact_round_trip() {
        let c = sample();
        let d = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!(d, c);
        let bits = |c: &Checkpoint| -> Vec<u32> { c.tensors.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&d), bits(&c));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let bytes = sample().encode();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(SasrError::NotACheckpoint)));
        assert!(matches!(Checkpoint::decode(b"SASR"), Err(SasrError::NotACheckpoint)));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(Checkpoint::decode(&v2), Err(SasrError::CheckpointVersion { found: 2, .. })));
        for cut in [12, 40, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(&bytes[..cut]), Err(SasrError::CorruptCheckpoint(_))));
        }
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Checkpoint::decode(&extra), Err(SasrError::CorruptCheckpoint(_))));
    }
}
