//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "OWANCKPT"
//! version  u32
//! config   u32 length + UTF-8 key=value text
//! step     u64
//! adam_t   u64
//! rng      32-byte seed, u64 stream, u128 word position
//! count    u32
//! tensors  count × { u32 name length, name, u32 ndim, ndim × u32 dims,
//!                    numel × f32 value, numel × f32 m, numel × f32 v }
//! checksum u64 FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::config::TrainConfig;
use super::optim::AdamState;
use super::{io_err, TrainError};
use crate::model::Owan;
use crate::rng::RngState;
use crate::tensor::{ParamStore, Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OWANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state at a step boundary.
///
/// Floats are held in single precision, the on-disk format. Runs computed in
/// double precision are rounded when a checkpoint is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ParamStore<f32>,
    pub adam: AdamState<f32>,
    pub rng: RngState,
    /// Optimizer steps completed.
    pub step: u64,
}

impl Checkpoint {
    /// Rebuilds the network, checking that every tensor matches the layout
    /// the configuration implies.
    pub fn model<T: Real>(&self) -> Result<Owan<T>, TrainError> {
        let reference = Owan::<f32>::build(&self.config.model, 0)?;
        let mismatch = |detail: String| TrainError::Config(format!("checkpoint does not match its configuration: {detail}"));
        if reference.params.len() != self.params.len() {
            return Err(mismatch(format!(
                "expected {} tensors, found {}",
                reference.params.len(),
                self.params.len()
            )));
        }
        for (name, want) in reference.params.iter() {
            let got = self
                .params
                .get(name)
                .ok_or_else(|| mismatch(format!("missing tensor `{name}`")))?;
            if got.shape() != want.shape() {
                return Err(mismatch(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Owan {
            config: self.config.model.clone(),
            params: self.params.cast(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        let text = self.config.to_text();
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        put_u64(&mut out, self.step);
        put_u64(&mut out, self.adam.t);
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for (name, tensor) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, tensor.shape().len() as u32);
            for &d in tensor.shape() {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, tensor.data());
            put_f32s(&mut out, &self.adam.m[name]);
            put_f32s(&mut out, &self.adam.v[name]);
        }
        let sum = fnv1a(&out);
        put_u64(&mut out, sum);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint, TrainError> {
        let fail = |detail: &str| TrainError::Checkpoint {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        if !CHECKPOINT_MAGIC.starts_with(&bytes[..bytes.len().min(8)]) {
            return Err(fail("not an OWAN checkpoint (bad magic)"));
        }
        if bytes.len() < 12 {
            return Err(fail("truncated file"));
        }
        let mut r = Reader { bytes, pos: 8, path };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let body = &bytes[..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
        let text_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(text_len)?).map_err(|_| fail("config block is not UTF-8"))?;
        let config = TrainConfig::parse_str(text).map_err(|e| fail(&format!("config block: {e}")))?;
        let step = r.u64()?;
        let t = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        let mut adam = AdamState {
            m: Default::default(),
            v: Default::default(),
            t,
        };
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| fail("tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(fail("implausible tensor rank"));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| fail("tensor size overflows"))?;
            let data = r.f32s(numel)?;
            let m = r.f32s(numel)?;
            let v = r.f32s(numel)?;
            let tensor = Tensor::new(&shape, data).map_err(|e| fail(&e.to_string()))?;
            params
                .insert(name.clone(), tensor)
                .map_err(|e| fail(&e.to_string()))?;
            adam.m.insert(name.clone(), m);
            adam.v.insert(name, v);
        }
        if r.pos != body.len() {
            return Err(fail(if r.pos > body.len() {
                "truncated file"
            } else {
                "trailing bytes after tensor data"
            }));
        }
        if fnv1a(body) != stored {
            return Err(fail("checksum mismatch"));
        }
        Ok(Checkpoint {
            config,
            params,
            adam,
            rng: RngState { seed, stream, word_pos },
            step,
        })
    }
}

/// Writes via a temporary file and rename so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    fs::write(&tmp, checkpoint.to_bytes()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes, path)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    /// Never reads into the trailing checksum.
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e + 8 <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(TrainError::Checkpoint {
                path: self.path.to_path_buf(),
                detail: "truncated file".into(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, TrainError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| TrainError::Checkpoint {
            path: self.path.to_path_buf(),
            detail: "tensor size overflows".into(),
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
