use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{Adam, AdamConfig, Moments};
use crate::autodiff::Tensor;
use crate::cells::ModelConfig;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const CKPT_MAGIC: &[u8; 4] = b"VACK";
pub const CKPT_VERSION: u16 = 1;
pub const MODEL_FILE: &str = "model.json";

/// Identity of a model layout: first 8 bytes of the SHA-256 of its JSON.
pub fn fingerprint(config: &ModelConfig) -> u64 {
    let json = serde_json::to_vec(config).expect("model config serializes");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Snapshot of training state at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub fingerprint: u64,
    pub params: Vec<(String, Tensor<f32>)>,
    pub adam_t: u64,
    pub adam: AdamConfig,
    /// `(name, m, v)` for every parameter that has optimizer state.
    pub moments: Vec<(String, Tensor<f32>, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn capture(step: u64, fingerprint: u64, store: &ParamStore<f32>, adam: &Adam<f32>) -> Self {
        let params = store.entries().map(|(_, e)| (e.name.clone(), e.value.clone())).collect();
        let moments = store
            .entries()
            .filter_map(|(id, e)| adam.moments(id).map(|m| (e.name.clone(), m.m.clone(), m.v.clone())))
            .collect();
        Self { step, fingerprint, params, adam_t: adam.t, adam: adam.config, moments }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every parameter into `store`; names must match exactly.
    pub fn restore_params(&self, store: &mut ParamStore<f32>) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint holds {} tensors, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        self.restore_prefix(store, "")?;
        Ok(())
    }

    /// Copies the parameters whose names start with `prefix`; returns how
    /// many were copied.
    pub fn restore_prefix(&self, store: &mut ParamStore<f32>, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for (name, value) in self.params.iter().filter(|(n, _)| n.starts_with(prefix)) {
            let id = store
                .id(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("model has no parameter {name}")))?;
            store.assign(id, value.clone())?;
            n += 1;
        }
        Ok(n)
    }

    /// Optimizer state for `store`, or `None` entries where the checkpoint
    /// has none.
    pub fn restore_adam(&self, adam: &mut Adam<f32>, store: &ParamStore<f32>) -> Result<()> {
        adam.t = self.adam_t;
        adam.config = self.adam;
        for (name, m, v) in &self.moments {
            let id = store
                .id(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("optimizer state for unknown parameter {name}")))?;
            if m.shape() != store.get(id).shape() || v.shape() != m.shape() {
                return Err(Error::CheckpointMismatch(format!("optimizer state shape for {name}")));
            }
            adam.set_moments(id, Moments { m: m.clone(), v: v.clone() });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        put_count(&mut out, self.params.len())?;
        for (name, t) in &self.params {
            put_tensor(&mut out, name, t)?;
        }
        out.extend_from_slice(&self.adam_t.to_le_bytes());
        for x in [self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.eps] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        put_count(&mut out, self.moments.len())?;
        for (name, m, v) in &self.moments {
            put_tensor(&mut out, &format!("{name}:m"), m)?;
            put_tensor(&mut out, &format!("{name}:v"), v)?;
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], origin: &str) -> Result<Self> {
        let corrupt = |detail: String| Error::Corrupt { path: origin.to_string(), detail };
        if bytes.len() < 4 {
            return Err(corrupt("truncated".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(corrupt("CRC mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 0, origin };
        if r.take(4)? != CKPT_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CKPT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let step = u64::from_le_bytes(r.array()?);
        let fingerprint = u64::from_le_bytes(r.array()?);
        let count = u32::from_le_bytes(r.array()?) as usize;
        let params = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        let adam_t = u64::from_le_bytes(r.array()?);
        let mut cfg = [0.0; 4];
        for x in &mut cfg {
            *x = f64::from_le_bytes(r.array()?);
        }
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut moments = Vec::with_capacity(count.min(1 << 12));
        for _ in 0..count {
            let (mname, m) = r.tensor()?;
            let (vname, v) = r.tensor()?;
            let name = mname
                .strip_suffix(":m")
                .filter(|n| vname.strip_suffix(":v") == Some(n))
                .ok_or_else(|| corrupt(format!("unpaired optimizer state {mname}/{vname}")))?;
            moments.push((name.to_string(), m, v));
        }
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let adam = AdamConfig { lr: cfg[0], beta1: cfg[1], beta2: cfg[2], eps: cfg[3] };
        Ok(Self { step, fingerprint, params, adam_t, adam, moments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }

    /// Encoded bytes written to `path` directly (not atomic).
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }
}

fn put_count(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Contract("too many tensors".into()))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Contract(format!("name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    let rank = u8::try_from(t.rank()).map_err(|_| Error::Contract(format!("{name}: rank too large")))?;
    out.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Contract(format!("{name}: extent too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt { path: self.origin.to_string(), detail: format!("truncated at byte {}", self.pos) });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Corrupt { path: self.origin.to_string(), detail: "tensor name is not UTF-8".into() })?
            .to_string();
        let rank = self.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| Ok(u32::from_le_bytes(self.array()?) as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt {
            path: self.origin.to_string(),
            detail: format!("{name}: extent overflow"),
        })?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((name, Tensor::new(&shape, data)?))
    }
}

/// `ckpt-<step:08>.vack`.
pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt-{step:08}.vack")
}

/// Step encoded in a complete checkpoint's file name.
pub fn parse_checkpoint_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("ckpt-")?.strip_suffix(".vack")?;
    (digits.len() >= 8 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

/// Writes checkpoints as `.<name>.tmp` and renames them into place, so a
/// directory listing only ever shows complete files.
#[derive(Clone, Debug, Default)]
pub struct CheckpointWriter {
    pub dir: PathBuf,
    /// Fault injection: the temporary file is written in this many chunks
    /// with `pause` between them, and `pause` again before the rename.
    pub chunks: usize,
    pub pause: Duration,
}

impl CheckpointWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), chunks: 1, pause: Duration::ZERO }
    }

    pub fn write(&self, ckpt: &Checkpoint) -> Result<PathBuf> {
        let name = checkpoint_name(ckpt.step);
        let final_path = self.dir.join(&name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let result = self.write_tmp(&tmp, &ckpt.encode()?).and_then(|()| {
            if !self.pause.is_zero() {
                std::thread::sleep(self.pause);
            }
            fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))
        });
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result.map(|()| final_path)
    }

    fn write_tmp(&self, tmp: &Path, bytes: &[u8]) -> Result<()> {
        let mut f = fs::File::create(tmp).map_err(|e| Error::io(tmp, e))?;
        let chunk = bytes.len().div_ceil(self.chunks.max(1)).max(1);
        for (i, part) in bytes.chunks(chunk).enumerate() {
            if i > 0 && !self.pause.is_zero() {
                f.flush().map_err(|e| Error::io(tmp, e))?;
                std::thread::sleep(self.pause);
            }
            f.write_all(part).map_err(|e| Error::io(tmp, e))?;
        }
        f.sync_all().map_err(|e| Error::io(tmp, e))
    }
}

/// Sidecar describing the model every checkpoint in a directory belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model: ModelConfig,
    pub fingerprint: u64,
}

impl ModelManifest {
    pub fn new(model: ModelConfig) -> Self {
        Self { fingerprint: fingerprint(&model), model }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MODEL_FILE);
        let tmp = dir.join(format!(".{MODEL_FILE}.tmp"));
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            detail: e.to_string(),
        })
    }
}
