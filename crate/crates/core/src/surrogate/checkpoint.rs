use std::io::{Read, Write};

use crate::scalar::Real;
use crate::surrogate::params::{FeatureFlags, SurrogateConfig, SurrogateParams};
use crate::surrogate::train::Trainer;
use crate::SurrogateError;

const MAGIC: &[u8; 8] = b"CESSURR\0";
const VERSION: u32 = 1;

fn io(e: std::io::Error) -> SurrogateError {
    SurrogateError::Checkpoint(e.to_string())
}

/// Binary checkpoint: magic, version, architecture header, then little-endian `f64` weights
/// followed by the Adam step, epoch and moments.
pub fn write_checkpoint<T: Real, W: Write>(trainer: &Trainer<T>, mut w: W) -> Result<(), SurrogateError> {
    let c = &trainer.params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.per_edge, c.width, c.hidden_layers] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.side.to_le_bytes());
    buf.push(c.flags.bits());
    let flat = trainer.params.flatten();
    buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    let put = |v: &[T], buf: &mut Vec<u8>| v.iter().for_each(|x| buf.extend_from_slice(&x.to_f64_lossy().to_le_bytes()));
    put(&flat, &mut buf);
    buf.extend_from_slice(&(trainer.step as u64).to_le_bytes());
    buf.extend_from_slice(&(trainer.epoch as u64).to_le_bytes());
    put(&trainer.m, &mut buf);
    put(&trainer.v, &mut buf);
    w.write_all(&buf).map_err(io)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SurrogateError> {
        let end = self.pos + n;
        if end > self.data.len() {
            return Err(SurrogateError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SurrogateError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SurrogateError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s<T: Real>(&mut self, n: usize) -> Result<Vec<T>, SurrogateError> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|b| T::lit(f64::from_le_bytes(b.try_into().unwrap()))).collect())
    }
}

/// Inverse of [`write_checkpoint`].
pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<Trainer<T>, SurrogateError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(io)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(SurrogateError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(SurrogateError::Checkpoint(format!("unsupported version {version}")));
    }
    let per_edge = c.u32()? as usize;
    let width = c.u32()? as usize;
    let hidden_layers = c.u32()? as usize;
    let side = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let flags = FeatureFlags::from_bits(c.take(1)?[0]);
    let config = SurrogateConfig { per_edge, width, hidden_layers, side, flags };
    let mut params = SurrogateParams::zeros(config)?;
    let n = c.u64()? as usize;
    if n != params.n_params() {
        return Err(SurrogateError::Checkpoint(format!("{n} weights, architecture needs {}", params.n_params())));
    }
    params.assign(&c.f64s(n)?);
    let step = c.u64()? as usize;
    let epoch = c.u64()? as usize;
    let m = c.f64s(n)?;
    let v = c.f64s(n)?;
    if c.pos != data.len() {
        return Err(SurrogateError::Checkpoint("trailing bytes".into()));
    }
    params.check()?;
    Ok(Trainer { params, m, v, step, epoch })
}

/// Text sidecar with the architecture, flags, seed and training-data hash.
pub fn write_sidecar<T: Real, W: Write>(trainer: &Trainer<T>, seed: u64, dataset_hash: &str, mut w: W) -> std::io::Result<()> {
    let c = &trainer.params.config;
    writeln!(w, "format = {VERSION}")?;
    writeln!(w, "per_edge = {}", c.per_edge)?;
    writeln!(w, "width = {}", c.width)?;
    writeln!(w, "hidden_layers = {}", c.hidden_layers)?;
    writeln!(w, "side = {}", c.side)?;
    writeln!(w, "scale_by_norm = {}", c.flags.scale_by_norm)?;
    writeln!(w, "remove_rigid = {}", c.flags.remove_rigid)?;
    writeln!(w, "sobolev_g = {}", c.flags.sobolev_g)?;
    writeln!(w, "sobolev_hvp = {}", c.flags.sobolev_hvp)?;
    writeln!(w, "seed = {seed}")?;
    writeln!(w, "dataset_hash = \"{dataset_hash}\"")?;
    writeln!(w, "step = {}", trainer.step)?;
    writeln!(w, "epoch = {}", trainer.epoch)
}
