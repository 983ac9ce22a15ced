use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::DenseMatrix;
use crate::pipeline::record::{RecordMeta, SampleRecord, Source};
use crate::PipelineError;

const MAGIC: &[u8; 4] = b"CESD";
const VERSION: u32 = 1;
const HEADER: usize = 12;

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// Bytes of one record of boundary dimension `dim`.
pub fn record_size(dim: usize) -> usize {
    8 * (2 * dim + 3 + dim * (dim + 1) / 2) + 1 + 8 + 4 + 4 + 1
}

/// Little-endian fixed-width encoding; the Hessian is stored as its row-major upper triangle.
pub fn encode_record(r: &SampleRecord, out: &mut Vec<u8>) {
    let d = r.dim();
    let mut f = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    r.u.iter().for_each(|&v| f(v));
    r.xi.iter().for_each(|&v| f(v));
    f(r.energy);
    r.grad.iter().for_each(|&v| f(v));
    for i in 0..d {
        for j in i..d {
            f(r.hessian[(i, j)]);
        }
    }
    out.push(r.source.code());
    out.extend_from_slice(&r.meta.seed.to_le_bytes());
    out.extend_from_slice(&r.meta.collector.to_le_bytes());
    out.extend_from_slice(&r.meta.newton_iterations.to_le_bytes());
    out.push(r.meta.regularized as u8);
}

/// Inverse of [`encode_record`]; `bytes` must be exactly one record.
pub fn decode_record(bytes: &[u8], dim: usize, index: usize) -> Result<SampleRecord, PipelineError> {
    if bytes.len() != record_size(dim) {
        return Err(PipelineError::Corrupt { index, reason: "truncated record".into() });
    }
    let mut pos = 0;
    let mut f = || {
        let v = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;
        v
    };
    let u: Vec<f64> = (0..dim).map(|_| f()).collect();
    let xi = [f(), f()];
    let energy = f();
    let grad: Vec<f64> = (0..dim).map(|_| f()).collect();
    let mut hessian = DenseMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = f();
            hessian[(i, j)] = v;
            hessian[(j, i)] = v;
        }
    }
    let tail = &bytes[8 * (2 * dim + 3 + dim * (dim + 1) / 2)..];
    let source = Source::from_code(tail[0]).ok_or_else(|| PipelineError::Corrupt { index, reason: format!("unknown source code {}", tail[0]) })?;
    let meta = RecordMeta {
        seed: u64::from_le_bytes(tail[1..9].try_into().unwrap()),
        collector: u32::from_le_bytes(tail[9..13].try_into().unwrap()),
        newton_iterations: u32::from_le_bytes(tail[13..17].try_into().unwrap()),
        regularized: match tail[17] {
            0 => false,
            1 => true,
            b => return Err(PipelineError::Corrupt { index, reason: format!("bad flag byte {b}") }),
        },
    };
    let r = SampleRecord { u, xi, energy, grad, hessian, source, meta };
    r.validate(index).map_err(|e| PipelineError::Corrupt { index, reason: e.to_string() })?;
    Ok(r)
}

fn header(dim: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    h.extend_from_slice(&(dim as u32).to_le_bytes());
    h
}

fn read_header(path: &Path, bytes: &[u8]) -> Result<usize, PipelineError> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(PipelineError::Io(format!("{}: not a dataset file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(PipelineError::Io(format!("{}: unsupported version {version}", path.display())));
    }
    Ok(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize)
}

/// Appends validated records to `path`, creating it if needed. Returns the record count after the append.
pub fn append_records(path: &Path, dim: usize, records: &[SampleRecord]) -> Result<usize, PipelineError> {
    for (i, r) in records.iter().enumerate() {
        if r.dim() != dim {
            return Err(PipelineError::InvalidRecord { index: i, reason: format!("dimension {} in a {dim}-dof dataset", r.dim()) });
        }
        r.validate(i)?;
    }
    let existing = match fs::metadata(path) {
        Ok(m) => Some(m.len() as usize),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io(path, e)),
    };
    let mut buf = Vec::with_capacity(records.len() * record_size(dim) + HEADER);
    let before = match existing {
        None => {
            buf.extend_from_slice(&header(dim));
            0
        }
        Some(len) => {
            let mut h = [0u8; HEADER];
            File::open(path).and_then(|mut f| f.read_exact(&mut h)).map_err(|e| io(path, e))?;
            let file_dim = read_header(path, &h)?;
            if file_dim != dim {
                return Err(PipelineError::Config(format!("{} holds {file_dim}-dof records, not {dim}", path.display())));
            }
            let body = len - HEADER;
            if body % record_size(dim) != 0 {
                return Err(PipelineError::Corrupt { index: body / record_size(dim), reason: "truncated record".into() });
            }
            body / record_size(dim)
        }
    };
    for r in records {
        encode_record(r, &mut buf);
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io(path, e))?;
    f.write_all(&buf).map_err(|e| io(path, e))?;
    f.flush().map_err(|e| io(path, e))?;
    Ok(before + records.len())
}

/// Reads every record of a dataset file.
pub fn load_records(path: &Path) -> Result<Vec<SampleRecord>, PipelineError> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    let dim = read_header(path, &bytes)?;
    let size = record_size(dim);
    let body = &bytes[HEADER..];
    let mut out = Vec::with_capacity(body.len() / size);
    for (i, chunk) in body.chunks(size).enumerate() {
        out.push(decode_record(chunk, dim, i)?);
    }
    Ok(out)
}

/// Record counts per source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub hmc: usize,
    pub dagger: usize,
    pub rejected_hmc: usize,
}

impl SourceCounts {
    pub fn of(records: &[SampleRecord]) -> Self {
        let mut c = Self::default();
        for r in records {
            match r.source {
                Source::Hmc => c.hmc += 1,
                Source::Dagger => c.dagger += 1,
                Source::RejectedHmc => c.rejected_hmc += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.hmc + self.dagger + self.rejected_hmc
    }
}

/// Summary written next to the record files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dim: usize,
    pub train: SourceCounts,
    pub val: SourceCounts,
    /// SHA-256 over the train then validation files, hex encoded.
    pub hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Every twelfth record (index ≡ 11 mod 12) goes to validation, giving an 11:1 split.
pub fn split_of(index: usize) -> Split {
    if index % 12 == 11 {
        Split::Val
    } else {
        Split::Train
    }
}

/// Loaded train and validation records.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub manifest: Manifest,
}

/// `data/train.bin`, `data/val.bin` and `data/manifest.txt` under a root directory.
#[derive(Clone, Debug)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub dim: usize,
}

impl DatasetDir {
    pub fn new(root: impl Into<PathBuf>, dim: usize) -> Self {
        Self { root: root.into(), dim }
    }

    fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn path(&self, split: Split) -> PathBuf {
        self.data().join(match split {
            Split::Train => "train.bin",
            Split::Val => "val.bin",
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data().join("manifest.txt")
    }

    /// Creates empty record files if they are missing and refreshes the manifest.
    pub fn init(&self) -> Result<Manifest, PipelineError> {
        fs::create_dir_all(self.data()).map_err(|e| io(&self.data(), e))?;
        for split in [Split::Train, Split::Val] {
            if !self.path(split).exists() {
                append_records(&self.path(split), self.dim, &[])?;
            }
        }
        self.refresh_manifest()
    }

    /// Appends to one split and rewrites the manifest.
    pub fn append(&self, split: Split, records: &[SampleRecord]) -> Result<Manifest, PipelineError> {
        self.init()?;
        append_records(&self.path(split), self.dim, records)?;
        self.refresh_manifest()
    }

    fn hash(&self) -> Result<String, PipelineError> {
        let mut h = Sha256::new();
        for split in [Split::Train, Split::Val] {
            let p = self.path(split);
            let bytes = fs::read(&p).map_err(|e| io(&p, e))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    fn refresh_manifest(&self) -> Result<Manifest, PipelineError> {
        let d = self.load_unchecked()?;
        let m = Manifest { version: VERSION, dim: self.dim, train: SourceCounts::of(&d.0), val: SourceCounts::of(&d.1), hash: self.hash()? };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(self.manifest_path(), text + "\n").map_err(|e| io(&self.manifest_path(), e))?;
        Ok(m)
    }

    fn load_unchecked(&self) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>), PipelineError> {
        Ok((load_records(&self.path(Split::Train))?, load_records(&self.path(Split::Val))?))
    }

    pub fn read_manifest(&self) -> Result<Manifest, PipelineError> {
        let p = self.manifest_path();
        let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))
    }

    /// Loads both splits and checks them against the stored manifest.
    pub fn load(&self) -> Result<Dataset, PipelineError> {
        let manifest = self.read_manifest()?;
        let (train, val) = self.load_unchecked()?;
        let hash = self.hash()?;
        if hash != manifest.hash || SourceCounts::of(&train) != manifest.train || SourceCounts::of(&val) != manifest.val {
            return Err(PipelineError::Io(format!("{}: manifest does not match the record files", self.manifest_path().display())));
        }
        Ok(Dataset { train, val, manifest })
    }
}
