//! Binary weight container: magic, format version, the architecture config,
//! and named parameter blocks, with an optional optimizer section for
//! training checkpoints. All integers and floats are little-endian.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::config::NeuFlowConfig;
use crate::layers::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"NFLW";
pub const VERSION: u32 = 1;

const SECTION_END: u8 = 0;
const SECTION_OPTIMIZER: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    Corrupt(String),
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a weight checkpoint (bad magic)"),
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint version {v}")
            }
            CheckpointError::Truncated => write!(f, "checkpoint is truncated"),
            CheckpointError::Corrupt(msg) => write!(f, "corrupt checkpoint: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CheckpointError {}

/// Optimizer half of a training checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSnapshot {
    pub step: u64,
    pub best_val_epe: Option<f64>,
    /// First and second moments, aligned with the parameter order.
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

pub fn encode_model(cfg: &NeuFlowConfig, params: &ParamStore<f32>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    encode_config(&mut w, cfg);
    w.u32(params.len() as u32);
    for entry in params.entries() {
        w.string(&entry.name);
        encode_tensor(&mut w, &entry.value);
    }
    w.u8(SECTION_END);
    w.into_bytes()
}

pub fn encode_train(
    cfg: &NeuFlowConfig,
    params: &ParamStore<f32>,
    opt: &OptimizerSnapshot,
) -> Vec<u8> {
    let mut bytes = encode_model(cfg, params);
    // Replace the end marker with the optimizer section.
    bytes.pop();
    let mut w = Writer { buf: bytes };
    w.u8(SECTION_OPTIMIZER);
    w.u64(opt.step);
    match opt.best_val_epe {
        Some(e) => {
            w.u8(1);
            w.f64(e);
        }
        None => w.u8(0),
    }
    assert_eq!(opt.m.len(), params.len());
    assert_eq!(opt.v.len(), params.len());
    for t in opt.m.iter().chain(opt.v.iter()) {
        encode_tensor(&mut w, t);
    }
    w.u8(SECTION_END);
    w.into_bytes()
}

pub struct DecodedCheckpoint {
    pub config: NeuFlowConfig,
    pub weights: Vec<(String, Tensor<f32>)>,
    pub optimizer: Option<OptimizerSnapshot>,
}

pub fn decode(bytes: &[u8]) -> Result<DecodedCheckpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config = decode_config(&mut r)?;
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(format!("config: {e}")))?;
    let n = r.u32()? as usize;
    if n > 1_000_000 {
        return Err(CheckpointError::Corrupt("absurd parameter count".into()));
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let tensor = decode_tensor(&mut r)?;
        weights.push((name, tensor));
    }
    let optimizer = match r.u8()? {
        SECTION_END => None,
        SECTION_OPTIMIZER => {
            let step = r.u64()?;
            let best_val_epe = match r.u8()? {
                0 => None,
                1 => Some(r.f64()?),
                b => return Err(CheckpointError::Corrupt(format!("bad epe flag {b}"))),
            };
            let mut m = Vec::with_capacity(n);
            for _ in 0..n {
                m.push(decode_tensor(&mut r)?);
            }
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(decode_tensor(&mut r)?);
            }
            if r.u8()? != SECTION_END {
                return Err(CheckpointError::Corrupt("missing end marker".into()));
            }
            Some(OptimizerSnapshot {
                step,
                best_val_epe,
                m,
                v,
            })
        }
        s => return Err(CheckpointError::Corrupt(format!("unknown section {s}"))),
    };
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(DecodedCheckpoint {
        config,
        weights,
        optimizer,
    })
}

fn encode_config(w: &mut Writer, cfg: &NeuFlowConfig) {
    w.u32(cfg.feature_dim as u32);
    w.u32(cfg.per_level_channels.len() as u32);
    for &c in &cfg.per_level_channels {
        w.u32(c as u32);
    }
    w.u32(cfg.fusion_width as u32);
    w.u32(cfg.merge_width as u32);
    w.u32(cfg.upsample_branch_dim as u32);
    w.u32(cfg.cross_attention_layers as u32);
    w.u32(cfg.self_attention_layers as u32);
    w.u32(cfg.ffn_dim as u32);
    w.f64(cfg.attention_temperature);
    w.u32(cfg.correlation_radius as u32);
    w.u32(cfg.refinement_depth as u32);
    w.u32(cfg.refinement_width as u32);
    w.u32(cfg.mask_head_width as u32);
    w.u32(cfg.norm_groups as u32);
    w.u64(cfg.seed);
}

fn decode_config(r: &mut Reader) -> Result<NeuFlowConfig, CheckpointError> {
    let feature_dim = r.u32()? as usize;
    let levels = r.u32()? as usize;
    if levels != 5 {
        return Err(CheckpointError::Corrupt(format!("{levels} pyramid levels")));
    }
    let mut per_level_channels = Vec::with_capacity(levels);
    for _ in 0..levels {
        per_level_channels.push(r.u32()? as usize);
    }
    Ok(NeuFlowConfig {
        feature_dim,
        per_level_channels,
        fusion_width: r.u32()? as usize,
        merge_width: r.u32()? as usize,
        upsample_branch_dim: r.u32()? as usize,
        cross_attention_layers: r.u32()? as usize,
        self_attention_layers: r.u32()? as usize,
        ffn_dim: r.u32()? as usize,
        attention_temperature: r.f64()?,
        correlation_radius: r.u32()? as usize,
        refinement_depth: r.u32()? as usize,
        refinement_width: r.u32()? as usize,
        mask_head_width: r.u32()? as usize,
        norm_groups: r.u32()? as usize,
        seed: r.u64()?,
    })
}

fn encode_tensor(w: &mut Writer, t: &Tensor<f32>) {
    let shape = t.shape();
    let dims = shape.dims();
    w.u8(dims.len() as u8);
    for &d in dims {
        w.u32(d as u32);
    }
    for &v in t.data() {
        w.u32(v.to_bits());
    }
}

fn decode_tensor(r: &mut Reader) -> Result<Tensor<f32>, CheckpointError> {
    let rank = r.u8()? as usize;
    if rank == 0 || rank > crate::tensor::MAX_RANK {
        return Err(CheckpointError::Corrupt(format!("tensor rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(CheckpointError::Corrupt("zero tensor dim".into()));
        }
        dims.push(d);
    }
    let shape = Shape::new(&dims);
    let numel = shape.numel();
    if numel > 100_000_000 {
        return Err(CheckpointError::Corrupt("absurd tensor size".into()));
    }
    let mut data = vec![0f32; numel];
    for v in &mut data {
        *v = f32::from_bits(r.u32()?);
    }
    Ok(Tensor::from_vec(shape, data))
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        assert!(s.len() <= u16::MAX as usize);
        self.buf.extend_from_slice(&(s.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()) as usize;
        let raw = self.bytes(len)?;
        core::str::from_utf8(raw)
            .map(|s| s.to_string())
            .map_err(|_| CheckpointError::Corrupt("non-utf8 name".into()))
    }
}

/// Installs decoded weights into a freshly built parameter store; the name
/// sets must match exactly.
pub fn install_weights(
    store: &mut ParamStore<f32>,
    weights: Vec<(String, Tensor<f32>)>,
) -> Result<(), CheckpointError> {
    if weights.len() != store.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameters, found {}",
            store.len(),
            weights.len()
        )));
    }
    for (name, tensor) in weights {
        let id = store
            .find(&name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("unknown parameter {name}")))?;
        if store.get(id).shape() != tensor.shape() {
            return Err(CheckpointError::Corrupt(format!(
                "shape mismatch for {name}: {:?} vs {:?}",
                store.get(id).shape(),
                tensor.shape()
            )));
        }
        store.set(id, tensor);
    }
    Ok(())
}
