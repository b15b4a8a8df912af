//! `WSNET001` model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic     "WSNET001"
//! u32       block count
//! per block:
//!   u32     name length, then the name bytes (UTF-8)
//!   u8      flag: 0 float32, 1 quantized 8-bit, 2 UTF-8 text
//!   u32     rank, then rank u32 dims
//!   payload float32 * n | u8 codes * n + float32 codebook * 256 | bytes * n
//! u32       CRC32 of everything before it
//! ```
//!
//! A model carries its network configuration as a text block named `config`,
//! followed by every learnable tensor and batch-norm statistic of the network.

use std::fs;
use std::path::Path;

use wsnet_core::nn::{Layer, Network};
use wsnet_core::quant::{dequantize, quantize, QuantizedBlock, LEVELS};

use crate::config::{parse_config, Config};
use crate::error::{Error, FormatError, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"WSNET001";
pub const CONFIG_BLOCK: &str = "config";

const FLAG_FLOAT: u8 = 0;
const FLAG_QUANTIZED: u8 = 1;
const FLAG_TEXT: u8 = 2;

/// Magic, block count and trailing checksum.
pub const FILE_OVERHEAD: u64 = 8 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Float(Vec<f32>),
    Quantized(QuantizedBlock),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<u32>,
    pub payload: Payload,
}

impl Block {
    fn elements(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }

    /// Stored learnable weights, as opposed to normalization state.
    pub fn is_weight(&self) -> bool {
        self.name.ends_with(".phi") || self.name.ends_with(".reduce")
    }

    pub fn values(&self) -> Option<Vec<f64>> {
        match &self.payload {
            Payload::Float(v) => Some(v.iter().map(|&x| f64::from(x)).collect()),
            Payload::Quantized(q) => Some(dequantize(q)),
            Payload::Text(_) => None,
        }
    }

    fn header_bytes(&self) -> u64 {
        4 + self.name.len() as u64 + 1 + 4 + 4 * self.shape.len() as u64
    }

    fn payload_bytes(&self, quantized: bool) -> u64 {
        let n = self.elements() as u64;
        match &self.payload {
            Payload::Text(s) => s.len() as u64,
            _ if quantized && self.is_weight() => n + 4 * LEVELS as u64,
            _ => 4 * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Model {
    pub blocks: Vec<Block>,
}

fn float_block(name: String, shape: Vec<usize>, values: &[f64]) -> Block {
    Block {
        name,
        shape: shape.into_iter().map(|d| d as u32).collect(),
        payload: Payload::Float(values.iter().map(|&v| v as f32).collect()),
    }
}

impl Model {
    /// Snapshot of `net` (weights narrowed to f32) with its configuration.
    pub fn from_network(net: &Network, config: &Config) -> Model {
        let text = config.to_string();
        let mut blocks = vec![Block {
            name: CONFIG_BLOCK.into(),
            shape: vec![text.len() as u32],
            payload: Payload::Text(text),
        }];
        for l in net.layers() {
            match &l.layer {
                Layer::Conv(c) | Layer::Fc(c) => {
                    let s = c.phi.spec();
                    blocks.push(float_block(
                        format!("{}.phi", l.name),
                        vec![s.condensed_len(), s.condensed_channels()],
                        c.phi.values(),
                    ));
                    if let Some(r) = &c.reduce {
                        blocks.push(float_block(
                            format!("{}.reduce", l.name),
                            vec![r.in_channels, r.out_channels],
                            &r.values,
                        ));
                    }
                }
                Layer::BatchNorm(bn) => {
                    let ch = bn.gamma.len();
                    for (suffix, v) in [
                        ("gamma", &bn.gamma),
                        ("beta", &bn.beta),
                        ("running_mean", &bn.running_mean),
                        ("running_var", &bn.running_var),
                    ] {
                        blocks.push(float_block(format!("{}.{suffix}", l.name), vec![ch], v));
                    }
                }
                Layer::Relu | Layer::MaxPool(_) | Layer::Dropout(_) => {}
            }
        }
        Model { blocks }
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn config(&self) -> Result<Config> {
        match self.block(CONFIG_BLOCK).map(|b| &b.payload) {
            Some(Payload::Text(t)) => parse_config(t),
            _ => Err(FormatError::MissingConfig.into()),
        }
    }

    /// Rebuilds the network. Every tensor the configuration implies must be present.
    pub fn to_network(&self) -> Result<(Network, Config)> {
        let config = self.config()?;
        let mut net = Network::from_spec(&config.network, 0.0, config.train.seed)?;
        let expected: Vec<String> = net
            .params()
            .iter()
            .chain(net.buffers().iter())
            .map(|p| p.full_name())
            .collect();
        for name in &expected {
            let block = self
                .block(name)
                .ok_or_else(|| FormatError::Block(name.clone(), "missing"))?;
            let values = block
                .values()
                .ok_or_else(|| FormatError::Block(name.clone(), "expected numeric payload"))?;
            net.set_block(name, &values)?;
        }
        if let Some(extra) = self
            .blocks
            .iter()
            .find(|b| b.name != CONFIG_BLOCK && !expected.contains(&b.name))
        {
            return Err(FormatError::Block(extra.name.clone(), "not part of the network").into());
        }
        Ok((net, config))
    }

    pub fn is_quantized(&self) -> bool {
        self.blocks.iter().any(|b| matches!(b.payload, Payload::Quantized(_)))
    }

    /// Count of values in weight blocks.
    pub fn weight_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_weight()).map(Block::elements).sum()
    }

    /// Bytes taken by the weight tensors, stored as float32 (`quantized =
    /// false`) or as 8-bit codes plus a codebook, with their headers and the
    /// file framing. Normalization state and the config text are left out.
    pub fn size_report(&self, quantized: bool) -> u64 {
        self.bytes_of(quantized, |b| b.is_weight())
    }

    /// Exact encoded file length under the same storage choice.
    pub fn encoded_len(&self, quantized: bool) -> u64 {
        self.bytes_of(quantized, |_| true)
    }

    fn bytes_of(&self, quantized: bool, keep: impl Fn(&Block) -> bool) -> u64 {
        FILE_OVERHEAD
            + self
                .blocks
                .iter()
                .filter(|b| keep(b))
                .map(|b| b.header_bytes() + b.payload_bytes(quantized))
                .sum::<u64>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len(self.is_quantized()) as usize);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(match b.payload {
                Payload::Float(_) => FLAG_FLOAT,
                Payload::Quantized(_) => FLAG_QUANTIZED,
                Payload::Text(_) => FLAG_TEXT,
            });
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for d in &b.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &b.payload {
                Payload::Float(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::Quantized(q) => {
                    out.extend_from_slice(q.codes());
                    for &c in q.codebook() {
                        out.extend_from_slice(&(c as f32).to_le_bytes());
                    }
                }
                Payload::Text(s) => out.extend_from_slice(s.as_bytes()),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        if bytes.len() < MODEL_MAGIC.len() || &bytes[..8] != MODEL_MAGIC {
            return Err(FormatError::BadMagic { expected: "WSNET001" }.into());
        }
        let mut r = Reader { bytes, pos: 8 };
        let count = r.u32("block count")?;
        let mut blocks = Vec::new();
        for _ in 0..count {
            let name_len = r.u32("block name")? as usize;
            let name = String::from_utf8(r.take(name_len, "block name")?.to_vec())
                .map_err(|_| FormatError::Utf8("block name"))?;
            let flag = r.take(1, "block flag")?[0];
            let rank = r.u32("block shape")? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u32("block shape")?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or(FormatError::Truncated { what: "block payload" })?;
            let payload = match flag {
                FLAG_FLOAT => {
                    let raw = r.take(n.checked_mul(4).ok_or(FormatError::Truncated { what: "block payload" })?, "block payload")?;
                    Payload::Float(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
                }
                FLAG_QUANTIZED => {
                    let codes = r.take(n, "block payload")?.to_vec();
                    let book = r.take(4 * LEVELS, "codebook")?;
                    let codebook = book
                        .chunks_exact(4)
                        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                        .collect();
                    let q = QuantizedBlock::from_parts(codes, codebook)
                        .map_err(|_| FormatError::Block(name.clone(), "invalid codebook"))?;
                    Payload::Quantized(q)
                }
                FLAG_TEXT => {
                    let raw = r.take(n, "block payload")?;
                    Payload::Text(String::from_utf8(raw.to_vec()).map_err(|_| FormatError::Utf8("text block"))?)
                }
                other => return Err(FormatError::BadFlag(other).into()),
            };
            blocks.push(Block { name, shape, payload });
        }
        let body = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(FormatError::Size {
                what: "model file",
                expected: r.pos as u64,
                found: bytes.len() as u64,
            }
            .into());
        }
        let computed = crc32fast::hash(&bytes[..body]);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed }.into());
        }
        Ok(Model { blocks })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(FormatError::Truncated { what })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Copy of `model` with every weight block stored as 8-bit codes.
/// Batch-norm tensors stay float.
pub fn quantize_model(model: &Model) -> Result<Model> {
    if model.is_quantized() {
        return Err(FormatError::AlreadyQuantized.into());
    }
    let mut out = model.clone();
    for b in out.blocks.iter_mut().filter(|b| b.is_weight()) {
        let Payload::Float(v) = &b.payload else { continue };
        let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let q = quantize(&wide)?;
        // store the codebook at file precision so that save/load is exact
        let book = q.codebook().iter().map(|&c| f64::from(c as f32)).collect();
        let q = QuantizedBlock::from_parts(q.codes().to_vec(), book)?;
        b.payload = Payload::Quantized(q);
    }
    Ok(out)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NET: &str = "\
[network]
input_len = 64

[layer conv1]
kind = conv
L = 8
N = 8
S = 2
D = 2
stride = 2
bn = true
pool = max
pool_k = 2

[layer fc]
kind = fc
N = 3
S = 4
";

    fn sample() -> (Network, Model) {
        let cfg = parse_config(NET).unwrap();
        let net = Network::from_spec(&cfg.network, 0.1, 7).unwrap();
        let model = Model::from_network(&net, &cfg);
        (net, model)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (_, model) = sample();
        let back = Model::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
        let q = quantize_model(&model).unwrap();
        assert_eq!(Model::from_bytes(&q.to_bytes()).unwrap(), q);
    }

    #[test]
    fn network_survives_serialization() {
        let (net, model) = sample();
        let (back, _) = Model::from_bytes(&model.to_bytes()).unwrap().to_network().unwrap();
        for (a, b) in net.params().iter().zip(back.params()) {
            assert_eq!(a.full_name(), b.full_name());
            for (x, y) in a.values.iter().zip(b.values) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn encoded_length_is_exact() {
        let (_, model) = sample();
        assert_eq!(model.to_bytes().len() as u64, model.encoded_len(false));
        let q = quantize_model(&model).unwrap();
        assert_eq!(q.to_bytes().len() as u64, model.encoded_len(true));
        assert_eq!(q.encoded_len(false), model.encoded_len(false));
    }

    #[test]
    fn size_report_counts_weight_blocks_only() {
        let (_, model) = sample();
        let weights = Model {
            blocks: model.blocks.iter().filter(|b| b.is_weight()).cloned().collect(),
        };
        assert!(weights.blocks.len() < model.blocks.len());
        for q in [false, true] {
            assert_eq!(model.size_report(q), weights.encoded_len(q));
        }
    }

    #[test]
    fn empty_model_is_header_only() {
        let m = Model::default();
        assert_eq!(m.to_bytes().len() as u64, FILE_OVERHEAD);
        assert_eq!(m.size_report(true), FILE_OVERHEAD);
        assert_eq!(m.encoded_len(false), FILE_OVERHEAD);
    }

    #[test]
    fn two_small_blocks_cost_codes_plus_codebooks() {
        let block = |name: &str| Block {
            name: name.into(),
            shape: vec![512],
            payload: Payload::Float(vec![0.5; 512]),
        };
        let m = Model {
            blocks: vec![block("a.phi"), block("b.phi")],
        };
        let headers: u64 = m.blocks.iter().map(Block::header_bytes).sum::<u64>() + FILE_OVERHEAD;
        assert_eq!(m.size_report(true) - headers, 1024 + 2048);
        assert_eq!(m.size_report(false) - headers, 4096);
    }

    #[test]
    fn flags_distinguish_quantized_files() {
        let (_, model) = sample();
        let q = quantize_model(&model).unwrap();
        let flags = |bytes: &[u8]| -> Vec<u8> {
            // walk the headers by hand
            let mut pos = 12;
            let mut out = Vec::new();
            let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
            for _ in 0..count {
                let nl = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                pos += 4 + nl;
                let flag = bytes[pos];
                out.push(flag);
                pos += 1;
                let rank = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                pos += 4;
                let mut n = 1usize;
                for _ in 0..rank {
                    n *= u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
                    pos += 4;
                }
                pos += match flag {
                    0 => 4 * n,
                    1 => n + 1024,
                    _ => n,
                };
            }
            assert_eq!(pos + 4, bytes.len());
            out
        };
        assert!(!flags(&model.to_bytes()).contains(&1));
        assert!(flags(&q.to_bytes()).contains(&1));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (_, model) = sample();
        let bytes = model.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad), Err(Error::Format(FormatError::BadMagic { .. }))));
        assert!(matches!(
            Model::from_bytes(&bytes[..bytes.len() - 9]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
        let mut flipped = bytes.clone();
        let mid = bytes.len() - 20;
        flipped[mid] ^= 0x40;
        assert!(matches!(Model::from_bytes(&flipped), Err(Error::Format(FormatError::Checksum { .. }))));
    }

    #[test]
    fn double_quantization_is_refused() {
        let (_, model) = sample();
        let q = quantize_model(&model).unwrap();
        assert!(matches!(quantize_model(&q), Err(Error::Format(FormatError::AlreadyQuantized))));
    }

    #[test]
    fn missing_tensor_is_named() {
        let (_, mut model) = sample();
        model.blocks.retain(|b| b.name != "fc.phi");
        match model.to_network() {
            Err(Error::Format(FormatError::Block(name, _))) => assert_eq!(name, "fc.phi"),
            other => panic!("{other:?}"),
        }
    }
}
