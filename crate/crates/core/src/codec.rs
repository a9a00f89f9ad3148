//! Prefix-decodable byte stream for a [`StreamableNet`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header:  "SNF1" | version u16 | in_dim u16 | out_dim u16 | depth u16 | K u16
//!          | K x stage width u32 | omega0 f64 | value scale f64 | value offset f64
//!          | precision u16 (0 = f64, 1 = f32) | CRC32(all preceding header bytes) u32
//! chunk k: stage index u16 (1-based) | payload length u64 | payload | CRC32(payload) u32
//! payload: for each hidden layer: lateral block, new-to-new block, bias segment;
//!          then the output block. Row-major floats.
//! ```
//!
//! The first layer's lateral block reads the input coordinates and it has no
//! new-to-new block. A stream holding the header and the first `k` chunks
//! decodes to the first `k` stages exactly.

use alloc::vec::Vec;
use core::fmt;

use crate::net::{ActivationConfig, LayerBlock, StageBlocks, StreamableNet, ValueMap};
use crate::tensor::Matrix;

pub const MAGIC: [u8; 4] = *b"SNF1";
pub const VERSION: u16 = 1;
/// Bytes of chunk framing around the payload.
pub const CHUNK_OVERHEAD: usize = 2 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    /// Halves the payload; lossy.
    F32,
}

impl Precision {
    fn code(self) -> u16 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    BadMagic([u8; 4]),
    UnsupportedVersion(u16),
    /// Input ended `needed` bytes short while reading the header (`stage` 0) or a chunk.
    Truncated {
        stage: usize,
        offset: usize,
        needed: usize,
    },
    /// Checksum mismatch; `stage` 0 is the header.
    Crc {
        stage: usize,
        stored: u32,
        computed: u32,
    },
    /// Structurally invalid content.
    Malformed {
        stage: usize,
        reason: &'static str,
    },
    /// Asked for more stages than the stream declares.
    StageOutOfRange {
        requested: usize,
        available: usize,
    },
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::BadMagic(m) => write!(f, "bad magic {m:02x?}, expected \"SNF1\""),
            DecodeError::UnsupportedVersion(v) => write!(f, "unsupported stream version {v}"),
            DecodeError::Truncated { stage: 0, offset, needed } => {
                write!(f, "header truncated at byte {offset} ({needed} more bytes needed)")
            }
            DecodeError::Truncated { stage, offset, needed } => {
                write!(f, "chunk {stage} truncated at byte {offset} ({needed} more bytes needed)")
            }
            DecodeError::Crc { stage: 0, stored, computed } => {
                write!(f, "header failed CRC check (stored {stored:08x}, computed {computed:08x})")
            }
            DecodeError::Crc { stage, stored, computed } => {
                write!(f, "chunk {stage} failed CRC check (stored {stored:08x}, computed {computed:08x})")
            }
            DecodeError::Malformed { stage: 0, reason } => write!(f, "malformed header: {reason}"),
            DecodeError::Malformed { stage, reason } => write!(f, "malformed chunk {stage}: {reason}"),
            DecodeError::StageOutOfRange { requested, available } => {
                write!(f, "requested {requested} stages but the stream has K = {available}")
            }
        }
    }
}

impl core::error::Error for DecodeError {}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub version: u16,
    pub in_dim: usize,
    pub out_dim: usize,
    pub depth: usize,
    pub stage_widths: Vec<usize>,
    pub omega0: f64,
    pub value_map: ValueMap,
    pub precision: Precision,
}

impl StreamHeader {
    pub fn for_net(net: &StreamableNet, precision: Precision) -> Self {
        StreamHeader {
            version: VERSION,
            in_dim: net.in_dim(),
            out_dim: net.out_dim(),
            depth: net.depth(),
            stage_widths: net.stage_widths().to_vec(),
            omega0: net.activation().omega0,
            value_map: net.value_map(),
            precision,
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_widths.len()
    }

    pub fn encoded_len(&self) -> usize {
        4 + 2 * 5 + 4 * self.stage_widths.len() + 8 * 3 + 2 + 4
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        for v in [self.in_dim, self.out_dim, self.depth, self.stage_widths.len()] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        for &w in &self.stage_widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.omega0.to_le_bytes());
        out.extend_from_slice(&self.value_map.scale.to_le_bytes());
        out.extend_from_slice(&self.value_map.offset.to_le_bytes());
        out.extend_from_slice(&self.precision.code().to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a header from the start of `bytes`, returning it and its length.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), DecodeError> {
        let mut r = Reader { bytes, pos: 0, stage: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(DecodeError::BadMagic(magic));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        let in_dim = r.u16()? as usize;
        let out_dim = r.u16()? as usize;
        let depth = r.u16()? as usize;
        let k = r.u16()? as usize;
        let malformed = |reason| DecodeError::Malformed { stage: 0, reason };
        if in_dim == 0 || out_dim == 0 || depth == 0 || k == 0 {
            return Err(malformed("zero dimension or stage count"));
        }
        let mut stage_widths = Vec::with_capacity(k);
        for _ in 0..k {
            stage_widths.push(r.u32()? as usize);
        }
        if stage_widths[0] == 0 || stage_widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(malformed("stage widths not strictly increasing"));
        }
        let omega0 = r.f64()?;
        let value_map = ValueMap { scale: r.f64()?, offset: r.f64()? };
        let precision_code = r.u16()?;
        let computed = crc32fast::hash(&bytes[..r.pos]);
        let stored = r.u32()?;
        if stored != computed {
            return Err(DecodeError::Crc { stage: 0, stored, computed });
        }
        if !omega0.is_finite() || omega0 <= 0.0 {
            return Err(malformed("omega0 must be positive"));
        }
        let precision = match precision_code {
            0 => Precision::F64,
            1 => Precision::F32,
            _ => return Err(malformed("unknown precision code")),
        };
        let header = StreamHeader { version, in_dim, out_dim, depth, stage_widths, omega0, value_map, precision };
        Ok((header, r.pos))
    }

    fn stage_shape(&self, idx: usize) -> StageBlocks {
        let prev = if idx == 0 { 0 } else { self.stage_widths[idx - 1] };
        StreamableNet::stage_shape(self.in_dim, self.out_dim, self.depth, prev, self.stage_widths[idx])
    }

    /// Payload bytes of stage `idx` (0-based).
    pub fn payload_len(&self, idx: usize) -> usize {
        self.stage_shape(idx).param_count() * self.precision.width()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    stage: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| DecodeError::Truncated {
            stage: self.stage,
            offset: self.bytes.len(),
            needed: self.pos.saturating_add(n) - self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn put(out: &mut Vec<u8>, values: &[f64], precision: Precision) {
    for &v in values {
        match precision {
            Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
}

fn stage_payload(blocks: &StageBlocks, prev: usize, precision: Precision) -> Vec<u8> {
    let mut out = Vec::with_capacity(blocks.param_count() * precision.width());
    for (layer, lb) in blocks.hidden.iter().enumerate() {
        let lateral = if layer == 0 { lb.weights.cols() } else { prev };
        for row in lb.weights.row_iter() {
            put(&mut out, &row[..lateral], precision);
        }
        for row in lb.weights.row_iter() {
            put(&mut out, &row[lateral..], precision);
        }
        put(&mut out, &lb.bias, precision);
    }
    put(&mut out, blocks.output.as_slice(), precision);
    out
}

/// Encodes stage `stage` (1-based) of `net` as a framed chunk.
pub fn encode_chunk(net: &StreamableNet, stage: usize, precision: Precision) -> Vec<u8> {
    let idx = stage - 1;
    let prev = if idx == 0 { 0 } else { net.stage_widths()[idx - 1] };
    let payload = stage_payload(net.stages()[idx].blocks(), prev, precision);
    let mut out = Vec::with_capacity(payload.len() + CHUNK_OVERHEAD);
    out.extend_from_slice(&(stage as u16).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

/// Header followed by every stage chunk, full precision.
pub fn pack(net: &StreamableNet) -> Vec<u8> {
    pack_with(net, Precision::F64)
}

pub fn pack_with(net: &StreamableNet, precision: Precision) -> Vec<u8> {
    let mut out = StreamHeader::for_net(net, precision).encode();
    for stage in 1..=net.num_stages() {
        out.extend_from_slice(&encode_chunk(net, stage, precision));
    }
    out
}

/// Splits a packed stream into its messages: the header, then one slice per
/// complete chunk. Chunk contents are not validated.
pub fn split_messages(bytes: &[u8]) -> Result<(StreamHeader, Vec<&[u8]>), DecodeError> {
    let (header, header_len) = StreamHeader::decode(bytes)?;
    let mut messages = alloc::vec![&bytes[..header_len]];
    let mut pos = header_len;
    for stage in 1..=header.num_stages() {
        let mut r = Reader { bytes, pos, stage };
        r.take(2)?;
        let len = r.u64()? as usize;
        r.take(len)?;
        r.take(4)?;
        messages.push(&bytes[pos..r.pos]);
        pos = r.pos;
    }
    Ok((header, messages))
}

/// Incremental decoder: feed the header, then chunks in stage order.
#[derive(Debug, Clone)]
pub struct StreamDecoder {
    header: StreamHeader,
    stages: Vec<StageBlocks>,
}

impl StreamDecoder {
    pub fn new(header_bytes: &[u8]) -> Result<(Self, usize), DecodeError> {
        let (header, len) = StreamHeader::decode(header_bytes)?;
        Ok((StreamDecoder { header, stages: Vec::new() }, len))
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn stages_decoded(&self) -> usize {
        self.stages.len()
    }

    /// Decodes the next chunk from the start of `bytes`, returning the bytes consumed.
    pub fn push_chunk(&mut self, bytes: &[u8]) -> Result<usize, DecodeError> {
        let idx = self.stages.len();
        let stage = idx + 1;
        if idx >= self.header.num_stages() {
            return Err(DecodeError::StageOutOfRange { requested: stage, available: self.header.num_stages() });
        }
        let mut r = Reader { bytes, pos: 0, stage };
        let declared = r.u16()? as usize;
        if declared != stage {
            return Err(DecodeError::Malformed { stage, reason: "chunk out of order" });
        }
        let len = r.u64()?;
        let expected = self.header.payload_len(idx);
        if len != expected as u64 {
            return Err(DecodeError::Malformed { stage, reason: "payload length does not match header" });
        }
        let payload = r.take(expected)?;
        let stored = r.u32()?;
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(DecodeError::Crc { stage, stored, computed });
        }
        self.stages.push(self.parse_payload(idx, payload));
        Ok(r.pos)
    }

    fn parse_payload(&self, idx: usize, payload: &[u8]) -> StageBlocks {
        let precision = self.header.precision;
        let mut values = payload.chunks_exact(precision.width()).map(|c| match precision {
            Precision::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
            Precision::F32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
        });
        let prev = if idx == 0 { 0 } else { self.header.stage_widths[idx - 1] };
        let mut blocks = self.header.stage_shape(idx);
        for (layer, LayerBlock { weights, bias }) in blocks.hidden.iter_mut().enumerate() {
            let lateral = if layer == 0 { weights.cols() } else { prev };
            fill_columns(weights, 0..lateral, &mut values);
            let cols = weights.cols();
            fill_columns(weights, lateral..cols, &mut values);
            bias.iter_mut().for_each(|b| *b = values.next().expect("sized payload"));
        }
        blocks.output.as_mut_slice().iter_mut().for_each(|v| *v = values.next().expect("sized payload"));
        blocks
    }

    /// The network made of every stage decoded so far.
    pub fn net(&self) -> Option<StreamableNet> {
        if self.stages.is_empty() {
            return None;
        }
        let h = &self.header;
        let activation = ActivationConfig { omega0: h.omega0 };
        Some(StreamableNet::from_parts(h.in_dim, h.out_dim, h.depth, activation, h.value_map, self.stages.clone()))
    }
}

fn fill_columns(m: &mut Matrix, cols: core::ops::Range<usize>, values: &mut impl Iterator<Item = f64>) {
    for r in 0..m.rows() {
        for c in cols.clone() {
            m[(r, c)] = values.next().expect("sized payload");
        }
    }
}

/// Decodes the first `k` stages of a packed stream.
pub fn decode_prefix(bytes: &[u8], k: usize) -> Result<StreamableNet, DecodeError> {
    let (mut dec, mut pos) = StreamDecoder::new(bytes)?;
    let available = dec.header().num_stages();
    if k == 0 || k > available {
        return Err(DecodeError::StageOutOfRange { requested: k, available });
    }
    for _ in 0..k {
        pos += dec.push_chunk(&bytes[pos..])?;
    }
    Ok(dec.net().expect("k >= 1 stages decoded"))
}
