//! Relay data frame codec.
//!
//! Wire layout (byte exact):
//!
//! ```text
//! +--------+------+-----------------+---------------------------+-----+
//! | 0xFF   | 0x50 | key_0 .. key_n  | escape(records)           | 0x00|
//! | header | sync | one byte / hop  | [node_id, raw_hi, raw_lo]*| end |
//! +--------+------+-----------------+---------------------------+-----+
//! ```
//!
//! The frame carries no length or key-count field, so the receiver decodes
//! against the key chain it expects from the static topology. Only the
//! payload region is escaped: `0x00`, `0xFF` and `0x7D` become
//! `0x7D, b ^ 0x20`. Keys never need escaping because [`AuthKey`] excludes
//! the two reserved structure bytes.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub const HEADER: u8 = 0xFF;
pub const SYNC: u8 = 80;
pub const END: u8 = 0x00;
pub const ESCAPE: u8 = 0x7D;
pub const ESCAPE_XOR: u8 = 0x20;

/// Bytes per record before escaping.
pub const RECORD_BYTES: usize = 3;

/// Lowest temperature the fixed-point record can carry, in °C.
pub const TEMP_MIN_C: f64 = -40.0;
/// Highest temperature the fixed-point record can carry, in °C.
pub const TEMP_MAX_C: f64 = 85.0;
/// Fixed-point resolution: raw units per °C.
pub const TEMP_SCALE: f64 = 256.0;
const RAW_MAX: u16 = 32000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad header: expected [255, 80], got {0:?}")]
    BadHeader(Vec<u8>),
    #[error("authentication mismatch at key position {position}: got {got}, want {want}")]
    AuthMismatch { position: usize, got: u8, want: u8 },
    #[error("truncated frame: no end byte")]
    TruncatedFrame,
    #[error("malformed escape at payload offset {offset}")]
    MalformedEscape { offset: usize },
    #[error("payload length {0} is not a multiple of {RECORD_BYTES}")]
    BadPayloadLength(usize),
    #[error("{0} trailing byte(s) after end byte")]
    TrailingBytes(usize),
    #[error("record out of range: {0}")]
    RecordOutOfRange(String),
    #[error("key {0} already present in key chain")]
    DuplicateKey(AuthKey),
    #[error("invalid authentication key {0}: 0 and 255 are reserved")]
    InvalidKey(u8),
    #[error("frame must carry at least one authentication key")]
    EmptyKeyChain,
}

/// Per-node authentication byte. 0x00 and 0xFF are reserved for framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthKey(u8);

impl AuthKey {
    pub fn new(value: u8) -> Result<Self, FrameError> {
        match value {
            END | HEADER => Err(FrameError::InvalidKey(value)),
            v => Ok(Self(v)),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for AuthKey {
    type Error = FrameError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl fmt::Display for AuthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One hop's sensor sample as carried in the payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRecord {
    pub node_id: u8,
    pub temperature_c: f64,
}

impl SensorRecord {
    pub fn new(node_id: u8, temperature_c: f64) -> Result<Self, FrameError> {
        let record = Self { node_id, temperature_c };
        record.raw()?;
        Ok(record)
    }

    /// 16-bit fixed-point form, `round((T + 40) * 256)`.
    pub fn raw(&self) -> Result<u16, FrameError> {
        if self.node_id == HEADER {
            return Err(FrameError::RecordOutOfRange(format!(
                "node id {} exceeds 254",
                self.node_id
            )));
        }
        let t = self.temperature_c;
        if !t.is_finite() || !(TEMP_MIN_C..=TEMP_MAX_C).contains(&t) {
            return Err(FrameError::RecordOutOfRange(format!(
                "temperature {t} °C outside [{TEMP_MIN_C}, {TEMP_MAX_C}]"
            )));
        }
        Ok(((t - TEMP_MIN_C) * TEMP_SCALE).round() as u16)
    }

    fn from_raw(node_id: u8, raw: u16) -> Result<Self, FrameError> {
        if node_id == HEADER || raw > RAW_MAX {
            return Err(FrameError::RecordOutOfRange(format!(
                "decoded node id {node_id}, raw temperature {raw}"
            )));
        }
        Ok(Self {
            node_id,
            temperature_c: f64::from(raw) / TEMP_SCALE + TEMP_MIN_C,
        })
    }

    /// The record as it reads back after a trip through the wire format.
    pub fn quantized(&self) -> Result<Self, FrameError> {
        Self::from_raw(self.node_id, self.raw()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    key_chain: Vec<AuthKey>,
    records: Vec<SensorRecord>,
}

impl Frame {
    pub fn new(key_chain: Vec<AuthKey>, records: Vec<SensorRecord>) -> Result<Self, FrameError> {
        if key_chain.is_empty() {
            return Err(FrameError::EmptyKeyChain);
        }
        for (i, key) in key_chain.iter().enumerate() {
            if key_chain[..i].contains(key) {
                return Err(FrameError::DuplicateKey(*key));
            }
        }
        Ok(Self { key_chain, records })
    }

    /// The frame an originator sends: its own key and reading.
    pub fn originate(key: AuthKey, record: SensorRecord) -> Self {
        Self {
            key_chain: vec![key],
            records: vec![record],
        }
    }

    pub fn key_chain(&self) -> &[AuthKey] {
        &self.key_chain
    }

    pub fn records(&self) -> &[SensorRecord] {
        &self.records
    }
}

pub fn escape_payload(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len() + raw.len() / 8);
    for &b in raw {
        if matches!(b, END | HEADER | ESCAPE) {
            out.push(ESCAPE);
            out.push(b ^ ESCAPE_XOR);
        } else {
            out.push(b);
        }
    }
    out
}

/// Inverse of [`escape_payload`]. Rejects unescaped reserved bytes and any
/// escape pair that does not decode to a reserved byte.
pub fn unescape_payload(escaped: &[u8]) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(escaped.len());
    let mut iter = escaped.iter().copied().enumerate();
    while let Some((offset, b)) = iter.next() {
        match b {
            ESCAPE => match iter.next() {
                Some((_, next)) if matches!(next ^ ESCAPE_XOR, END | HEADER | ESCAPE) => {
                    out.push(next ^ ESCAPE_XOR)
                }
                _ => return Err(FrameError::MalformedEscape { offset }),
            },
            END | HEADER => return Err(FrameError::MalformedEscape { offset }),
            b => out.push(b),
        }
    }
    Ok(out)
}

fn record_bytes(records: &[SensorRecord]) -> Result<Vec<u8>, FrameError> {
    let mut raw = Vec::with_capacity(records.len() * RECORD_BYTES);
    for record in records {
        let [hi, lo] = record.raw()?.to_be_bytes();
        raw.extend_from_slice(&[record.node_id, hi, lo]);
    }
    Ok(raw)
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let payload = escape_payload(&record_bytes(&frame.records)?);
    let mut out = Vec::with_capacity(3 + frame.key_chain.len() + payload.len());
    out.push(HEADER);
    out.push(SYNC);
    out.extend(frame.key_chain.iter().map(|k| k.value()));
    out.extend_from_slice(&payload);
    out.push(END);
    Ok(out)
}

pub fn decode_frame(bytes: &[u8], expected_keys: &[AuthKey]) -> Result<Frame, FrameError> {
    if bytes.len() < 2 || bytes[0] != HEADER || bytes[1] != SYNC {
        return Err(FrameError::BadHeader(bytes.iter().take(2).copied().collect()));
    }
    let body = &bytes[2..];
    for (position, want) in expected_keys.iter().enumerate() {
        let got = *body.get(position).ok_or(FrameError::TruncatedFrame)?;
        if got != want.value() {
            return Err(FrameError::AuthMismatch {
                position,
                got,
                want: want.value(),
            });
        }
    }
    let rest = &body[expected_keys.len()..];
    let end = rest
        .iter()
        .position(|&b| b == END)
        .ok_or(FrameError::TruncatedFrame)?;
    if end + 1 != rest.len() {
        return Err(FrameError::TrailingBytes(rest.len() - end - 1));
    }
    let payload = unescape_payload(&rest[..end])?;
    if payload.len() % RECORD_BYTES != 0 {
        return Err(FrameError::BadPayloadLength(payload.len()));
    }
    let records = payload
        .chunks_exact(RECORD_BYTES)
        .map(|c| SensorRecord::from_raw(c[0], u16::from_be_bytes([c[1], c[2]])))
        .collect::<Result<Vec<_>, _>>()?;
    Frame::new(expected_keys.to_vec(), records)
}

/// Extends a frame by one hop. The input frame is left untouched.
pub fn append_hop(frame: &Frame, key: AuthKey, record: SensorRecord) -> Result<Frame, FrameError> {
    if frame.key_chain.contains(&key) {
        return Err(FrameError::DuplicateKey(key));
    }
    let mut next = frame.clone();
    next.key_chain.push(key);
    next.records.push(record);
    Ok(next)
}

/// Upper bound on the encoded size of a frame with `keys` keys and
/// `records` records, every payload byte escaped.
pub fn max_frame_bytes(keys: usize, records: usize) -> usize {
    3 + keys + 2 * RECORD_BYTES * records
}

/// Bytes a frame occupies before any payload escaping.
pub fn unescaped_frame_bytes(keys: usize, records: usize) -> usize {
    3 + keys + RECORD_BYTES * records
}

/// Keys assigned to the nodes of a topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRegistry {
    keys: BTreeMap<u8, AuthKey>,
}

/// Keys of the first three relay-path nodes followed by two extra
/// values for the remaining nodes of a five-node line.
pub const DEFAULT_KEYS: [u8; 5] = [180, 170, 154, 140, 120];

impl KeyRegistry {
    pub fn new(entries: impl IntoIterator<Item = (u8, AuthKey)>) -> Result<Self, FrameError> {
        let mut keys = BTreeMap::new();
        for (node, key) in entries {
            if keys.values().any(|k| *k == key) {
                return Err(FrameError::DuplicateKey(key));
            }
            keys.insert(node, key);
        }
        Ok(Self { keys })
    }

    /// Nodes `0..DEFAULT_KEYS.len()` with [`DEFAULT_KEYS`].
    pub fn default_line() -> Self {
        let entries = DEFAULT_KEYS
            .iter()
            .enumerate()
            .map(|(i, &k)| (i as u8, AuthKey(k)));
        Self::new(entries).expect("default keys are distinct")
    }

    pub fn get(&self, node_id: u8) -> Option<AuthKey> {
        self.keys.get(&node_id).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}
