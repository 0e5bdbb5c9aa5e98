//! NVX: a small checksummed binary container for occupancy and latent sets.
//!
//! Layout, all integers little-endian:
//!
//! | field      | size               | notes                          |
//! |------------|--------------------|--------------------------------|
//! | magic      | 4                  | `b"NVX1"`                      |
//! | kind       | u8                 | 0 = occupancy, 1 = latent      |
//! | resolution | u16                |                                |
//! | count      | u32                | number of coordinates          |
//! | channels   | u16                | latent kind only               |
//! | coords     | count * 3 * u16    | x, y, z in linear-index order  |
//! | latents    | count * C * f32    | latent kind only, same order   |
//! | crc        | u32                | CRC-32 of all preceding bytes  |

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{SparseStructure, StructuredLatent, VoxelCoord, VoxelError};

pub const MAGIC: [u8; 3] = *b"NVX";
pub const VERSION: u8 = b'1';
const FIXED_HEADER: usize = 11;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum NvxError {
    #[error("not an NVX file (bad magic)")]
    BadMagic,
    #[error("unsupported NVX version byte {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("unknown payload kind {0}")]
    UnknownKind(u8),
    #[error("file truncated: need {needed} bytes, have {available}")]
    TruncatedFile { needed: usize, available: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid payload: {0}")]
    InvalidPayload(#[from] VoxelError),
    #[error("{count} coordinates exceed the format limit")]
    TooManyCoords { count: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NvxKind {
    Occupancy,
    Latent,
}

impl NvxKind {
    fn tag(self) -> u8 {
        match self {
            NvxKind::Occupancy => 0,
            NvxKind::Latent => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NvxPayload {
    Occupancy(SparseStructure),
    Latent(StructuredLatent),
}

impl NvxPayload {
    pub fn kind(&self) -> NvxKind {
        match self {
            NvxPayload::Occupancy(_) => NvxKind::Occupancy,
            NvxPayload::Latent(_) => NvxKind::Latent,
        }
    }

    /// Occupancy of either kind.
    pub fn structure(&self) -> SparseStructure {
        match self {
            NvxPayload::Occupancy(s) => s.clone(),
            NvxPayload::Latent(z) => z.structure(),
        }
    }
}

impl From<SparseStructure> for NvxPayload {
    fn from(s: SparseStructure) -> Self {
        NvxPayload::Occupancy(s)
    }
}

impl From<StructuredLatent> for NvxPayload {
    fn from(z: StructuredLatent) -> Self {
        NvxPayload::Latent(z)
    }
}

/// Self-description of an NVX file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NvxHeader {
    pub kind: NvxKind,
    pub resolution: u16,
    pub count: u32,
    pub channels: Option<u16>,
    pub byte_len: usize,
}

pub fn encode(payload: &NvxPayload) -> Vec<u8> {
    try_encode(payload).expect("payload exceeds the NVX coordinate limit")
}

pub fn try_encode(payload: &NvxPayload) -> Result<Vec<u8>, NvxError> {
    let (resolution, coords, latent) = match payload {
        NvxPayload::Occupancy(s) => (s.resolution(), s.coords(), None),
        NvxPayload::Latent(z) => (z.resolution(), z.coords(), Some(z)),
    };
    let count = u32::try_from(coords.len())
        .map_err(|_| NvxError::TooManyCoords { count: coords.len() })?;
    let channels = latent.map_or(0, |z| z.channels());
    let mut out = Vec::with_capacity(
        FIXED_HEADER + 2 + coords.len() * (6 + 4 * channels) + CRC_LEN,
    );
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(payload.kind().tag());
    out.extend_from_slice(&resolution.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    if let Some(z) = latent {
        out.extend_from_slice(&(z.channels() as u16).to_le_bytes());
    }
    for c in coords {
        for v in c.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(z) = latent {
        for v in z.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses and validates the header, including total length, without
/// checking the checksum.
pub fn decode_header(bytes: &[u8]) -> Result<NvxHeader, NvxError> {
    let truncated = |needed| NvxError::TruncatedFile { needed, available: bytes.len() };
    if bytes.len() < 4 {
        return Err(if MAGIC.starts_with(bytes) { truncated(FIXED_HEADER + CRC_LEN) } else { NvxError::BadMagic });
    }
    if bytes[..3] != MAGIC {
        return Err(NvxError::BadMagic);
    }
    if bytes[3] != VERSION {
        return Err(NvxError::UnsupportedVersion(bytes[3]));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(truncated(FIXED_HEADER + CRC_LEN));
    }
    let kind = match bytes[4] {
        0 => NvxKind::Occupancy,
        1 => NvxKind::Latent,
        other => return Err(NvxError::UnknownKind(other)),
    };
    let resolution = u16::from_le_bytes([bytes[5], bytes[6]]);
    let count = u32::from_le_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]);
    let (header_len, channels) = match kind {
        NvxKind::Occupancy => (FIXED_HEADER, None),
        NvxKind::Latent => {
            if bytes.len() < FIXED_HEADER + 2 {
                return Err(truncated(FIXED_HEADER + 2 + CRC_LEN));
            }
            (FIXED_HEADER + 2, Some(u16::from_le_bytes([bytes[11], bytes[12]])))
        }
    };
    let n = count as usize;
    let per_coord = 6 + 4 * usize::from(channels.unwrap_or(0));
    let byte_len = header_len + n * per_coord + CRC_LEN;
    if bytes.len() < byte_len {
        return Err(truncated(byte_len));
    }
    if bytes.len() > byte_len {
        return Err(NvxError::TrailingBytes(bytes.len() - byte_len));
    }
    Ok(NvxHeader { kind, resolution, count, channels, byte_len })
}

pub fn decode(bytes: &[u8]) -> Result<NvxPayload, NvxError> {
    let header = decode_header(bytes)?;
    let body_end = header.byte_len - CRC_LEN;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(NvxError::ChecksumMismatch { stored, computed });
    }

    let n = header.count as usize;
    let mut pos = match header.kind {
        NvxKind::Occupancy => FIXED_HEADER,
        NvxKind::Latent => FIXED_HEADER + 2,
    };
    let mut coords = Vec::with_capacity(n);
    for chunk in bytes[pos..pos + 6 * n].chunks_exact(6) {
        let v = |i: usize| u16::from_le_bytes([chunk[i], chunk[i + 1]]);
        coords.push(VoxelCoord::new(v(0), v(2), v(4)));
    }
    pos += 6 * n;
    match header.channels {
        None => Ok(NvxPayload::Occupancy(SparseStructure::from_sorted(coords, header.resolution)?)),
        Some(c) => {
            let values = bytes[pos..body_end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            Ok(NvxPayload::Latent(StructuredLatent::from_parts(
                coords,
                values,
                usize::from(c),
                header.resolution,
            )?))
        }
    }
}

pub fn write_nvx(path: impl AsRef<Path>, payload: &NvxPayload) -> Result<(), NvxError> {
    let path = path.as_ref();
    let bytes = try_encode(payload)?;
    fs::write(path, bytes).map_err(|source| NvxError::Io { path: path.to_path_buf(), source })
}

pub fn read_nvx(path: impl AsRef<Path>) -> Result<NvxPayload, NvxError> {
    decode(&read_bytes(path.as_ref())?)
}

pub fn read_header(path: impl AsRef<Path>) -> Result<NvxHeader, NvxError> {
    decode_header(&read_bytes(path.as_ref())?)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, NvxError> {
    fs::read(path).map_err(|source| NvxError::Io { path: path.to_path_buf(), source })
}
