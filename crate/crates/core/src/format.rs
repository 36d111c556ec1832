//! PRMG token-dump files.
//!
//! Layout, all little-endian, no padding:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `b"PRMG"`               |
//! | 4      | 4    | version, `u32` = 1            |
//! | 8      | 24   | `n, d, d_k, n_heads, h, w` as `u32` |
//! | 32     | ...  | `q_cls` `[n_heads][d_k]` `f32` |
//! |        |      | `K` `[n_heads][n][d_k]` `f32`  |
//! |        |      | `Y` `[n][d]` `f32`             |
//!
//! Readers reject bad magic, other versions, zero dimensions, `h * w != n`,
//! short or over-long payloads and non-finite values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tokens::TokenSet;

pub const MAGIC: [u8; 4] = *b"PRMG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenDumpHeader {
    pub version: u32,
    pub n: u32,
    pub d: u32,
    pub d_k: u32,
    pub n_heads: u32,
    pub h: u32,
    pub w: u32,
}

impl TokenDumpHeader {
    pub fn for_tokens(tokens: &TokenSet) -> Result<Self> {
        let to_u32 = |field: &'static str, v: usize| {
            u32::try_from(v)
                .map_err(|_| Error::invalid(format!("`{field}` = {v} does not fit in u32")))
        };
        let (h, w) = tokens.grid();
        Ok(Self {
            version: VERSION,
            n: to_u32("n", tokens.n())?,
            d: to_u32("d", tokens.d())?,
            d_k: to_u32("d_k", tokens.d_k())?,
            n_heads: to_u32("n_heads", tokens.n_heads())?,
            h: to_u32("h", h)?,
            w: to_u32("w", w)?,
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        let fields = [
            self.version,
            self.n,
            self.d,
            self.d_k,
            self.n_heads,
            self.h,
            self.w,
        ];
        for (chunk, v) in out[4..].chunks_exact_mut(4).zip(fields) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses and validates the fixed header.
    pub fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let header = Self {
            version: word(0),
            n: word(1),
            d: word(2),
            d_k: word(3),
            n_heads: word(4),
            h: word(5),
            w: word(6),
        };
        if header.version != VERSION {
            return Err(FormatError::UnsupportedVersion(header.version));
        }
        for (name, v) in [
            ("n", header.n),
            ("d", header.d),
            ("d_k", header.d_k),
            ("n_heads", header.n_heads),
            ("h", header.h),
            ("w", header.w),
        ] {
            if v == 0 {
                return Err(FormatError::ZeroDimension(name));
            }
        }
        if header.h as u64 * header.w as u64 != header.n as u64 {
            return Err(FormatError::GridMismatch {
                n: header.n,
                h: header.h,
                w: header.w,
            });
        }
        Ok(header)
    }

    /// Element counts of `q_cls`, `K` and `Y`.
    pub fn section_lens(&self) -> Result<[usize; 3], FormatError> {
        let (n, d, d_k, heads) = (
            self.n as usize,
            self.d as usize,
            self.d_k as usize,
            self.n_heads as usize,
        );
        let q = heads
            .checked_mul(d_k)
            .ok_or(FormatError::SizeOverflow("q_cls"))?;
        let k = q.checked_mul(n).ok_or(FormatError::SizeOverflow("keys"))?;
        let y = n.checked_mul(d).ok_or(FormatError::SizeOverflow("y"))?;
        Ok([q, k, y])
    }

    pub fn payload_bytes(&self) -> Result<usize, FormatError> {
        let [q, k, y] = self.section_lens()?;
        q.checked_add(k)
            .and_then(|v| v.checked_add(y))
            .and_then(|v| v.checked_mul(4))
            .ok_or(FormatError::SizeOverflow("payload"))
    }
}

pub fn encode(tokens: &TokenSet) -> Result<Vec<u8>> {
    let header = TokenDumpHeader::for_tokens(tokens)?;
    let payload = tokens.q_cls().len() + tokens.keys().len() + tokens.y().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload);
    out.extend_from_slice(&header.to_bytes());
    for v in tokens.q_cls().iter().chain(tokens.keys()).chain(tokens.y()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TokenSet> {
    let header = TokenDumpHeader::parse(bytes)?;
    let expected = HEADER_LEN
        .checked_add(header.payload_bytes()?)
        .ok_or(FormatError::SizeOverflow("payload"))?;
    if bytes.len() < expected {
        return Err(FormatError::TruncatedPayload {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    let [q_len, k_len, _] = header.section_lens()?;
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let q_cls: Vec<f32> = floats.by_ref().take(q_len).collect();
    let keys: Vec<f32> = floats.by_ref().take(k_len).collect();
    let y: Vec<f32> = floats.collect();
    for (name, data) in [("q_cls", &q_cls), ("keys", &keys), ("y", &y)] {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(name).into());
        }
    }
    TokenSet::new(
        (header.h as usize, header.w as usize),
        header.d as usize,
        header.d_k as usize,
        header.n_heads as usize,
        q_cls,
        keys,
        y,
    )
}

/// Writes a dump and returns the number of bytes written.
pub fn write_token_dump<W: Write>(tokens: &TokenSet, mut out: W) -> Result<usize> {
    let bytes = encode(tokens)?;
    out.write_all(&bytes)
        .map_err(|e| Error::io("<writer>", e))?;
    Ok(bytes.len())
}

pub fn read_token_dump<R: Read>(mut source: R) -> Result<TokenSet> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    decode(&bytes)
}

pub fn write_token_dump_file(tokens: &TokenSet, path: &Path) -> Result<usize> {
    let bytes = encode(tokens)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn read_token_dump_file(path: &Path) -> Result<TokenSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
