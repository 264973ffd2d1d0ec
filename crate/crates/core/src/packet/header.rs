// Copyright 2026 The fhsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Fixed 8-byte fronthaul packet header.
//!
//! ```text
//!  0               1               2               3
//! +-------+-------+-------+-------+-------+-------+-------+-------+
//! |     label     |      seq      |cls|flg|  payload_len  |  hec  |
//! +-------+-------+-------+-------+-------+-------+-------+-------+
//! ```
//!
//! All multi-byte fields are big-endian. `cls` and `flg` are the high and
//! low nibble of byte 4. `hec` is the XOR of bytes 0..7.

use thiserror::Error;

pub const HEADER_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeaderError {
    #[error("header must be {HEADER_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error("header check byte mismatch: computed {computed:#04x}, found {found:#04x}")]
    BadCheck { computed: u8, found: u8 },
    #[error("{field} value {value} does not fit in 4 bits")]
    NibbleOverflow { field: &'static str, value: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct FhHeader {
    /// Label of the virtual circuit on the current hop.
    pub label: u16,
    /// Per-circuit packet counter, wrapping.
    pub seq: u16,
    /// 0 is the most urgent class.
    pub latency_class: u8,
    pub flags: u8,
    pub payload_len: u16,
}

impl FhHeader {
    pub fn new(label: u16, seq: u16, latency_class: u8, flags: u8, payload_len: u16) -> Result<Self, HeaderError> {
        let h = FhHeader {
            label,
            seq,
            latency_class,
            flags,
            payload_len,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), HeaderError> {
        if self.latency_class > 0xF {
            return Err(HeaderError::NibbleOverflow {
                field: "latency_class",
                value: self.latency_class,
            });
        }
        if self.flags > 0xF {
            return Err(HeaderError::NibbleOverflow {
                field: "flags",
                value: self.flags,
            });
        }
        Ok(())
    }
}

fn check_byte(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

/// Nibble fields are masked to 4 bits; use [`FhHeader::new`] to reject
/// out-of-range values up front.
pub fn serialize_header(h: &FhHeader) -> [u8; HEADER_LEN] {
    let mut out = [0u8; HEADER_LEN];
    out[0..2].copy_from_slice(&h.label.to_be_bytes());
    out[2..4].copy_from_slice(&h.seq.to_be_bytes());
    out[4] = (h.latency_class & 0xF) << 4 | (h.flags & 0xF);
    out[5..7].copy_from_slice(&h.payload_len.to_be_bytes());
    out[7] = check_byte(&out[..7]);
    out
}

pub fn deserialize_header(bytes: &[u8]) -> Result<FhHeader, HeaderError> {
    if bytes.len() != HEADER_LEN {
        return Err(HeaderError::WrongLength(bytes.len()));
    }
    let computed = check_byte(&bytes[..7]);
    if computed != bytes[7] {
        return Err(HeaderError::BadCheck {
            computed,
            found: bytes[7],
        });
    }
    Ok(FhHeader {
        label: u16::from_be_bytes([bytes[0], bytes[1]]),
        seq: u16::from_be_bytes([bytes[2], bytes[3]]),
        latency_class: bytes[4] >> 4,
        flags: bytes[4] & 0xF,
        payload_len: u16::from_be_bytes([bytes[5], bytes[6]]),
    })
}
