//! IDX container: big-endian magic `0x0000080T` (T = element type code, then
//! dimension count), big-endian `u32` dimension sizes, unsigned-byte body.

use std::path::Path;

use crate::error::{Error, Result};

pub const UBYTE: u8 = 0x08;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub body: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        ((UBYTE as u32) << 8) | self.dims.len() as u32
    }

    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0) as usize
    }
}

fn parse_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Parses an unsigned-byte IDX payload. `path` is used only for error messages.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 4,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_err(
            path,
            0,
            format!("bad magic number {:02x?}", &bytes[..4]),
        ));
    }
    if bytes[2] != UBYTE {
        return Err(parse_err(
            path,
            2,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(parse_err(path, 3, "zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let dims: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let body_len: u64 = dims.iter().map(|&d| d as u64).product();
    let expected = header as u64 + body_len;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(parse_err(
            path,
            expected,
            format!("{} trailing bytes", bytes.len() as u64 - expected),
        ));
    }
    Ok(IdxArray {
        dims,
        body: bytes[header..].to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.body.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for d in &array.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.body);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn labels_header() {
        let bytes = encode_idx(&IdxArray {
            dims: vec![3],
            body: vec![7, 1, 0],
        });
        assert_eq!(&bytes[..4], &LABELS_MAGIC.to_be_bytes());
        let parsed = parse_idx(&bytes, p()).unwrap();
        assert_eq!(parsed.magic(), LABELS_MAGIC);
        assert_eq!(parsed.count(), 3);
    }

    #[test]
    fn truncated_body_reports_lengths() {
        let mut bytes = encode_idx(&IdxArray {
            dims: vec![2, 2, 2],
            body: vec![0; 8],
        });
        bytes.truncate(bytes.len() - 3);
        match parse_idx(&bytes, p()) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, 16 + 8);
                assert_eq!(actual, 16 + 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_names_offset() {
        let bytes = [1u8, 0, 8, 1, 0, 0, 0, 0];
        match parse_idx(&bytes, p()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        let bytes = [0u8, 0, 0x0d, 1, 0, 0, 0, 0];
        assert!(matches!(
            parse_idx(&bytes, p()),
            Err(Error::Parse { offset: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn reencoding_reproduces_source(dims in proptest::collection::vec(1u32..5, 1..4), seed in any::<u8>()) {
            let n: u32 = dims.iter().product();
            let body: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let bytes = encode_idx(&IdxArray { dims, body });
            let parsed = parse_idx(&bytes, p()).unwrap();
            prop_assert_eq!(encode_idx(&parsed), bytes);
        }
    }
}
