//! Reader and writer for the MNIST IDX binary containers.
//!
//! Images use the rank-3 unsigned-byte layout (magic `0x00000803`), labels the
//! rank-1 layout (magic `0x00000801`). All header words are big-endian `u32`.
//! Files may optionally be gzip-wrapped; the readers sniff the gzip magic.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const IMAGE_HEADER_LEN: usize = 16;
const LABEL_HEADER_LEN: usize = 8;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("wrong magic number: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{extra} trailing bytes after declared payload")]
    TrailingBytes { extra: usize },
    #[error("pixel buffer holds {actual} bytes but count*rows*cols = {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label {label} at index {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("image dimensions must be positive (rows={rows}, cols={cols})")]
    ZeroDimension { rows: u32, cols: u32 },
    #[error("{0} does not fit the 32-bit header field")]
    Overflow(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A stack of equally sized grayscale images, concatenated row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImageSet {
    pub count: u32,
    pub rows: u32,
    pub cols: u32,
    pub pixels: Vec<u8>,
}

impl IdxImageSet {
    pub fn new(count: u32, rows: u32, cols: u32, pixels: Vec<u8>) -> Result<Self, IdxError> {
        let set = Self {
            count,
            rows,
            cols,
            pixels,
        };
        set.check()?;
        Ok(set)
    }

    pub fn image_len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let len = self.image_len();
        &self.pixels[index * len..(index + 1) * len]
    }

    pub fn images(&self) -> impl Iterator<Item = &[u8]> {
        // chunks_exact panics on zero, and rows/cols are positive by invariant
        self.pixels.chunks_exact(self.image_len().max(1))
    }

    fn check(&self) -> Result<(), IdxError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(IdxError::ZeroDimension {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let expected = self.count as usize * self.image_len();
        if self.pixels.len() != expected {
            return Err(IdxError::LengthMismatch {
                expected,
                actual: self.pixels.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabelSet {
    pub labels: Vec<u8>,
}

impl IdxLabelSet {
    pub fn new(labels: Vec<u8>) -> Result<Self, IdxError> {
        let set = Self { labels };
        set.check()?;
        Ok(set)
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    fn check(&self) -> Result<(), IdxError> {
        if let Some((index, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l > 9) {
            return Err(IdxError::LabelOutOfRange { index, label });
        }
        if u32::try_from(self.labels.len()).is_err() {
            return Err(IdxError::Overflow("label count"));
        }
        Ok(())
    }
}

pub fn write_images(set: &IdxImageSet) -> Result<Vec<u8>, IdxError> {
    set.check()?;
    let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + set.pixels.len());
    for word in [IMAGE_MAGIC, set.count, set.rows, set.cols] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&set.pixels);
    Ok(out)
}

pub fn write_labels(set: &IdxLabelSet) -> Result<Vec<u8>, IdxError> {
    set.check()?;
    let mut out = Vec::with_capacity(LABEL_HEADER_LEN + set.labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.labels.len() as u32).to_be_bytes());
    out.extend_from_slice(&set.labels);
    Ok(out)
}

fn be_word(bytes: &[u8], word: usize) -> u32 {
    let at = word * 4;
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn expect_len(bytes: &[u8], needed: usize) -> Result<(), IdxError> {
    match bytes.len() {
        n if n < needed => Err(IdxError::Truncated {
            needed,
            available: n,
        }),
        n if n > needed => Err(IdxError::TrailingBytes { extra: n - needed }),
        _ => Ok(()),
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let found = be_word(bytes, 0);
    if found != expected {
        return Err(IdxError::WrongMagic { expected, found });
    }
    Ok(())
}

pub fn read_images(bytes: &[u8]) -> Result<IdxImageSet, IdxError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    if bytes.len() < IMAGE_HEADER_LEN {
        return Err(IdxError::Truncated {
            needed: IMAGE_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let (count, rows, cols) = (be_word(bytes, 1), be_word(bytes, 2), be_word(bytes, 3));
    if rows == 0 || cols == 0 {
        return Err(IdxError::ZeroDimension { rows, cols });
    }
    let payload = (count as u64)
        .checked_mul(rows as u64)
        .and_then(|n| n.checked_mul(cols as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(IdxError::Overflow("image payload length"))?;
    expect_len(bytes, IMAGE_HEADER_LEN + payload)?;
    Ok(IdxImageSet {
        count,
        rows,
        cols,
        pixels: bytes[IMAGE_HEADER_LEN..].to_vec(),
    })
}

pub fn read_labels(bytes: &[u8]) -> Result<IdxLabelSet, IdxError> {
    check_magic(bytes, LABEL_MAGIC)?;
    if bytes.len() < LABEL_HEADER_LEN {
        return Err(IdxError::Truncated {
            needed: LABEL_HEADER_LEN,
            available: bytes.len(),
        });
    }
    let count = be_word(bytes, 1) as usize;
    expect_len(bytes, LABEL_HEADER_LEN + count)?;
    IdxLabelSet::new(bytes[LABEL_HEADER_LEN..].to_vec())
}

/// Reads a whole file, transparently inflating it when it starts with the gzip magic.
pub fn read_file_bytes(path: &Path) -> Result<Vec<u8>, IdxError> {
    let raw = fs::read(path)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn write_file_bytes(path: &Path, bytes: &[u8], gzip: bool) -> Result<(), IdxError> {
    if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes)?;
        fs::write(path, enc.finish()?)?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn load_images(path: &Path) -> Result<IdxImageSet, IdxError> {
    read_images(&read_file_bytes(path)?)
}

pub fn load_labels(path: &Path) -> Result<IdxLabelSet, IdxError> {
    read_labels(&read_file_bytes(path)?)
}

/// Resolves an MNIST-style base name inside `dir`, preferring the plain file over `.gz`.
pub fn locate(dir: &Path, base: &str) -> Option<std::path::PathBuf> {
    let plain = dir.join(base);
    if plain.is_file() {
        return Some(plain);
    }
    let gz = dir.join(format!("{base}.gz"));
    gz.is_file().then_some(gz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_image_set_golden_header() {
        let set = IdxImageSet::new(0, 28, 28, vec![]).unwrap();
        let bytes = write_images(&set).unwrap();
        assert_eq!(
            bytes,
            [0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 0x1c, 0, 0, 0, 0x1c]
        );
    }

    #[test]
    fn mnist_sized_header_bytes() {
        let set = IdxImageSet::new(60000, 28, 28, vec![0; 60000 * 784]).unwrap();
        let bytes = write_images(&set).unwrap();
        assert_eq!(&bytes[2..8], &[0x08, 0x03, 0x00, 0x00, 0xEA, 0x60]);
        assert_eq!(bytes.len(), 16 + 60000 * 784);
    }

    #[test]
    fn label_golden_vectors() {
        let empty = write_labels(&IdxLabelSet::new(vec![]).unwrap()).unwrap();
        assert_eq!(empty, [0, 0, 8, 1, 0, 0, 0, 0]);
        let three = write_labels(&IdxLabelSet::new(vec![0, 9, 3]).unwrap()).unwrap();
        assert_eq!(three, [0, 0, 8, 1, 0, 0, 0, 3, 0, 9, 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            IdxLabelSet::new(vec![1, 10]),
            Err(IdxError::LabelOutOfRange { index: 1, label: 10 })
        ));
        let bad = IdxImageSet {
            count: 2,
            rows: 2,
            cols: 2,
            pixels: vec![0; 7],
        };
        assert!(matches!(
            write_images(&bad),
            Err(IdxError::LengthMismatch {
                expected: 8,
                actual: 7
            })
        ));
    }

    #[test]
    fn malformed_inputs_are_distinguished() {
        let mut short = vec![0, 0, 8, 3];
        short.extend_from_slice(&[0; 11]);
        assert!(matches!(
            read_images(&short),
            Err(IdxError::Truncated { needed: 16, .. })
        ));

        let good = write_images(&IdxImageSet::new(1, 2, 2, vec![1, 2, 3, 4]).unwrap()).unwrap();
        assert!(matches!(
            read_images(&good[..good.len() - 1]),
            Err(IdxError::Truncated { .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            read_images(&long),
            Err(IdxError::TrailingBytes { extra: 1 })
        ));
        assert!(matches!(
            read_labels(&good),
            Err(IdxError::WrongMagic {
                expected: LABEL_MAGIC,
                found: IMAGE_MAGIC
            })
        ));
    }

    #[test]
    fn gzip_and_plain_decode_identically() {
        let dir = tempfile::tempdir().unwrap();
        let set = IdxImageSet::new(3, 4, 5, (0..60).collect()).unwrap();
        let bytes = write_images(&set).unwrap();
        let plain = dir.path().join("a");
        let gz = dir.path().join("a.gz");
        write_file_bytes(&plain, &bytes, false).unwrap();
        write_file_bytes(&gz, &bytes, true).unwrap();
        assert_ne!(fs::read(&gz).unwrap(), bytes);
        assert_eq!(load_images(&plain).unwrap(), load_images(&gz).unwrap());
    }

    fn image_sets() -> impl Strategy<Value = IdxImageSet> {
        (0u32..6, 1u32..9, 1u32..9).prop_flat_map(|(count, rows, cols)| {
            proptest::collection::vec(any::<u8>(), (count * rows * cols) as usize)
                .prop_map(move |pixels| IdxImageSet {
                    count,
                    rows,
                    cols,
                    pixels,
                })
        })
    }

    proptest! {
        #[test]
        fn images_round_trip(set in image_sets()) {
            let bytes = write_images(&set).unwrap();
            prop_assert_eq!(bytes.len(), 16 + set.pixels.len());
            prop_assert_eq!(read_images(&bytes).unwrap(), set);
        }

        #[test]
        fn labels_round_trip(labels in proptest::collection::vec(0u8..10, 0..64)) {
            let set = IdxLabelSet::new(labels).unwrap();
            let bytes = write_labels(&set).unwrap();
            prop_assert_eq!(read_labels(&bytes).unwrap(), set);
        }
    }
}
