//! Little-endian binary formats.
//!
//! MDRE (embeddings):
//!
//! ```text
//! "MDRE" | version u32 = 1 | dim u32 | count u64
//! count x (id_len u32, id bytes, UTF-8)
//! count x dim f32, row-major
//! ```
//!
//! MDRW (encoder checkpoint):
//!
//! ```text
//! "MDRW" | version u32 = 1 | out_dim u32 | n_buckets u32 | seed u64
//! out_dim x n_buckets f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{EmbeddingMatrix, FeaturizerConfig, LinearEncoder};
use crate::error::{Error, Result};
use crate::ingest::atomic_write;

pub const MDRE_MAGIC: [u8; 4] = *b"MDRE";
pub const ENCODER_MAGIC: [u8; 4] = *b"MDRW";
pub const MDRE_VERSION: u32 = 1;

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let id_bytes: usize = m.ids().iter().map(|id| 4 + id.len()).sum();
    let mut buf = Vec::with_capacity(20 + id_bytes + 4 * m.values().len());
    buf.extend_from_slice(&MDRE_MAGIC);
    buf.extend_from_slice(&MDRE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.len() as u64).to_le_bytes());
    for id in m.ids() {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    for v in m.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    atomic_write(path, &encode_embeddings(m))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(Error::TruncatedFile(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if found != expected {
            return Err(Error::MagicMismatch { expected, found });
        }
        Ok(())
    }

    fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or(Error::TruncatedFile(what))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(Error::TrailingData(n)),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

pub fn decode_embeddings(buf: &[u8], corpus_id: &str) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { buf, pos: 0 };
    cur.magic(MDRE_MAGIC)?;
    let version = cur.u32("version")?;
    if version != MDRE_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let dim = cur.u32("dim")? as usize;
    let count = cur.u64("count")?;
    // Each id record takes at least four bytes; reject absurd counts early.
    if count > (buf.len() as u64) / 4 {
        return Err(Error::TruncatedFile("ids"));
    }
    let count = count as usize;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32("id length")? as usize;
        let bytes = cur.take(len, "id")?;
        let id = std::str::from_utf8(bytes).map_err(|_| Error::InvalidUtf8("id"))?;
        ids.push(id.to_string());
    }
    let n_values = count.checked_mul(dim).ok_or(Error::TruncatedFile("values"))?;
    let values = cur.f32s(n_values, "values")?;
    cur.finish()?;
    EmbeddingMatrix::new(corpus_id, dim, ids, values)
}

pub fn read_embeddings(path: &Path, corpus_id: &str) -> Result<EmbeddingMatrix> {
    decode_embeddings(&read_file(path)?, corpus_id)
}

pub fn encode_encoder(enc: &LinearEncoder) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 4 * enc.weights().len());
    buf.extend_from_slice(&ENCODER_MAGIC);
    buf.extend_from_slice(&MDRE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(enc.out_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(enc.n_buckets() as u32).to_le_bytes());
    buf.extend_from_slice(&enc.seed().to_le_bytes());
    for w in enc.weights() {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    buf
}

pub fn write_encoder(enc: &LinearEncoder, path: &Path) -> Result<()> {
    atomic_write(path, &encode_encoder(enc))
}

/// Decodes a checkpoint; the featurizer is restored with default lowercasing.
pub fn decode_encoder(buf: &[u8]) -> Result<LinearEncoder> {
    let mut cur = Cursor { buf, pos: 0 };
    cur.magic(ENCODER_MAGIC)?;
    let version = cur.u32("version")?;
    if version != MDRE_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let out_dim = cur.u32("out_dim")? as usize;
    let n_buckets = cur.u32("n_buckets")?;
    let seed = cur.u64("seed")?;
    let n = out_dim
        .checked_mul(n_buckets as usize)
        .ok_or(Error::TruncatedFile("weights"))?;
    let weights = cur.f32s(n, "weights")?;
    cur.finish()?;
    LinearEncoder::from_weights(FeaturizerConfig::with_buckets(n_buckets), out_dim, weights, seed)
}

pub fn read_encoder(path: &Path) -> Result<LinearEncoder> {
    decode_encoder(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            "c",
            4,
            vec!["a".into(), "b".into()],
            vec![0.5, -1.25, 3.0, 1e-30, -0.0, 7.5, f32::MAX, f32::MIN_POSITIVE],
        )
        .unwrap()
    }

    #[test]
    fn layout_and_size() {
        let bytes = encode_embeddings(&sample());
        assert_eq!(&bytes[..4], &[0x4D, 0x44, 0x52, 0x45]);
        // header 4+4+4+8, ids (4+1)+(4+1), values 2*4*4
        assert_eq!(bytes.len(), 62);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let m = sample();
        let back = decode_embeddings(&encode_embeddings(&m), "c").unwrap();
        assert_eq!(back.ids(), m.ids());
        let bits = |x: &EmbeddingMatrix| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn detects_corruption() {
        let good = encode_embeddings(&sample());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_embeddings(&bad, "c"), Err(Error::MagicMismatch { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_embeddings(&bad, "c"), Err(Error::VersionUnsupported(2))));

        for cut in [3, 10, 19, 22, 30, 61] {
            assert!(
                matches!(decode_embeddings(&good[..cut], "c"), Err(Error::TruncatedFile(_))),
                "cut at {cut}"
            );
        }

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_embeddings(&bad, "c"), Err(Error::TrailingData(1))));

        // Rename id "b" to "a".
        let mut bad = good;
        bad[29] = b'a';
        assert!(matches!(decode_embeddings(&bad, "c"), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn encoder_checkpoint_roundtrip() {
        let enc = LinearEncoder::init(FeaturizerConfig::with_buckets(16), 3, 77).unwrap();
        let bytes = encode_encoder(&enc);
        assert_eq!(&bytes[..4], b"MDRW");
        assert_eq!(bytes.len(), 24 + 3 * 16 * 4);
        let back = decode_encoder(&bytes).unwrap();
        assert_eq!(back, enc);
        assert!(matches!(
            decode_encoder(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile(_))
        ));
    }
}
