//! Binary knowledge-base file format (all integers little-endian).
//!
//! ```text
//! header : "SMKB" | version u32 | dimension u32 | entry count u64
//! entry  : id str | label str | text str
//!          | metadata count u32 | (key str | value str)*
//!          | visual ref count u32 | visual ref*
//!          | embedding f32 * dimension
//! trailer: SHA-256 of every preceding byte
//! str    : byte length u32 | UTF-8 bytes
//! ref    : tag u8 (0 path, 1 bytes, 2 vector) | payload
//!          path: str; bytes: length u32 | bytes; vector: length u32 | f32*
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::{KbEntry, KbStore};
use crate::error::{Error, Result};
use crate::types::{parse_label, FeatureVector, ImageRef};

pub const MAGIC: &[u8; 4] = b"SMKB";
pub const FORMAT_VERSION: u32 = 2;
const DIGEST_LEN: usize = 32;

const TAG_PATH: u8 = 0;
const TAG_BYTES: u8 = 1;
const TAG_VECTOR: u8 = 2;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub(super) fn encode(store: &KbStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + store.len() * (store.dimension * 4 + 64));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, store.dimension);
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for e in &store.entries {
        put_str(&mut out, &e.id);
        put_str(&mut out, e.label.name());
        put_str(&mut out, &e.text);
        put_u32(&mut out, e.metadata.len());
        for (k, v) in &e.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, e.visual_refs.len());
        for r in &e.visual_refs {
            match r {
                ImageRef::Path(p) => {
                    out.push(TAG_PATH);
                    put_str(&mut out, &p.to_string_lossy());
                }
                ImageRef::Bytes(b) => {
                    out.push(TAG_BYTES);
                    put_u32(&mut out, b.len());
                    out.extend_from_slice(b);
                }
                ImageRef::Precomputed(v) => {
                    out.push(TAG_VECTOR);
                    put_u32(&mut out, v.len());
                    put_f32s(&mut out, v.as_slice());
                }
            }
        }
        put_f32s(&mut out, e.embedding.as_slice());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated(what: &str) -> Error {
    Error::Format(format!("file truncated while reading {what}"))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| truncated(what))?;
        let s = self.buf.get(self.pos..end).ok_or_else(|| truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not valid UTF-8")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| truncated(what))?;
        let bytes = self.take(len, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn vector(&mut self, n: usize, what: &str) -> Result<FeatureVector> {
        FeatureVector::new(self.f32s(n, what)?).map_err(|e| Error::Format(format!("{what}: {e}")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<KbStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a knowledge-base file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    if bytes.len() < 4 + 4 + 4 + 8 + DIGEST_LEN {
        return Err(truncated("header"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checksum mismatch, file is corrupted or truncated".into()));
    }
    r.buf = body;
    let dimension = r.u32("dimension")? as usize;
    if dimension == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let count = r.u64("entry count")?;
    // Each entry needs at least its embedding; reject absurd counts before allocating.
    let min_entry = 4 * 3 + 4 + 4 + dimension * 4;
    if count > (r.remaining() / min_entry) as u64 {
        return Err(Error::Format(format!("entry count {count} exceeds file size")));
    }

    let mut store = KbStore::new(dimension);
    for i in 0..count {
        let what = |field: &str| format!("entry {i} {field}");
        let id = r.str(&what("id"))?;
        let label = parse_label(&r.str(&what("label"))?)
            .map_err(|e| Error::Format(format!("entry {i}: {e}")))?;
        let text = r.str(&what("text"))?;
        let n_meta = r.u32(&what("metadata count"))?;
        let mut metadata = BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.str(&what("metadata key"))?;
            let v = r.str(&what("metadata value"))?;
            metadata.insert(k, v);
        }
        let n_refs = r.u32(&what("visual ref count"))?;
        let mut visual_refs = Vec::new();
        for _ in 0..n_refs {
            let tag = r.u8(&what("visual ref tag"))?;
            let vr = match tag {
                TAG_PATH => ImageRef::Path(PathBuf::from(r.str(&what("path"))?)),
                TAG_BYTES => {
                    let n = r.u32(&what("image length"))? as usize;
                    ImageRef::Bytes(r.take(n, &what("image bytes"))?.to_vec())
                }
                TAG_VECTOR => {
                    let n = r.u32(&what("vector length"))? as usize;
                    ImageRef::Precomputed(r.vector(n, &what("precomputed vector"))?)
                }
                t => return Err(Error::Format(format!("entry {i}: unknown visual ref tag {t}"))),
            };
            visual_refs.push(vr);
        }
        let embedding = r.vector(dimension, &what("embedding"))?;
        store
            .insert(KbEntry {
                id,
                text,
                visual_refs,
                label,
                embedding,
                metadata,
            })
            .map_err(|e| match e {
                Error::DuplicateId(id) => Error::Format(format!("duplicate id {id:?}")),
                other => other,
            })?;
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SentimentLabel;

    fn sample_store() -> KbStore {
        let mut store = KbStore::new(4);
        for (i, label) in [SentimentLabel::Like, SentimentLabel::Fear, SentimentLabel::Surprise]
            .into_iter()
            .enumerate()
        {
            let mut metadata = BTreeMap::new();
            metadata.insert("source".into(), "test".into());
            store
                .insert(KbEntry {
                    id: format!("e{i}"),
                    text: format!("entry número {i}"),
                    visual_refs: vec![
                        ImageRef::Path(format!("img/{i}.png").into()),
                        ImageRef::Bytes(vec![1, 2, i as u8]),
                        ImageRef::Precomputed(FeatureVector::new(vec![0.5, -0.25]).unwrap()),
                    ],
                    label,
                    embedding: FeatureVector::new(vec![i as f32, 0.1, -3.5e-8, 1e30]).unwrap(),
                    metadata,
                })
                .unwrap();
        }
        store
    }

    #[test]
    fn round_trip_three_entries() {
        let s = sample_store();
        let bytes = encode(&s);
        assert_eq!(&bytes[..4], b"SMKB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let bytes = encode(&sample_store());
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(matches!(decode(&bad), Err(Error::Format(_))), "flip at {i}");
        }
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let bytes = encode(&sample_store());
        for cut in 0..bytes.len() {
            match decode(&bytes[..cut]) {
                Err(Error::Format(_)) => {}
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_version_and_trailing_bytes() {
        let mut bytes = encode(&sample_store());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode(&wrong), Err(Error::Format(_))));
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(decode(&wrong), Err(Error::Format(_))));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        bytes.truncate(20);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }
}
