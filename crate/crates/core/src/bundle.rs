//! Single-file model bundles.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EMPL" | version u16 | flags u16
//! section count u16, then per section: name len u8, name, offset u32, length u32
//! CONFIG   key=value lines
//! VOCAB    word, char, pos lists: count u32, then per symbol len u16 + UTF-8
//! WEIGHTS  count u32, then per tensor: name len u16, name, rank u8,
//!          dims u32 × rank, f32 × numel
//! CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::graph::ParamStore;
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"EMPL";
pub const VERSION: u16 = 1;
const SECTIONS: [&str; 3] = ["CONFIG", "VOCAB", "WEIGHTS"];

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str16(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Config(format!("symbol too long: {} bytes", s.len())))?;
    put_u16(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn encode_vocab(vocab: &Vocabulary) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for list in [vocab.words(), vocab.chars(), vocab.pos_tags()] {
        put_u32(&mut out, list.len() as u32);
        for s in list {
            put_str16(&mut out, s)?;
        }
    }
    Ok(out)
}

fn encode_weights(store: &ParamStore<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    put_u32(&mut out, store.len() as u32);
    for (_, name, t) in store.iter() {
        put_str16(&mut out, name)?;
        out.push(t.rank() as u8);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Serializes a model to bytes.
pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let payloads = [
        model.config.to_kv().into_bytes(),
        encode_vocab(&model.vocab)?,
        encode_weights(&model.store)?,
    ];
    let table_len: usize = 2 + SECTIONS.iter().map(|n| 1 + n.len() + 8).sum::<usize>();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u16(&mut out, VERSION);
    put_u16(&mut out, 0);
    put_u16(&mut out, SECTIONS.len() as u16);
    let mut offset = 8 + table_len;
    for (name, p) in SECTIONS.iter().zip(&payloads) {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, offset as u32);
        put_u32(&mut out, p.len() as u32);
        offset += p.len();
    }
    for p in &payloads {
        out.extend_from_slice(p);
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

pub fn save(model: &Model<f32>, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = to_bytes(model)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

/// Bounds-checked little-endian reader over one section.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], section: &'a str) -> Self {
        Cursor { bytes, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::load(self.section, format!("truncated section: needs {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn str_with_len(&mut self, len: usize) -> Result<String> {
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::load(self.section, "invalid UTF-8"))
    }

    fn str16(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        self.str_with_len(len)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::load(
                self.section,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn decode_vocab(bytes: &[u8]) -> Result<Vocabulary> {
    let mut c = Cursor::new(bytes, "VOCAB");
    let mut lists = Vec::new();
    for _ in 0..3 {
        let n = c.u32()? as usize;
        let list = (0..n).map(|_| c.str16()).collect::<Result<Vec<_>>>()?;
        lists.push(list);
    }
    c.finish()?;
    let pos = lists.pop().unwrap();
    let chars = lists.pop().unwrap();
    let words = lists.pop().unwrap();
    Vocabulary::from_symbols(words, chars, pos).map_err(|e| Error::load("VOCAB", e.to_string()))
}

fn decode_weights(bytes: &[u8]) -> Result<ParamStore<f32>> {
    let mut c = Cursor::new(bytes, "WEIGHTS");
    let n = c.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let name = c.str16()?;
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = c.take(numel.checked_mul(4).ok_or_else(|| Error::load("WEIGHTS", "tensor too large"))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| Error::load("WEIGHTS", format!("{name}: {e}")))?;
        let pad = name.ends_with("_table").then_some(crate::corpus::PAD_ID);
        store
            .add_with_pad(name, tensor, pad)
            .map_err(|e| Error::load("WEIGHTS", e.to_string()))?;
    }
    c.finish()?;
    Ok(store)
}

/// Parses a bundle. Checks run in order: magic, version, section bounds,
/// checksum, then section contents.
pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut head = Cursor::new(bytes, "HEADER");
    if head.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::load("HEADER", "bad magic, not an EMPL bundle"));
    }
    let version = head.u16()?;
    if version != VERSION {
        return Err(Error::load("HEADER", format!("unsupported version {version}, expected {VERSION}")));
    }
    let _flags = head.u16()?;
    let count = head.u16()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = head.u8()? as usize;
        let name = head.str_with_len(len)?;
        let offset = head.u32()? as usize;
        let length = head.u32()? as usize;
        table.push((name, offset, length));
    }
    let body_end = bytes.len().saturating_sub(4);
    for (name, offset, length) in &table {
        if offset.checked_add(*length).is_none_or(|end| end > body_end) || *offset < head.pos {
            return Err(Error::load(
                name,
                format!("truncated section: {length} bytes at offset {offset}, file body is {body_end} bytes"),
            ));
        }
    }
    if bytes.len() < head.pos + 4 {
        return Err(Error::load("CRC32", "missing checksum trailer"));
    }
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::load(
            "CRC32",
            format!("checksum mismatch: stored {stored:08x}, computed {computed:08x}"),
        ));
    }
    let section = |name: &str| -> Result<&[u8]> {
        table
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, o, l)| &bytes[*o..*o + *l])
            .ok_or_else(|| Error::load(name, "section missing"))
    };
    let config_text =
        std::str::from_utf8(section("CONFIG")?).map_err(|_| Error::load("CONFIG", "invalid UTF-8"))?;
    let config = ModelConfig::from_kv(config_text).map_err(|e| Error::load("CONFIG", e.to_string()))?;
    let vocab = decode_vocab(section("VOCAB")?)?;
    let store = decode_weights(section("WEIGHTS")?)?;
    Model::from_parts(config, vocab, store).map_err(|e| Error::load("WEIGHTS", e.to_string()))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model<f32>> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentence_from_counts;
    use crate::model::{init_model, Variant};

    fn model() -> Model<f32> {
        let data = vec![
            sentence_from_counts(&["Kindness", "is", "like", "snow"], &[6, 2, 2, 3], 9).unwrap(),
            sentence_from_counts(&["Dream", "big"], &[8, 4], 9).unwrap(),
        ];
        init_model(&ModelConfig::for_variant(Variant::CharLstm), &data, None).unwrap().0
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        assert_eq!(back.trainable_params(), m.trainable_params());
    }

    #[test]
    fn header_errors_name_their_section() {
        let bytes = to_bytes(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Load { section, .. }) if section == "HEADER"));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(from_bytes(&v2), Err(Error::Load { section, .. }) if section == "HEADER"));
        let cut = &bytes[..bytes.len() - 100];
        assert!(matches!(from_bytes(cut), Err(Error::Load { section, .. }) if section == "WEIGHTS"));
        let mut flip = bytes.clone();
        let mid = bytes.len() / 2;
        flip[mid] ^= 1;
        assert!(matches!(from_bytes(&flip), Err(Error::Load { section, .. }) if section == "CRC32"));
    }
}
