//! Precomputed-embedding file, little-endian:
//!
//! ```text
//! d: u32, count: u32
//! count × { id_len: u32, id: utf-8, n: u32, t: n×d f32, c: d f32 }
//! ```
//!
//! Values are widened to f64 on load and enter the tape as constants.

use std::collections::BTreeMap;
use std::path::Path;

use super::{EncodedNodes, EncodedSentence};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedEncodings {
    d: usize,
    entries: BTreeMap<String, EncodedSentence>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Data(format!("embedding file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Data("embedding size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

impl PrecomputedEncodings {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: &str, encoded: EncodedSentence) -> Result<()> {
        if encoded.c.len() != self.d {
            return Err(Error::dim("precomputed c", &[self.d], encoded.c.shape()));
        }
        if let Some(t) = encoded.t.iter().find(|t| t.len() != self.d) {
            return Err(Error::dim("precomputed t", &[self.d], t.shape()));
        }
        if encoded.t.is_empty() {
            return Err(Error::Contract(format!("sentence {id} has no token vectors")));
        }
        self.entries.insert(id.to_string(), encoded);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EncodedSentence> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("no precomputed encoding for sentence {id}")))
    }

    pub fn feed(&self, tape: &mut Tape, id: &str) -> Result<EncodedNodes> {
        let enc = self.get(id)?;
        Ok(EncodedNodes {
            c: tape.constant(enc.c.clone()),
            t: enc.t.iter().map(|t| tape.constant(t.clone())).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.d as u32).to_le_bytes());
        out.extend((self.entries.len() as u32).to_le_bytes());
        for (id, enc) in &self.entries {
            out.extend((id.len() as u32).to_le_bytes());
            out.extend(id.as_bytes());
            out.extend((enc.t.len() as u32).to_le_bytes());
            for v in enc.t.iter().chain(std::iter::once(&enc.c)).flat_map(|t| t.data()) {
                out.extend((*v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses a file and checks its dimension against `expected_d`.
    pub fn from_bytes(bytes: &[u8], expected_d: usize) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let d = r.u32()?;
        if d != expected_d {
            return Err(Error::dim("precomputed embeddings", &[d], &[expected_d]));
        }
        let count = r.u32()?;
        let mut out = Self::new(d);
        for _ in 0..count {
            let len = r.u32()?;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Data(format!("sentence id is not utf-8: {e}")))?
                .to_string();
            let n = r.u32()?;
            let t = (0..n).map(|_| r.floats(d).map(Tensor::vector)).collect::<Result<Vec<_>>>()?;
            let c = Tensor::vector(r.floats(d)?);
            out.insert(&id, EncodedSentence { c, t })?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!("{} trailing bytes in embedding file", bytes.len() - r.pos)));
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path, expected_d: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(d: usize, n: usize) -> EncodedSentence {
        let v = |k: usize| Tensor::vector((0..d).map(|i| (i * 7 + k) as f64 * 0.125 - 1.5).collect());
        EncodedSentence {
            c: v(100),
            t: (0..n).map(v).collect(),
        }
    }

    #[test]
    fn wide_file_accepted_and_round_trips() {
        let mut p = PrecomputedEncodings::new(768);
        p.insert("doc-0000#0", sample(768, 3)).unwrap();
        p.insert("doc-0000#1", sample(768, 1)).unwrap();
        let back = PrecomputedEncodings::from_bytes(&p.to_bytes(), 768).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn dimension_mismatch() {
        let mut p = PrecomputedEncodings::new(768);
        p.insert("a", sample(768, 2)).unwrap();
        let err = PrecomputedEncodings::from_bytes(&p.to_bytes(), 64).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }), "{err}");
    }

    #[test]
    fn missing_id_and_truncation() {
        let mut p = PrecomputedEncodings::new(4);
        p.insert("a", sample(4, 2)).unwrap();
        assert!(matches!(p.get("b"), Err(Error::Alignment(_))));
        let bytes = p.to_bytes();
        assert!(PrecomputedEncodings::from_bytes(&bytes[..bytes.len() - 1], 4).is_err());
    }
}
