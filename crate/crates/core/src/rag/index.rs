use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    /// Half-open character span in the source document.
    pub char_span: (usize, usize),
}

impl DocumentChunk {
    /// `"<doc_id>#<chunk_index>"`
    pub fn label(&self) -> String {
        alloc::format!("{}#{}", self.doc_id, self.chunk_index)
    }
}

/// Fixed-size character windows advancing by `chunk_size − overlap`.
pub fn chunk(doc_id: &str, document: &str, chunk_size: usize, overlap: usize) -> Result<Vec<DocumentChunk>> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(Error::InvalidInput(alloc::format!(
            "chunk overlap {overlap} must be smaller than chunk size {chunk_size}"
        )));
    }
    let chars: Vec<char> = document.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let end = (start + chunk_size).min(chars.len());
        out.push(DocumentChunk {
            doc_id: doc_id.to_string(),
            chunk_index: out.len(),
            text: chars[start..end].iter().collect(),
            char_span: (start, end),
        });
        if end == chars.len() {
            break;
        }
        start += chunk_size - overlap;
    }
    Ok(out)
}

pub trait Embedder {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Character trigram counts hashed (FNV-1a) into a fixed number of
/// buckets, L2-normalized. Text is lower-cased first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedTrigramEmbedder {
    pub dim: usize,
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashedTrigramEmbedder {
    fn id(&self) -> String {
        alloc::format!("hashed-trigram-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        if chars.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let mut v = alloc::vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for gram in chars.windows(3.min(chars.len())) {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            v[(fnv1a(&buf[..len]) % self.dim as u64) as usize] += 1.0;
        }
        let n = crate::linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub chunks: Vec<DocumentChunk>,
    pub vectors: Vec<Vec<f64>>,
    pub embedder_id: String,
}

pub fn build_index(chunks: Vec<DocumentChunk>, embedder: &dyn Embedder) -> Result<RetrievalIndex> {
    let mut vectors = Vec::with_capacity(chunks.len());
    for c in &chunks {
        let v = embedder
            .embed(&c.text)
            .map_err(|e| Error::InvalidInput(alloc::format!("embedding chunk {}: {e}", c.label())))?;
        if v.len() != embedder.dim() {
            return Err(Error::DimensionMismatch { expected: embedder.dim(), got: v.len() });
        }
        vectors.push(v);
    }
    Ok(RetrievalIndex { chunks, vectors, embedder_id: embedder.id() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub chunk: &'a DocumentChunk,
    pub score: f64,
}

/// Top-`k` chunks by cosine similarity, ties broken by `(doc_id, chunk_index)`.
pub fn retrieve<'a>(index: &'a RetrievalIndex, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<Retrieved<'a>>> {
    if index.chunks.is_empty() || k == 0 {
        return Err(Error::InvalidInput("retrieval needs a non-empty index and k ≥ 1".into()));
    }
    let q = embedder.embed(query)?;
    let mut hits: Vec<Retrieved<'a>> = index
        .chunks
        .iter()
        .zip(&index.vectors)
        .map(|(chunk, v)| Retrieved { chunk, score: crate::linalg::dot(&q, v) })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
            .then(a.chunk.chunk_index.cmp(&b.chunk.chunk_index))
    });
    hits.truncate(k);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn chunk_examples() {
        let doc: String = (0..2500).map(|i| (b'a' + (i % 26) as u8) as char).collect();
        let spans: Vec<_> = chunk("d", &doc, 1000, 200).unwrap().iter().map(|c| c.char_span).collect();
        assert_eq!(spans, vec![(0, 1000), (800, 1800), (1600, 2500)]);
        assert_eq!(chunk("d", "short", 1000, 200).unwrap().len(), 1);
        let tiles = chunk("d", &doc, 500, 0).unwrap();
        assert_eq!(tiles.iter().map(|c| c.text.as_str()).collect::<String>(), doc);
        assert!(chunk("d", "", 10, 2).unwrap().is_empty());
        assert!(chunk("d", &doc, 10, 10).is_err());
    }

    proptest! {
        #[test]
        fn chunks_cover_with_stated_overlap(len in 0usize..400, size in 1usize..60, ov in 0usize..60) {
            prop_assume!(ov < size);
            let doc: String = (0..len).map(|i| if i % 7 == 0 { 'é' } else { 'x' }).collect();
            let cs = chunk("d", &doc, size, ov).unwrap();
            for (i, c) in cs.iter().enumerate() {
                prop_assert_eq!(c.char_span.0, i * (size - ov));
                prop_assert!(c.char_span.1 <= len);
                prop_assert_eq!(c.text.chars().count(), c.char_span.1 - c.char_span.0);
            }
            if len > 0 {
                prop_assert_eq!(cs.last().unwrap().char_span.1, len);
            }
        }
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let e = HashedTrigramEmbedder::default();
        let chunks = chunk("2013", "A hot summer with a long heatwave. Storms followed in autumn.", 20, 5).unwrap();
        let idx = build_index(chunks.clone(), &e).unwrap();
        for v in &idx.vectors {
            assert!((crate::linalg::norm(v) - 1.0).abs() < 1e-9);
        }
        assert_eq!(build_index(chunks, &e).unwrap(), idx);
        assert!(build_index(Vec::new(), &e).unwrap().chunks.is_empty());
    }

    #[test]
    fn retrieval_order_and_saturation() {
        let e = HashedTrigramEmbedder::default();
        let mut chunks = chunk("2011", "flooding rains across the coast", 100, 0).unwrap();
        chunks.extend(chunk("2010", "a mild and settled winter", 100, 0).unwrap());
        chunks.extend(chunk("2009", "a mild and settled winter", 100, 0).unwrap());
        let idx = build_index(chunks, &e).unwrap();
        let hits = retrieve(&idx, &e, "flooding rains across the coast", 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].chunk.doc_id, "2011");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        // equal scores fall back to doc id order
        assert_eq!((hits[1].chunk.doc_id.as_str(), hits[2].chunk.doc_id.as_str()), ("2009", "2010"));
        assert!(retrieve(&idx, &e, "x", 0).is_err());
    }

    #[test]
    fn disjoint_alphabets_match_hashed_oracle() {
        // Independent bucket computation; no bucket is shared between the two
        // texts, so the cosine must vanish.
        let e = HashedTrigramEmbedder::default();
        let doc = "abcabc";
        let query = "xyzxyz";
        let buckets = |s: &str| -> Vec<u64> {
            let b = s.as_bytes();
            (0..b.len() - 2).map(|i| fnv1a(&b[i..i + 3]) % 256).collect()
        };
        let (bd, bq) = (buckets(doc), buckets(query));
        assert!(bd.iter().all(|x| !bq.contains(x)));
        let idx = build_index(chunk("d", doc, 100, 0).unwrap(), &e).unwrap();
        let hits = retrieve(&idx, &e, query, 1).unwrap();
        assert!(hits[0].score.abs() < 1e-12);
    }
}
