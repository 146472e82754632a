//! Question/topic node features. The default embedder hashes token n-grams
//! into a fixed number of signed buckets and L2-normalizes; it is a
//! deterministic, dependency-free stand-in for an external text encoder.
//! Precomputed vectors (e.g. from a transformer run offline) load from a
//! tab-separated file keyed by text hash.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Stable 64-bit FNV-1a. Not std's `DefaultHasher`, which is allowed to
/// change across releases; embeddings must be reproducible byte-for-byte.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hex key identifying a text in the precomputed-vector table: the first
/// 16 hex chars of sha256(text).
pub fn text_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
enum Mode {
    Hashing,
    Precomputed(HashMap<String, Vec<f64>>),
}

/// Maps node text to a feature vector of fixed dimension `d_in`.
#[derive(Debug, Clone)]
pub struct TextEmbedder {
    dim: usize,
    mode: Mode,
}

impl TextEmbedder {
    /// Signed feature hashing over token unigrams and bigrams.
    pub fn hashing(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TextEmbedder { dim, mode: Mode::Hashing }
    }

    /// Load a precomputed table: one `text-hash<TAB>v0 v1 ...` entry per line.
    pub fn precomputed_from_path(path: &Path, dim: usize) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut table = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (key, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: "expected 'hash<TAB>floats'".into(),
            })?;
            let vector = rest
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("bad float: {e}"),
                })?;
            if vector.len() != dim {
                return Err(Error::Dimension(format!(
                    "precomputed vector for {key} has length {}, expected {dim}",
                    vector.len()
                )));
            }
            table.insert(key.to_string(), vector);
        }
        Ok(TextEmbedder { dim, mode: Mode::Precomputed(table) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embed one text. Deterministic; hashing output has unit Euclidean norm.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Schema("cannot embed empty text".into()));
        }
        match &self.mode {
            Mode::Hashing => self.embed_hashing(text),
            Mode::Precomputed(table) => {
                let key = text_hash(text);
                table
                    .get(&key)
                    .cloned()
                    .ok_or(Error::EmbeddingMiss(key))
            }
        }
    }

    fn embed_hashing(&self, text: &str) -> Result<Vec<f64>> {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect();
        if tokens.is_empty() {
            return Err(Error::Schema(format!("text {text:?} has no tokens")));
        }
        let mut v = vec![0.0f64; self.dim];
        let mut add_gram = |gram: &str| {
            let bucket = (fnv1a64(format!("b|{gram}").as_bytes()) % self.dim as u64) as usize;
            let sign = if fnv1a64(format!("s|{gram}").as_bytes()) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        };
        for t in &tokens {
            add_gram(t);
        }
        for pair in tokens.windows(2) {
            add_gram(&format!("{} {}", pair[0], pair[1]));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // All gram signs cancelled inside shared buckets; salt and retry
            // via the text's own hash so output stays deterministic.
            let bucket = (fnv1a64(text.as_bytes()) % self.dim as u64) as usize;
            v[bucket] = 1.0;
            return Ok(v);
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn deterministic() {
        let e = TextEmbedder::hashing(64);
        let a = e.embed("Have you ever used an electronic vapor product?").unwrap();
        let b = e.embed("Have you ever used an electronic vapor product?").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_norm() {
        let e = TextEmbedder::hashing(128);
        for text in ["short", "a much longer question about sleep and school grades", "x y z"] {
            let v = e.embed(text).unwrap();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm {norm} for {text:?}");
        }
    }

    #[test]
    fn empty_text_rejected() {
        let e = TextEmbedder::hashing(16);
        assert!(e.embed("").is_err());
        assert!(e.embed("?!").is_err());
    }

    /// 1,000 distinct generated texts at d_in = 128: no two embeddings may be
    /// near-duplicates. Brute-force pairwise cosine check.
    #[test]
    fn pairwise_cosine_below_cap() {
        let e = TextEmbedder::hashing(128);
        let topics = ["sleep", "alcohol", "family", "school", "peers", "mood", "safety", "health"];
        let verbs = ["report", "describe", "recall", "estimate", "rate"];
        let mut texts = Vec::new();
        for i in 0..1000 {
            let t = topics[i % topics.len()];
            let v = verbs[(i / topics.len()) % verbs.len()];
            texts.push(format!(
                "item {i}: please {v} how often {t} affected you during period {}",
                i / 40
            ));
        }
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| e.embed(t).unwrap()).collect();
        let mut max_cos = f64::NEG_INFINITY;
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                max_cos = max_cos.max(dot);
            }
        }
        assert!(max_cos < 0.99, "max pairwise cosine {max_cos}");
    }

    #[test]
    fn precomputed_roundtrip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.tsv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}\t0.25 0.5 -1.0", text_hash("known question")).unwrap();
        drop(f);
        let e = TextEmbedder::precomputed_from_path(&path, 3).unwrap();
        assert_eq!(e.embed("known question").unwrap(), vec![0.25, 0.5, -1.0]);
        assert!(matches!(e.embed("unknown question"), Err(Error::EmbeddingMiss(_))));
    }
}
