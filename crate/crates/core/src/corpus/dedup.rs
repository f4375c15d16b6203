//! Near-duplicate document removal with k-token shingles and MinHash.
//!
//! Hash family: for slot `i` the hash of a shingle value `x` is
//! `a_i * x + b_i (mod 2^64)` with `a_i` odd, where `(a_i, b_i)` are drawn
//! from a SplitMix64 stream seeded with the configured seed. Each member is
//! a bijection on `u64`, so distinct shingles never collide inside a slot.
//! Shingle values are FNV-1a over the window's tokens (separated by `0xFF`,
//! which cannot occur in UTF-8) followed by the SplitMix64 finalizer.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::Document;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    mix64(*state)
}

/// Stable 64-bit hash of a token window.
pub fn shingle_hash<S: AsRef<str>>(tokens: &[S]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            h ^= 0xff;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in tok.as_ref().as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    mix64(h)
}

/// Set of hashed k-token windows of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub doc_id: String,
    shingles: Vec<u64>,
}

impl ShingleSet {
    /// Shingle whitespace-delimited tokens into contiguous windows of `k`.
    pub fn from_text(doc_id: impl Into<String>, text: &str, k: usize) -> Self {
        let k = k.max(1);
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let hashes = if tokens.len() < k {
            Vec::new()
        } else {
            tokens.windows(k).map(shingle_hash).collect()
        };
        Self::from_hashes(doc_id, hashes)
    }

    pub fn from_hashes(doc_id: impl Into<String>, hashes: impl IntoIterator<Item = u64>) -> Self {
        let mut shingles: Vec<u64> = hashes.into_iter().collect();
        shingles.sort_unstable();
        shingles.dedup();
        ShingleSet {
            doc_id: doc_id.into(),
            shingles,
        }
    }

    pub fn hashes(&self) -> &[u64] {
        &self.shingles
    }

    pub fn len(&self) -> usize {
        self.shingles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shingles.is_empty()
    }

    /// Exact Jaccard similarity of the two sets (1.0 for two empty sets).
    pub fn exact_jaccard(&self, other: &ShingleSet) -> f64 {
        let (a, b) = (&self.shingles, &other.shingles);
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        inter as f64 / (a.len() + b.len() - inter) as f64
    }
}

/// Seeded multiply-add hash family over `u64`.
#[derive(Debug, Clone)]
pub struct HashFamily {
    coeffs: Vec<(u64, u64)>,
}

impl HashFamily {
    pub fn new(num_hashes: usize, seed: u64) -> Result<Self> {
        if num_hashes == 0 {
            return Err(Error::usage("num_hashes must be at least 1"));
        }
        let mut state = seed;
        let coeffs = (0..num_hashes)
            .map(|_| {
                let a = splitmix_next(&mut state) | 1;
                let b = splitmix_next(&mut state);
                (a, b)
            })
            .collect();
        Ok(HashFamily { coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn signature(&self, shingles: &ShingleSet) -> MinHashSignature {
        let mut values = vec![u64::MAX; self.coeffs.len()];
        for &x in shingles.hashes() {
            for (slot, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let h = a.wrapping_mul(x).wrapping_add(b);
                if h < *slot {
                    *slot = h;
                }
            }
        }
        MinHashSignature {
            doc_id: shingles.doc_id.clone(),
            values,
            empty: shingles.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub doc_id: String,
    pub values: Vec<u64>,
    /// Set when the source shingle set was empty; all values are then
    /// `u64::MAX`.
    pub empty: bool,
}

pub fn minhash_signature(shingles: &ShingleSet, num_hashes: usize, seed: u64) -> Result<MinHashSignature> {
    Ok(HashFamily::new(num_hashes, seed)?.signature(shingles))
}

/// Fraction of slots on which the two signatures agree. Signatures of
/// empty shingle sets never match anything.
pub fn estimated_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> f64 {
    if a.empty || b.empty || a.values.len() != b.values.len() || a.values.is_empty() {
        return 0.0;
    }
    slot_agreement(&a.values, &b.values)
}

fn slot_agreement(a: &[u64], b: &[u64]) -> f64 {
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count();
    matches as f64 / a.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupConfig {
    pub shingle_size: usize,
    pub threshold: f64,
    pub num_hashes: usize,
    pub seed: u64,
    /// Rows per LSH band; `None` picks the largest divisor of `num_hashes`
    /// whose miss probability at the threshold is below 1e-9.
    pub rows_per_band: Option<usize>,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            shingle_size: 5,
            threshold: 0.8,
            num_hashes: 256,
            seed: 0,
            rows_per_band: None,
        }
    }
}

impl DedupConfig {
    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::usage(format!(
                "dedup threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.shingle_size == 0 {
            return Err(Error::usage("shingle size must be at least 1"));
        }
        if self.num_hashes == 0 {
            return Err(Error::usage("num_hashes must be at least 1"));
        }
        if let Some(r) = self.rows_per_band {
            if r == 0 || !self.num_hashes.is_multiple_of(r) {
                return Err(Error::usage(format!(
                    "rows per band ({r}) must divide num_hashes ({})",
                    self.num_hashes
                )));
            }
        }
        Ok(())
    }

    fn resolve_rows(&self) -> usize {
        if let Some(r) = self.rows_per_band {
            return r;
        }
        let t = self.threshold;
        let mut best = 1;
        for r in 1..=self.num_hashes {
            if !self.num_hashes.is_multiple_of(r) {
                continue;
            }
            let bands = (self.num_hashes / r) as i32;
            let miss = (1.0 - t.powi(r as i32)).powi(bands);
            if miss <= 1e-9 {
                best = r;
            }
        }
        best
    }
}

/// One dropped document: `(dropped_id, kept_id, estimated_similarity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub dropped_id: String,
    pub kept_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Keep,
    Drop(Removal),
}

/// Per-document work that does not depend on the rest of the corpus.
#[derive(Debug, Clone)]
pub struct Prepared {
    digest: [u8; 32],
    signature: MinHashSignature,
}

/// Streaming duplicate filter.
///
/// Only kept documents are indexed, so each new document is compared
/// against one representative per duplicate group: the first one seen.
/// Memory is proportional to the number of kept documents times
/// `num_hashes`.
pub struct Deduplicator {
    cfg: DedupConfig,
    family: HashFamily,
    rows: usize,
    exact: HashMap<[u8; 32], usize>,
    kept_ids: Vec<String>,
    kept_sigs: Vec<Vec<u64>>,
    bands: Vec<HashMap<u64, Vec<usize>>>,
}

impl Deduplicator {
    pub fn new(cfg: DedupConfig) -> Result<Self> {
        cfg.validate()?;
        let family = HashFamily::new(cfg.num_hashes, cfg.seed)?;
        let rows = cfg.resolve_rows();
        let n_bands = cfg.num_hashes / rows;
        Ok(Deduplicator {
            cfg,
            family,
            rows,
            exact: HashMap::new(),
            kept_ids: Vec::new(),
            kept_sigs: Vec::new(),
            bands: vec![HashMap::new(); n_bands],
        })
    }

    pub fn config(&self) -> &DedupConfig {
        &self.cfg
    }

    pub fn prepare(&self, doc: &Document) -> Prepared {
        let shingles = ShingleSet::from_text(doc.id.clone(), &doc.text, self.cfg.shingle_size);
        Prepared {
            digest: Sha256::digest(doc.text.as_bytes()).into(),
            signature: self.family.signature(&shingles),
        }
    }

    fn band_key(&self, values: &[u64]) -> u64 {
        values.iter().fold(FNV_OFFSET, |h, &v| mix64(h ^ v))
    }

    pub fn decide(&mut self, doc_id: &str, prepared: Prepared) -> Verdict {
        if let Some(&idx) = self.exact.get(&prepared.digest) {
            return Verdict::Drop(Removal {
                dropped_id: doc_id.to_string(),
                kept_id: self.kept_ids[idx].clone(),
                similarity: 1.0,
            });
        }
        let sig = prepared.signature;
        let keys: Vec<u64> = sig
            .values
            .chunks(self.rows)
            .map(|band| self.band_key(band))
            .collect();

        if !sig.empty {
            let mut candidates: Vec<usize> = keys
                .iter()
                .zip(&self.bands)
                .filter_map(|(key, table)| table.get(key))
                .flatten()
                .copied()
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            let mut best: Option<(usize, f64)> = None;
            for idx in candidates {
                let sim = slot_agreement(&sig.values, &self.kept_sigs[idx]);
                if sim >= self.cfg.threshold && best.is_none_or(|(_, s)| sim > s) {
                    best = Some((idx, sim));
                }
            }
            if let Some((idx, similarity)) = best {
                return Verdict::Drop(Removal {
                    dropped_id: doc_id.to_string(),
                    kept_id: self.kept_ids[idx].clone(),
                    similarity,
                });
            }
        }

        let idx = self.kept_ids.len();
        self.exact.insert(prepared.digest, idx);
        self.kept_ids.push(doc_id.to_string());
        if !sig.empty {
            for (key, table) in keys.into_iter().zip(self.bands.iter_mut()) {
                table.entry(key).or_default().push(idx);
            }
        }
        self.kept_sigs.push(sig.values);
        Verdict::Keep
    }

    pub fn check(&mut self, doc: &Document) -> Verdict {
        let prepared = self.prepare(doc);
        self.decide(&doc.id, prepared)
    }

    /// Signatures are computed in parallel on the current rayon pool; the
    /// decisions are then taken sequentially in input order.
    pub fn process_batch(&mut self, docs: Vec<Document>) -> Vec<(Document, Verdict)> {
        let prepared: Vec<Prepared> = docs.par_iter().map(|d| self.prepare(d)).collect();
        docs.into_iter()
            .zip(prepared)
            .map(|(doc, p)| {
                let verdict = self.decide(&doc.id, p);
                (doc, verdict)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub kept: Vec<Document>,
    pub removed: Vec<Removal>,
}

/// In-memory convenience wrapper around [`Deduplicator`].
pub fn dedup_corpus(docs: impl IntoIterator<Item = Document>, cfg: &DedupConfig) -> Result<DedupOutcome> {
    let mut dedup = Deduplicator::new(cfg.clone())?;
    let mut out = DedupOutcome::default();
    for doc in docs {
        match dedup.check(&doc) {
            Verdict::Keep => out.kept.push(doc),
            Verdict::Drop(r) => out.removed.push(r),
        }
    }
    Ok(out)
}

/// Tab-separated report: `dropped_id<TAB>kept_id<TAB>similarity`.
pub fn write_dedup_report<'a, W: Write>(
    mut w: W,
    removed: impl IntoIterator<Item = &'a Removal>,
) -> std::io::Result<()> {
    for r in removed {
        writeln!(w, "{}\t{}\t{:.6}", r.dropped_id, r.kept_id, r.similarity)?;
    }
    Ok(())
}
