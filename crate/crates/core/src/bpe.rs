//! Character-level byte-pair encoding over word tokens with an end-of-word
//! marker, in the style of the `fastBPE`/`subword-nmt` codes files.
//!
//! Training counts word frequencies, represents each word as its characters
//! with `</w>` attached to the final one, and repeatedly merges the most
//! frequent adjacent pair. Ties go to the lexicographically smallest
//! `(left, right)` pair, compared as strings by code point. Training stops
//! when the vocabulary reaches the requested size or no pair occurs at
//! least twice.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, IoContext, Result};
use crate::segmenter::WordSegmentedSentence;

/// End-of-word marker appended to the final symbol of every word.
pub const EOW: &str = "</w>";

/// Continuation marker used by the `@@` output style.
pub const CONTINUATION: &str = "@@";

/// Frequency table of word tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordCounts {
    counts: HashMap<String, u64>,
}

impl WordCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sentence(&mut self, sentence: &WordSegmentedSentence) {
        for w in &sentence.words {
            self.add_word(w, 1);
        }
    }

    pub fn add_word(&mut self, word: &str, count: u64) {
        if let Some(c) = self.counts.get_mut(word) {
            *c += count;
        } else {
            self.counts.insert(word.to_string(), count);
        }
    }

    pub fn merge(&mut self, other: WordCounts) {
        for (w, c) in other.counts {
            *self.counts.entry(w).or_insert(0) += c;
        }
    }

    /// Count a batch of sentences on the current rayon pool.
    pub fn from_sentences_par(sentences: &[WordSegmentedSentence]) -> Self {
        sentences
            .par_chunks(1024)
            .map(|chunk| {
                let mut wc = WordCounts::new();
                for s in chunk {
                    wc.add_sentence(s);
                }
                wc
            })
            .reduce(WordCounts::new, |mut a, b| {
                a.merge(b);
                a
            })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// Words sorted lexicographically with their counts.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(w, &c)| (w.as_str(), c)).collect();
        v.sort_unstable();
        v
    }
}

/// Split a word into its initial symbols: one per character, `</w>`
/// attached to the last.
pub fn initial_symbols(word: &str, eow: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    match syms.last_mut() {
        Some(last) => last.push_str(eow),
        None => syms.push(eow.to_string()),
    }
    syms
}

/// A subword segmentation of a word sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubwordSequence {
    pub pieces: Vec<String>,
    /// Index of the first piece of each source word.
    pub word_boundaries: Vec<usize>,
}

impl SubwordSequence {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.word_boundaries.len()
    }

    /// Parse one line of an encoded corpus (`</w>`-marked pieces).
    pub fn from_eow_line(line: &str, eow: &str) -> Self {
        let pieces: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let mut word_boundaries = Vec::new();
        let mut at_start = true;
        for (i, p) in pieces.iter().enumerate() {
            if at_start {
                word_boundaries.push(i);
            }
            at_start = p.ends_with(eow);
        }
        SubwordSequence {
            pieces,
            word_boundaries,
        }
    }

    /// Render with `</w>`-marked pieces separated by spaces.
    pub fn to_eow_line(&self) -> String {
        self.pieces.join(" ")
    }

    /// Render in `@@` continuation style: non-final pieces of a word carry
    /// a trailing `@@`, final pieces lose their end-of-word marker.
    pub fn to_continuation_line(&self, eow: &str) -> String {
        let mut out = String::new();
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match p.strip_suffix(eow) {
                Some(stem) => out.push_str(stem),
                None => {
                    out.push_str(p);
                    out.push_str(CONTINUATION);
                }
            }
        }
        out
    }

    fn check_boundaries(&self) -> Result<()> {
        let b = &self.word_boundaries;
        if self.pieces.is_empty() != b.is_empty() {
            return Err(Error::validation("word boundaries do not cover the pieces"));
        }
        if let Some(&first) = b.first() {
            if first != 0 {
                return Err(Error::validation("first word boundary must be 0"));
            }
        }
        for w in b.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::validation(format!(
                    "word boundaries not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = b.last() {
            if last >= self.pieces.len() {
                return Err(Error::validation(format!(
                    "word boundary {last} beyond {} pieces",
                    self.pieces.len()
                )));
            }
        }
        Ok(())
    }

    /// Piece ranges of each word.
    pub fn word_spans(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let n = self.pieces.len();
        self.word_boundaries.iter().enumerate().map(move |(i, &start)| {
            let end = self.word_boundaries.get(i + 1).copied().unwrap_or(n);
            start..end
        })
    }
}

/// Trained (or loaded) BPE model.
#[derive(Clone)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: Vec<(String, u64)>,
    eow: String,
    symbol_ids: HashMap<String, u32>,
    merge_ranks: HashMap<(u32, u32), (u32, u32)>,
}

impl fmt::Debug for BpeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BpeModel")
            .field("merges", &self.merges.len())
            .field("vocab", &self.vocab.len())
            .field("eow", &self.eow)
            .finish()
    }
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges && self.vocab == other.vocab && self.eow == other.eow
    }
}

fn sort_vocab(vocab: &mut [(String, u64)]) {
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

impl BpeModel {
    /// Assemble a model from a merge list and vocabulary. Vocabulary order
    /// is normalised to descending frequency, then lexicographic.
    pub fn from_parts(merges: Vec<(String, String)>, mut vocab: Vec<(String, u64)>, eow: &str) -> Result<Self> {
        sort_vocab(&mut vocab);
        let mut symbol_ids = HashMap::new();
        let mut intern = |s: &str| -> u32 {
            if let Some(&id) = symbol_ids.get(s) {
                return id;
            }
            let id = symbol_ids.len() as u32;
            symbol_ids.insert(s.to_string(), id);
            id
        };
        for (s, _) in &vocab {
            intern(s);
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            if l.is_empty() || r.is_empty() {
                return Err(Error::validation(format!("merge {rank} has an empty side")));
            }
            let product = format!("{l}{r}");
            let key = (intern(l), intern(r));
            let product = intern(&product);
            merge_ranks.entry(key).or_insert((rank as u32, product));
        }
        Ok(BpeModel {
            merges,
            vocab,
            eow: eow.to_string(),
            symbol_ids,
            merge_ranks,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Subwords with their frequency in the training corpus, descending
    /// frequency then lexicographic.
    pub fn vocab(&self) -> &[(String, u64)] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn eow(&self) -> &str {
        &self.eow
    }

    /// Segment one word by replaying the merge list in training order.
    pub fn encode_word(&self, word: &str) -> Vec<String> {
        let mut texts = initial_symbols(word, &self.eow);
        let mut ids: Vec<Option<u32>> = texts.iter().map(|t| self.symbol_ids.get(t).copied()).collect();
        let mut last_rank: Option<u32> = None;
        loop {
            let mut best: Option<(u32, u32, u32)> = None;
            for i in 0..ids.len().saturating_sub(1) {
                let (Some(a), Some(b)) = (ids[i], ids[i + 1]) else {
                    continue;
                };
                if let Some(&(rank, _)) = self.merge_ranks.get(&(a, b)) {
                    if last_rank.is_some_and(|r| rank <= r) {
                        continue;
                    }
                    if best.is_none_or(|(r, _, _)| rank < r) {
                        best = Some((rank, a, b));
                    }
                }
            }
            let Some((rank, a, b)) = best else {
                break;
            };
            let product = self.merge_ranks[&(a, b)].1;
            let mut i = 0;
            while i + 1 < ids.len() {
                if ids[i] == Some(a) && ids[i + 1] == Some(b) {
                    let right = texts.remove(i + 1);
                    texts[i].push_str(&right);
                    ids.remove(i + 1);
                    ids[i] = Some(product);
                }
                i += 1;
            }
            last_rank = Some(rank);
        }
        texts
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> SubwordSequence {
        let mut seq = SubwordSequence::default();
        for w in words {
            seq.word_boundaries.push(seq.pieces.len());
            seq.pieces.extend(self.encode_word(w.as_ref()));
        }
        seq
    }

    pub fn encode_sentence(&self, sentence: &WordSegmentedSentence) -> SubwordSequence {
        self.encode(&sentence.words)
    }

    /// Encode many sentences on the current rayon pool; output order
    /// follows input order.
    pub fn encode_batch(&self, sentences: &[WordSegmentedSentence]) -> Vec<SubwordSequence> {
        sentences.par_iter().map(|s| self.encode_sentence(s)).collect()
    }

    pub fn decode(&self, sw: &SubwordSequence) -> Result<Vec<String>> {
        decode_with_marker(sw, &self.eow)
    }

    pub fn write_merges<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn write_vocab<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (s, c) in &self.vocab {
            writeln!(w, "{s} {c}")?;
        }
        Ok(())
    }

    pub fn save(&self, merges_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<()> {
        let (mp, vp) = (merges_path.as_ref(), vocab_path.as_ref());
        let mut buf = Vec::new();
        self.write_merges(&mut buf).with_path(mp)?;
        std::fs::write(mp, &buf).with_path(mp)?;
        buf.clear();
        self.write_vocab(&mut buf).with_path(vp)?;
        std::fs::write(vp, &buf).with_path(vp)?;
        Ok(())
    }

    pub fn from_readers<R1: BufRead, R2: BufRead>(merges: R1, vocab: R2, eow: &str) -> Result<Self> {
        let mut merge_list = Vec::new();
        for (i, line) in merges.lines().enumerate() {
            let line = line.map_err(|e| Error::io("merges", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merge_list.push((l.to_string(), r.to_string()))
                }
                _ => return Err(Error::parse("merges", i + 1, "expected \"left right\"")),
            }
        }
        let mut vocab_list = Vec::new();
        for (i, line) in vocab.lines().enumerate() {
            let line = line.map_err(|e| Error::io("vocab", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (s, c) = line
                .rsplit_once(' ')
                .ok_or_else(|| Error::parse("vocab", i + 1, "expected \"subword frequency\""))?;
            let c: u64 = c
                .parse()
                .map_err(|_| Error::parse("vocab", i + 1, format!("invalid frequency {c:?}")))?;
            vocab_list.push((s.to_string(), c));
        }
        BpeModel::from_parts(merge_list, vocab_list, eow)
    }

    pub fn load(merges_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<Self> {
        let (mp, vp) = (merges_path.as_ref(), vocab_path.as_ref());
        let m = BufReader::new(File::open(mp).with_path(mp)?);
        let v = BufReader::new(File::open(vp).with_path(vp)?);
        Self::from_readers(m, v, EOW)
    }
}

/// Strip end-of-word markers and join each word's pieces.
pub fn decode_with_marker(sw: &SubwordSequence, eow: &str) -> Result<Vec<String>> {
    sw.check_boundaries()?;
    let mut words = Vec::with_capacity(sw.num_words());
    for (wi, span) in sw.word_spans().enumerate() {
        let pieces = &sw.pieces[span];
        let (last, inner) = pieces.split_last().expect("spans are non-empty");
        if let Some(p) = inner.iter().find(|p| p.ends_with(eow)) {
            return Err(Error::validation(format!(
                "word {wi}: piece {p:?} ends the word before its boundary"
            )));
        }
        let stem = last.strip_suffix(eow).ok_or_else(|| {
            Error::validation(format!("word {wi}: final piece {last:?} lacks the end-of-word marker"))
        })?;
        let mut w: String = inner.concat();
        w.push_str(stem);
        words.push(w);
    }
    Ok(words)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeTrainConfig {
    pub vocab_size: usize,
    pub eow: String,
}

impl Default for BpeTrainConfig {
    fn default() -> Self {
        BpeTrainConfig {
            vocab_size: 64_000,
            eow: EOW.to_string(),
        }
    }
}

impl BpeTrainConfig {
    pub fn with_vocab_size(vocab_size: usize) -> Self {
        BpeTrainConfig {
            vocab_size,
            ..Self::default()
        }
    }
}

/// Train from a stream of word-segmented sentences.
pub fn train_bpe<I>(corpus: I, cfg: &BpeTrainConfig) -> Result<BpeModel>
where
    I: IntoIterator<Item = WordSegmentedSentence>,
{
    let mut counts = WordCounts::new();
    for s in corpus {
        counts.add_sentence(&s);
    }
    train_from_counts(&counts, cfg)
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    count: u64,
    left: Arc<str>,
    right: Arc<str>,
    pair: (u32, u32),
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Trainer {
    symbols: Vec<Arc<str>>,
    ids: HashMap<Arc<str>, u32>,
}

impl Trainer {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        let s: Arc<str> = Arc::from(s);
        self.symbols.push(s.clone());
        self.ids.insert(s, id);
        id
    }
}

fn for_each_pair(word: &[u32], mut f: impl FnMut((u32, u32))) {
    for w in word.windows(2) {
        f((w[0], w[1]));
    }
}

/// Train from a precomputed word-frequency table.
pub fn train_from_counts(counts: &WordCounts, cfg: &BpeTrainConfig) -> Result<BpeModel> {
    if counts.is_empty() {
        return Err(Error::validation("cannot train BPE on an empty corpus"));
    }
    let mut tr = Trainer {
        symbols: Vec::new(),
        ids: HashMap::new(),
    };
    let sorted = counts.sorted();
    let mut words: Vec<Vec<u32>> = Vec::with_capacity(sorted.len());
    let mut freqs: Vec<u64> = Vec::with_capacity(sorted.len());
    let mut vocab: HashSet<u32> = HashSet::new();
    for (w, c) in &sorted {
        let syms: Vec<u32> = initial_symbols(w, &cfg.eow).iter().map(|s| tr.intern(s)).collect();
        vocab.extend(syms.iter().copied());
        words.push(syms);
        freqs.push(*c);
    }
    if cfg.vocab_size < vocab.len() {
        return Err(Error::usage(format!(
            "vocab_size {} is smaller than the initial alphabet of {} symbols",
            cfg.vocab_size,
            vocab.len()
        )));
    }

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (wi, word) in words.iter().enumerate() {
        for_each_pair(word, |p| {
            *pair_counts.entry(p).or_insert(0) += freqs[wi];
            where_.entry(p).or_default().push(wi);
        });
    }

    let entry = |tr: &Trainer, pair: (u32, u32), count: u64| HeapEntry {
        count,
        left: tr.symbols[pair.0 as usize].clone(),
        right: tr.symbols[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<HeapEntry> = pair_counts.iter().map(|(&p, &c)| entry(&tr, p, c)).collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
    while vocab.len() < cfg.vocab_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            continue;
        }
        if top.count < 2 {
            break;
        }
        let (a, b) = top.pair;
        let product = tr.intern(&format!("{}{}", top.left, top.right));
        vocab.insert(product);
        merges.push((top.left.to_string(), top.right.to_string()));

        let mut affected = where_.remove(&top.pair).unwrap_or_default();
        affected.sort_unstable();
        affected.dedup();
        delta.clear();
        for wi in affected {
            let word = &mut words[wi];
            if !word.windows(2).any(|w| w[0] == a && w[1] == b) {
                continue;
            }
            let f = freqs[wi] as i64;
            for_each_pair(word, |p| *delta.entry(p).or_insert(0) -= f);
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == a && word[i + 1] == b {
                    merged.push(product);
                    i += 2;
                } else {
                    merged.push(word[i]);
                    i += 1;
                }
            }
            *word = merged;
            for_each_pair(word, |p| {
                *delta.entry(p).or_insert(0) += f;
                if p.0 == product || p.1 == product {
                    where_.entry(p).or_default().push(wi);
                }
            });
        }
        let mut changed: Vec<((u32, u32), i64)> = delta.drain().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (p, d) in changed {
            let c = pair_counts.entry(p).or_insert(0);
            *c = (*c as i64 + d) as u64;
            let c = *c;
            if c == 0 {
                pair_counts.remove(&p);
            } else {
                heap.push(entry(&tr, p, c));
            }
        }
    }

    let mut freq_of: HashMap<u32, u64> = vocab.iter().map(|&s| (s, 0)).collect();
    for (word, &f) in words.iter().zip(&freqs) {
        for s in word {
            *freq_of.get_mut(s).expect("segment symbols are in the vocabulary") += f;
        }
    }
    let vocab_list = freq_of
        .into_iter()
        .map(|(s, c)| (tr.symbols[s as usize].to_string(), c))
        .collect();
    BpeModel::from_parts(merges, vocab_list, &cfg.eow)
}

/// Mean number of pieces per sentence.
pub fn avg_subwords_per_sentence<I>(corpus: I, model: &BpeModel) -> Result<f64>
where
    I: IntoIterator<Item = WordSegmentedSentence>,
{
    let (mut n, mut pieces) = (0usize, 0usize);
    for s in corpus {
        n += 1;
        pieces += model.encode_sentence(&s).len();
    }
    if n == 0 {
        return Err(Error::validation("average subwords of an empty corpus"));
    }
    Ok(pieces as f64 / n as f64)
}
