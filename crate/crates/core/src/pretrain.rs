//! Pre-training data preparation: token-ID vocabulary, sentence-block
//! packing, dynamic masking, and the block/step/parameter arithmetic used
//! to plan a run.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bpe::BpeModel;
use crate::error::{Error, Result};

/// Label value for positions that do not contribute to the MLM loss.
pub const IGNORE_INDEX: i64 = -100;

pub const BOS: &str = "<s>";
pub const PAD: &str = "<pad>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";

/// Number of reserved special tokens in a [`TokenVocab`].
pub const NUM_SPECIALS: usize = 5;

/// Subword → ID mapping. IDs 0..4 are `<s> <pad> </s> <unk>`, followed by
/// the BPE vocabulary in file order, with `<mask>` last.
#[derive(Debug, Clone)]
pub struct TokenVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl TokenVocab {
    pub fn from_pieces<S: AsRef<str>>(pieces: impl IntoIterator<Item = S>) -> Self {
        let mut tokens: Vec<String> = [BOS, PAD, EOS, UNK].iter().map(|s| s.to_string()).collect();
        let mut ids: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for p in pieces {
            let p = p.as_ref();
            if !ids.contains_key(p) {
                ids.insert(p.to_string(), tokens.len() as u32);
                tokens.push(p.to_string());
            }
        }
        ids.insert(MASK.to_string(), tokens.len() as u32);
        tokens.push(MASK.to_string());
        TokenVocab { tokens, ids }
    }

    pub fn from_model(model: &BpeModel) -> Self {
        Self::from_pieces(model.vocab().iter().map(|(s, _)| s.as_str()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(self.unk_id())
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn bos_id(&self) -> u32 {
        0
    }

    pub fn pad_id(&self) -> u32 {
        1
    }

    pub fn eos_id(&self) -> u32 {
        2
    }

    pub fn unk_id(&self) -> u32 {
        3
    }

    pub fn mask_id(&self) -> u32 {
        (self.tokens.len() - 1) as u32
    }

    pub fn special_ids(&self) -> Vec<u32> {
        vec![self.bos_id(), self.pad_id(), self.eos_id(), self.unk_id(), self.mask_id()]
    }
}

/// Half-open range of one (possibly partial) sentence inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    /// The span holds only part of a sentence longer than the block size.
    pub fragment: bool,
}

impl SentenceSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceBlock {
    pub token_ids: Vec<u32>,
    pub spans: Vec<SentenceSpan>,
}

impl SentenceBlock {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Copy of the block wrapped in `bos ... eos`, spans shifted by one.
    pub fn with_sentinels(&self, bos: u32, eos: u32) -> SentenceBlock {
        let mut token_ids = Vec::with_capacity(self.len() + 2);
        token_ids.push(bos);
        token_ids.extend_from_slice(&self.token_ids);
        token_ids.push(eos);
        SentenceBlock {
            token_ids,
            spans: self
                .spans
                .iter()
                .map(|s| SentenceSpan {
                    start: s.start + 1,
                    end: s.end + 1,
                    fragment: s.fragment,
                })
                .collect(),
        }
    }
}

/// Greedy sentence packer.
///
/// Whole sentences are appended to the open block while they fit. A
/// sentence that does not fit closes the block; a sentence longer than
/// `max_len` is cut into `max_len`-sized fragments, the last of which stays
/// open for following sentences.
#[derive(Debug)]
pub struct BlockPacker {
    max_len: usize,
    cross_documents: bool,
    current: SentenceBlock,
}

impl BlockPacker {
    pub fn new(max_len: usize) -> Result<Self> {
        if max_len < 2 {
            return Err(Error::usage(format!("max_len must be at least 2, got {max_len}")));
        }
        Ok(BlockPacker {
            max_len,
            cross_documents: false,
            current: SentenceBlock::default(),
        })
    }

    /// Let blocks continue across document boundaries.
    pub fn cross_documents(mut self, allow: bool) -> Self {
        self.cross_documents = allow;
        self
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn flush(&mut self, out: &mut Vec<SentenceBlock>) {
        if !self.current.is_empty() {
            out.push(std::mem::take(&mut self.current));
        }
    }

    fn append(&mut self, ids: &[u32], fragment: bool) {
        let start = self.current.len();
        self.current.token_ids.extend_from_slice(ids);
        self.current.spans.push(SentenceSpan {
            start,
            end: start + ids.len(),
            fragment,
        });
    }

    /// Add one sentence; returns blocks completed by it.
    pub fn push_sentence(&mut self, ids: &[u32]) -> Vec<SentenceBlock> {
        let mut out = Vec::new();
        if ids.is_empty() {
            return out;
        }
        if self.current.len() + ids.len() <= self.max_len {
            self.append(ids, false);
        } else if ids.len() <= self.max_len {
            self.flush(&mut out);
            self.append(ids, false);
        } else {
            self.flush(&mut out);
            let mut chunks = ids.chunks(self.max_len).peekable();
            while let Some(chunk) = chunks.next() {
                self.append(chunk, true);
                if chunks.peek().is_some() {
                    self.flush(&mut out);
                }
            }
        }
        if self.current.len() == self.max_len {
            self.flush(&mut out);
        }
        out
    }

    /// Mark a document boundary.
    pub fn end_document(&mut self) -> Vec<SentenceBlock> {
        let mut out = Vec::new();
        if !self.cross_documents {
            self.flush(&mut out);
        }
        out
    }

    pub fn finish(mut self) -> Vec<SentenceBlock> {
        let mut out = Vec::new();
        self.flush(&mut out);
        out
    }
}

/// Pack a single document's sentences.
pub fn pack_blocks<I, S>(sentences: I, max_len: usize) -> Result<Vec<SentenceBlock>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u32]>,
{
    let mut packer = BlockPacker::new(max_len)?;
    let mut blocks = Vec::new();
    for s in sentences {
        blocks.extend(packer.push_sentence(s.as_ref()));
    }
    blocks.extend(packer.finish());
    Ok(blocks)
}

/// One block per line, IDs separated by spaces.
pub fn write_blocks<'a, W: Write>(
    mut w: W,
    blocks: impl IntoIterator<Item = &'a SentenceBlock>,
) -> std::io::Result<()> {
    for b in blocks {
        let line: Vec<String> = b.token_ids.iter().map(u32::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Corruption probabilities for selected positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub mask_rate: f64,
    pub mask_token_p: f64,
    pub random_p: f64,
    pub keep_p: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            mask_rate: 0.15,
            mask_token_p: 0.8,
            random_p: 0.1,
            keep_p: 0.1,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.mask_rate, self.mask_token_p, self.random_p, self.keep_p];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::usage(format!("masking probabilities out of [0, 1]: {probs:?}")));
        }
        let sum = self.mask_token_p + self.random_p + self.keep_p;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::usage(format!(
                "replacement probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBlock {
    pub input_ids: Vec<u32>,
    /// Original ID at selected positions, [`IGNORE_INDEX`] elsewhere.
    pub labels: Vec<i64>,
    pub seed: u64,
}

impl MaskedBlock {
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_INDEX)
            .map(|(i, _)| i)
    }

    /// `input<TAB>labels`, each a space-separated list.
    pub fn to_line(&self) -> String {
        let inputs: Vec<String> = self.input_ids.iter().map(u32::to_string).collect();
        let labels: Vec<String> = self.labels.iter().map(i64::to_string).collect();
        format!("{}\t{}", inputs.join(" "), labels.join(" "))
    }
}

/// Seeded MLM corruption over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct Masker {
    cfg: MaskConfig,
    mask_id: u32,
    vocab_size: u32,
    specials: Vec<u32>,
}

impl Masker {
    pub fn new(cfg: MaskConfig, mask_id: u32, vocab_size: u32, special_ids: &[u32]) -> Result<Self> {
        cfg.validate()?;
        let mut specials: Vec<u32> = special_ids.iter().copied().filter(|&s| s < vocab_size).collect();
        specials.sort_unstable();
        specials.dedup();
        if cfg.random_p > 0.0 && specials.len() as u32 >= vocab_size {
            return Err(Error::usage("no non-special IDs available for random replacement"));
        }
        Ok(Masker {
            cfg,
            mask_id,
            vocab_size,
            specials,
        })
    }

    pub fn for_vocab(cfg: MaskConfig, vocab: &TokenVocab) -> Result<Self> {
        Self::new(cfg, vocab.mask_id(), vocab.len() as u32, &vocab.special_ids())
    }

    fn is_special(&self, id: u32) -> bool {
        self.specials.binary_search(&id).is_ok()
    }

    /// Uniform draw over non-special IDs.
    fn random_id(&self, rng: &mut ChaCha8Rng) -> u32 {
        let mut id = rng.random_range(0..self.vocab_size - self.specials.len() as u32);
        for &s in &self.specials {
            if s <= id {
                id += 1;
            } else {
                break;
            }
        }
        id
    }

    pub fn mask(&self, token_ids: &[u32], seed: u64) -> MaskedBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input_ids = token_ids.to_vec();
        let mut labels = vec![IGNORE_INDEX; token_ids.len()];
        for (i, &orig) in token_ids.iter().enumerate() {
            if self.is_special(orig) || orig == self.mask_id {
                continue;
            }
            if !rng.random_bool(self.cfg.mask_rate) {
                continue;
            }
            labels[i] = i64::from(orig);
            let r: f64 = rng.random();
            if r < self.cfg.mask_token_p {
                input_ids[i] = self.mask_id;
            } else if r < self.cfg.mask_token_p + self.cfg.random_p {
                input_ids[i] = self.random_id(&mut rng);
            }
        }
        MaskedBlock {
            input_ids,
            labels,
            seed,
        }
    }
}

/// Mask one block. The outcome depends only on the arguments.
pub fn dynamic_mask(
    block: &SentenceBlock,
    cfg: &MaskConfig,
    seed: u64,
    special_ids: &[u32],
    mask_id: u32,
    vocab_size: u32,
) -> Result<MaskedBlock> {
    Ok(Masker::new(*cfg, mask_id, vocab_size, special_ids)?.mask(&block.token_ids, seed))
}

/// Per-(epoch, block) seed, so every pass over the data draws a fresh
/// corruption pattern.
pub fn derive_seed(base: u64, epoch: u64, block_index: u64) -> u64 {
    let mut z = base ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ block_index.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetReport {
    pub num_blocks: u64,
    pub steps_per_epoch: u64,
    pub total_steps: u64,
    pub warmup_steps: u64,
}

impl BudgetReport {
    pub fn to_kv(&self) -> String {
        format!(
            "num_blocks={}\nsteps_per_epoch={}\ntotal_steps={}\nwarmup_steps={}\n",
            self.num_blocks, self.steps_per_epoch, self.total_steps, self.warmup_steps
        )
    }
}

impl fmt::Display for BudgetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentence blocks:  {} ({})", self.num_blocks, abbreviate(self.num_blocks))?;
        writeln!(f, "steps per epoch:  {} ({})", self.steps_per_epoch, abbreviate(self.steps_per_epoch))?;
        writeln!(f, "total steps:      {} ({})", self.total_steps, abbreviate(self.total_steps))?;
        write!(f, "warmup steps:     {} ({})", self.warmup_steps, abbreviate(self.warmup_steps))
    }
}

/// `13820313` → `13.82M`, `539856` → `539.9K`.
pub fn abbreviate(n: u64) -> String {
    let x = n as f64;
    if x >= 1e9 {
        format!("{:.2}B", x / 1e9)
    } else if x >= 1e6 {
        format!("{:.2}M", x / 1e6)
    } else if x >= 1e3 {
        format!("{:.1}K", x / 1e3)
    } else {
        n.to_string()
    }
}

/// Integer division rounded half up.
fn div_round(num: u128, den: u128) -> u64 {
    ((2 * num + den) / (2 * den)) as u64
}

/// Block and step counts for a pre-training run.
///
/// The total subword count `num_sentences * avg_subwords` is rounded to an
/// integer first; every later quotient is rounded half up.
pub fn training_budget(
    num_sentences: u64,
    avg_subwords: f64,
    max_len: u64,
    epochs: u64,
    batch_size: u64,
    warmup_epochs: u64,
) -> Result<BudgetReport> {
    if max_len == 0 {
        return Err(Error::usage("max_len must be positive"));
    }
    if batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    if !(avg_subwords.is_finite() && avg_subwords >= 0.0) {
        return Err(Error::usage(format!("invalid average subword count {avg_subwords}")));
    }
    let total_tokens = (num_sentences as f64 * avg_subwords + 0.5).floor() as u128;
    let num_blocks = div_round(total_tokens, u128::from(max_len));
    let nb = u128::from(num_blocks);
    let bs = u128::from(batch_size);
    Ok(BudgetReport {
        num_blocks,
        steps_per_epoch: div_round(nb, bs),
        total_steps: div_round(nb * u128::from(epochs), bs),
        warmup_steps: div_round(nb * u128::from(warmup_epochs), bs),
    })
}

/// Shape of a BERT-style encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub num_layers: u64,
    pub hidden_size: u64,
    pub ffn_size: u64,
    pub num_heads: u64,
    pub vocab_size: u64,
    pub max_positions: u64,
}

impl ArchConfig {
    /// 12 layers, hidden 768, 64K BPE types plus the reserved specials,
    /// 256 positions plus the two sentinels.
    pub fn base() -> Self {
        ArchConfig {
            num_layers: 12,
            hidden_size: 768,
            ffn_size: 3072,
            num_heads: 12,
            vocab_size: 64_000 + NUM_SPECIALS as u64,
            max_positions: 258,
        }
    }

    pub fn large() -> Self {
        ArchConfig {
            num_layers: 24,
            hidden_size: 1024,
            ffn_size: 4096,
            num_heads: 16,
            ..Self::base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.ffn_size == 0 || self.num_heads == 0 || self.vocab_size == 0 {
            return Err(Error::usage(format!("architecture sizes must be positive: {self:?}")));
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::usage(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Exact parameter count of the encoder with a weight-tied LM head.
///
/// Token and position embeddings with their layer norm; per layer the four
/// attention projections with biases, the two FFN matrices with biases
/// and two layer norms; the tied LM head contributes only its bias.
pub fn count_parameters(cfg: &ArchConfig) -> u64 {
    let h = cfg.hidden_size;
    let f = cfg.ffn_size;
    let embeddings = cfg.vocab_size * h + cfg.max_positions * h + 2 * h;
    let attention = 4 * h * h + 4 * h;
    let ffn = 2 * h * f + h + f;
    let norms = 2 * 2 * h;
    let per_layer = attention + ffn + norms;
    embeddings + cfg.num_layers * per_layer + cfg.vocab_size
}
