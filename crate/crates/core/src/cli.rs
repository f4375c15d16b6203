//! Command-line front end. Every stage is available as its own subcommand
//! and as a step of `pipeline`; both paths call the same stage functions.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bpe::{train_from_counts, BpeModel, BpeTrainConfig, SubwordSequence, WordCounts, EOW};
use crate::corpus::{
    read_bio, read_conllu, read_corpus, read_sentence_pairs, read_tagged, write_conllu, write_dedup_report,
    ConllSentence, ConllToken, CorpusFormat, DedupConfig, Deduplicator, Document, Verdict,
};
use crate::error::{Error, IoContext, Result};
use crate::finetune::align_first_subword;
use crate::metrics::{format_percent, las_uas, ner_span_f1, nli_accuracy, pos_accuracy};
use crate::parser::{decode_tree, read_label_scores, read_score_matrices};
use crate::pretrain::{
    abbreviate, count_parameters, derive_seed, training_budget, ArchConfig, BlockPacker, MaskConfig, Masker,
    TokenVocab, NUM_SPECIALS,
};
use crate::segmenter::{check_raw_text, segment_words, split_punctuation, split_sentences, Abbreviations, Lexicon};

const BATCH: usize = 4096;

#[derive(Parser, Debug)]
#[command(name = "vnprep", version, about = "Vietnamese pre-training corpus preparation and evaluation")]
struct Cli {
    /// Seed for every random choice [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of worker threads; results do not depend on it [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Remove exact and near-duplicate documents
    Dedup(DedupArgs),
    /// Split documents into sentences and group syllables into words
    Segment(SegmentArgs),
    /// Learn BPE merges from a word-segmented corpus
    BpeTrain(BpeTrainArgs),
    /// Encode a word-segmented corpus into subword pieces
    BpeApply(BpeApplyArgs),
    /// Pack encoded sentences into fixed-size blocks of token IDs
    Pack(PackArgs),
    /// Apply seeded MLM masking to packed blocks
    Mask(MaskArgs),
    /// Block and optimizer-step counts for a pre-training run
    Budget(BudgetArgs),
    /// Parameter count of an encoder configuration
    Params(ParamsArgs),
    /// Map each word to the index of its first subword piece
    Align(AlignArgs),
    /// Decode dependency trees from arc score matrices
    DecodeDep(DecodeDepArgs),
    /// POS tagging accuracy
    EvalPos(EvalTaggedArgs),
    /// Labeled and unlabeled attachment scores
    EvalDep(EvalTaggedArgs),
    /// Exact-match entity span precision, recall and F1
    EvalNer(EvalTaggedArgs),
    /// NLI classification accuracy
    EvalNli(EvalTaggedArgs),
    /// Run every corpus stage from a config file
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone)]
struct DedupParams {
    /// Shingle size in whitespace tokens
    #[arg(long, default_value_t = 5)]
    shingle_size: usize,
    /// Estimated Jaccard similarity at or above which a document is dropped
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Number of MinHash functions
    #[arg(long, default_value_t = 256)]
    num_hashes: usize,
    /// Rows per LSH band [default: chosen from threshold and num-hashes]
    #[arg(long)]
    rows_per_band: Option<usize>,
}

#[derive(Args, Debug)]
struct DedupArgs {
    /// Corpus file or directory
    #[arg(long)]
    input: PathBuf,
    /// Document layout: `file` (one document per file) or `blank` (blank-line separated)
    #[arg(long, default_value_t = CorpusFormat::BlankLineSeparated)]
    format: CorpusFormat,
    /// Kept documents, blank-line separated
    #[arg(long)]
    output: PathBuf,
    /// Removal report: dropped_id, kept_id, similarity
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    params: DedupParams,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Blank-line separated corpus
    #[arg(long)]
    input: PathBuf,
    /// Word lexicon, one word per line with syllables separated by spaces or `_`
    #[arg(long)]
    lexicon: PathBuf,
    /// Abbreviation list, one per line [default: built-in list]
    #[arg(long)]
    abbreviations: Option<PathBuf>,
    /// One sentence per line, blank line between documents
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BpeTrainArgs {
    /// Word-segmented corpus
    #[arg(long)]
    input: PathBuf,
    /// Target number of BPE types, special tokens excluded
    #[arg(long, default_value_t = 64000)]
    vocab_size: usize,
    /// Count the special tokens against `--vocab-size`
    #[arg(long)]
    include_specials: bool,
    #[arg(long)]
    merges: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
}

#[derive(Args, Debug)]
struct ModelPaths {
    /// Merge list written by bpe-train
    #[arg(long)]
    merges: PathBuf,
    /// Vocabulary written by bpe-train
    #[arg(long)]
    vocab: PathBuf,
}

#[derive(Args, Debug)]
struct BpeApplyArgs {
    #[command(flatten)]
    model: ModelPaths,
    /// Word-segmented corpus
    #[arg(long)]
    input: PathBuf,
    /// Space-separated pieces, word ends marked with `</w>`
    #[arg(long)]
    output: PathBuf,
    /// Write `@@` continuation markers instead; such files cannot be packed
    #[arg(long)]
    continuation: bool,
}

#[derive(Args, Debug)]
struct PackArgs {
    #[command(flatten)]
    model: ModelPaths,
    /// Encoded corpus written by bpe-apply
    #[arg(long)]
    input: PathBuf,
    /// Block length including the `<s>` and `</s>` sentinels
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    /// Omit the sentinels; blocks then hold up to `--max-len` pieces
    #[arg(long)]
    no_sentinels: bool,
    /// One block per line, space-separated token IDs
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct MaskArgs {
    #[command(flatten)]
    model: ModelPaths,
    /// Blocks written by pack
    #[arg(long)]
    input: PathBuf,
    /// Fraction of positions selected for prediction
    #[arg(long, default_value_t = 0.15)]
    mask_rate: f64,
    /// Pass over the data; each epoch draws a fresh pattern
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// `input_ids<TAB>labels` per block, -100 at unselected positions
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Number of training sentences
    #[arg(long)]
    sentences: u64,
    /// Average subword tokens per sentence
    #[arg(long)]
    avg_subwords: f64,
    #[arg(long, default_value_t = 256)]
    max_len: u64,
    #[arg(long, default_value_t = 40)]
    epochs: u64,
    #[arg(long, default_value_t = 1024)]
    batch: u64,
    #[arg(long, default_value_t = 2)]
    warmup_epochs: u64,
    /// Print key=value lines instead of the text report
    #[arg(long)]
    kv: bool,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    /// `base` or `large`
    #[arg(long, default_value = "base")]
    preset: String,
    #[arg(long)]
    layers: Option<u64>,
    #[arg(long)]
    hidden: Option<u64>,
    #[arg(long)]
    ffn: Option<u64>,
    #[arg(long)]
    heads: Option<u64>,
    /// Embedding rows, special tokens included [default: 64005]
    #[arg(long)]
    vocab_size: Option<u64>,
    /// Position embeddings [default: 258]
    #[arg(long)]
    max_positions: Option<u64>,
    #[arg(long)]
    kv: bool,
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// Word-segmented corpus
    #[arg(long)]
    words: PathBuf,
    /// The same corpus encoded by bpe-apply
    #[arg(long)]
    subwords: PathBuf,
    /// Added to every index (1 when inputs start with `<s>`)
    #[arg(long, default_value_t = 1)]
    offset: usize,
    /// One line of indices per sentence
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeDepArgs {
    /// Arc score matrices, blank-line separated
    #[arg(long)]
    scores: PathBuf,
    /// Label scores per arc [default: labels left as `_`]
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CoNLL file whose tokens receive the decoded heads [default: forms `_`]
    #[arg(long)]
    conllu: Option<PathBuf>,
    /// Allow more than one token attached to ROOT
    #[arg(long)]
    multi_root: bool,
    /// CoNLL output
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalTaggedArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Print key=value lines
    #[arg(long)]
    kv: bool,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// key=value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw corpus file or directory
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// `file` or `blank` [default: blank]
    #[arg(long)]
    format: Option<CorpusFormat>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    abbreviations: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// [default: 5]
    #[arg(long)]
    shingle_size: Option<usize>,
    /// [default: 0.8]
    #[arg(long)]
    threshold: Option<f64>,
    /// [default: 256]
    #[arg(long)]
    num_hashes: Option<usize>,
    /// [default: 64000]
    #[arg(long)]
    vocab_size: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    max_len: Option<usize>,
    /// [default: 0.15]
    #[arg(long)]
    mask_rate: Option<f64>,
    /// Epochs for the budget report [default: 40]
    #[arg(long)]
    epochs: Option<u64>,
    /// Batch size for the budget report [default: 1024]
    #[arg(long)]
    batch_size: Option<u64>,
    /// [default: 2]
    #[arg(long)]
    warmup_epochs: Option<u64>,
}

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit code: 0 on success, 1 on usage or validation errors, 2 on
/// I/O errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, cli.seed)),
            Err(e) => Err(Error::usage(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(cli.command, cli.seed),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, seed_flag: Option<u64>) -> Result<()> {
    let seed = seed_flag.unwrap_or(0);
    let mut out = Stdout::new();
    match cmd {
        Command::Dedup(a) => {
            let cfg = a.params.to_config(seed);
            out.line(dedup_stage(&a.input, a.format, &cfg, &a.output, &a.report)?)
        }
        Command::Segment(a) => {
            let lexicon = Lexicon::load(&a.lexicon)?;
            let abbr = load_abbreviations(a.abbreviations.as_deref())?;
            out.line(segment_stage(&a.input, &lexicon, &abbr, &a.output)?)
        }
        Command::BpeTrain(a) => {
            let size = if a.include_specials {
                a.vocab_size.checked_sub(NUM_SPECIALS).filter(|&n| n > 0).ok_or_else(|| {
                    Error::usage(format!("vocab size {} leaves no room beside {NUM_SPECIALS} special tokens", a.vocab_size))
                })?
            } else {
                a.vocab_size
            };
            let (_, s) = bpe_train_stage(&a.input, &BpeTrainConfig::with_vocab_size(size), &a.merges, &a.vocab)?;
            out.line(s)
        }
        Command::BpeApply(a) => {
            let model = BpeModel::load(&a.model.merges, &a.model.vocab)?;
            let style = if a.continuation { PieceStyle::Continuation } else { PieceStyle::EndOfWord };
            out.line(bpe_apply_stage(&model, &a.input, &a.output, style)?)
        }
        Command::Pack(a) => {
            let vocab = TokenVocab::from_model(&BpeModel::load(&a.model.merges, &a.model.vocab)?);
            out.line(pack_stage(&vocab, &a.input, a.max_len, !a.no_sentinels, &a.output)?)
        }
        Command::Mask(a) => {
            let vocab = TokenVocab::from_model(&BpeModel::load(&a.model.merges, &a.model.vocab)?);
            let cfg = MaskConfig {
                mask_rate: a.mask_rate,
                ..MaskConfig::default()
            };
            out.line(mask_stage(&vocab, &a.input, cfg, seed, a.epoch, &a.output)?)
        }
        Command::Budget(a) => {
            let r = training_budget(a.sentences, a.avg_subwords, a.max_len, a.epochs, a.batch, a.warmup_epochs)?;
            if a.kv {
                out.raw(&r.to_kv())
            } else {
                out.line(r)
            }
        }
        Command::Params(a) => {
            let mut cfg = match a.preset.as_str() {
                "base" => ArchConfig::base(),
                "large" => ArchConfig::large(),
                other => return Err(Error::usage(format!("unknown preset {other:?}; expected base or large"))),
            };
            cfg.num_layers = a.layers.unwrap_or(cfg.num_layers);
            cfg.hidden_size = a.hidden.unwrap_or(cfg.hidden_size);
            cfg.ffn_size = a.ffn.unwrap_or(cfg.ffn_size);
            cfg.num_heads = a.heads.unwrap_or(cfg.num_heads);
            cfg.vocab_size = a.vocab_size.unwrap_or(cfg.vocab_size);
            cfg.max_positions = a.max_positions.unwrap_or(cfg.max_positions);
            cfg.validate()?;
            let n = count_parameters(&cfg);
            if a.kv {
                out.line(format!("parameters={n}"))
            } else {
                out.line(format!("parameters: {n} ({})", abbreviate(n)))
            }
        }
        Command::Align(a) => out.line(align_stage(&a.words, &a.subwords, a.offset, &a.output)?),
        Command::DecodeDep(a) => out.line(decode_dep_stage(&a)?),
        Command::EvalPos(a) => {
            let r = pos_accuracy(&read_tagged(&a.gold)?, &read_tagged(&a.pred)?)?;
            out.line(if a.kv { r.to_kv() } else { r.to_string() })
        }
        Command::EvalDep(a) => {
            let trees = |p: &Path| -> Result<Vec<_>> { Ok(read_conllu(p)?.iter().map(ConllSentence::tree).collect()) };
            let s = las_uas(&trees(&a.gold)?, &trees(&a.pred)?)?;
            if a.kv {
                out.line(s.las.to_kv())?;
                out.line(s.uas.to_kv())
            } else {
                out.line(format!("LAS: {}\nUAS: {}", format_percent(s.las.value), format_percent(s.uas.value)))
            }
        }
        Command::EvalNer(a) => {
            let gold = read_bio(&a.gold)?;
            let pred = read_bio(&a.pred)?;
            for (name, f) in [("gold", &gold), ("pred", &pred)] {
                for o in &f.orphans {
                    eprintln!(
                        "warning: {name} line {}: orphan {} treated as a span start",
                        o.line, o.label
                    );
                }
            }
            let r = ner_span_f1(&gold.sequences, &pred.sequences)?;
            out.line(if a.kv { r.to_kv() } else { r.to_string() })
        }
        Command::EvalNli(a) => {
            let gold: Vec<String> = read_sentence_pairs(&a.gold)?.iter().map(|p| p.label.to_string()).collect();
            let pred = read_label_column(&a.pred)?;
            let r = nli_accuracy(&gold, &pred)?;
            out.line(if a.kv { r.to_kv() } else { r.to_string() })
        }
        Command::Pipeline(a) => {
            let cfg = PipelineConfig::resolve(&a, seed_flag)?;
            let report = run_pipeline(&cfg)?;
            out.raw(&report.to_string())
        }
    }
}

impl DedupParams {
    fn to_config(&self, seed: u64) -> DedupConfig {
        DedupConfig {
            shingle_size: self.shingle_size,
            threshold: self.threshold,
            num_hashes: self.num_hashes,
            seed,
            rows_per_band: self.rows_per_band,
        }
    }
}

struct Stdout(io::StdoutLock<'static>);

impl Stdout {
    fn new() -> Self {
        Stdout(io::stdout().lock())
    }

    fn raw(&mut self, s: &str) -> Result<()> {
        self.0.write_all(s.as_bytes()).with_path("<stdout>")
    }

    fn line(&mut self, d: impl fmt::Display) -> Result<()> {
        writeln!(self.0, "{d}").with_path("<stdout>")
    }
}

fn load_abbreviations(path: Option<&Path>) -> Result<Abbreviations> {
    match path {
        Some(p) => Abbreviations::load(p),
        None => Ok(Abbreviations::default()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_path(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_path(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_path(path)?))
}

/// Last tab-separated field of every non-empty line.
fn read_label_column(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.with_path(path)?;
        let line = line.trim_end_matches('\r');
        if !line.trim().is_empty() {
            out.push(line.rsplit('\t').next().unwrap_or_default().trim().to_string());
        }
    }
    Ok(out)
}

/// Stage counters, printed as `stage key=value ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub stage: &'static str,
    pub items: Vec<(&'static str, String)>,
}

impl Summary {
    fn new(stage: &'static str) -> Self {
        Summary { stage, items: Vec::new() }
    }

    fn with(mut self, key: &'static str, value: impl fmt::Display) -> Self {
        self.items.push((key, value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.items.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stage)?;
        for (k, v) in &self.items {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Groups of consecutive non-blank lines.
struct LineDocuments<R> {
    lines: io::Lines<R>,
    path: PathBuf,
}

impl<R: BufRead> Iterator for LineDocuments<R> {
    type Item = Result<Vec<String>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut doc = Vec::new();
        for line in self.lines.by_ref() {
            let mut line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.ends_with('\r') {
                line.pop();
            }
            if line.trim().is_empty() {
                if doc.is_empty() {
                    continue;
                }
                return Some(Ok(doc));
            }
            doc.push(line);
        }
        if doc.is_empty() {
            None
        } else {
            Some(Ok(doc))
        }
    }
}

fn line_documents(path: &Path) -> Result<LineDocuments<BufReader<File>>> {
    Ok(LineDocuments {
        lines: open(path)?.lines(),
        path: path.to_path_buf(),
    })
}

/// Collect up to `n` items, stopping at the first error.
fn take_batch<T>(it: &mut impl Iterator<Item = Result<T>>, n: usize) -> Result<Vec<T>> {
    let mut batch = Vec::with_capacity(n.min(1024));
    for item in it.by_ref() {
        batch.push(item?);
        if batch.len() == n {
            break;
        }
    }
    Ok(batch)
}

struct DocWriter {
    w: BufWriter<File>,
    path: PathBuf,
    first: bool,
}

impl DocWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(DocWriter {
            w: create(path)?,
            path: path.to_path_buf(),
            first: true,
        })
    }

    fn write_doc<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut lines = lines.into_iter().peekable();
        if lines.peek().is_none() {
            return Ok(());
        }
        if !self.first {
            self.w.write_all(b"\n").with_path(&self.path)?;
        }
        self.first = false;
        for l in lines {
            self.w.write_all(l.as_bytes()).with_path(&self.path)?;
            self.w.write_all(b"\n").with_path(&self.path)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().with_path(&self.path)
    }
}

/// Stream a corpus through the deduplicator. Kept documents are written
/// blank-line separated with their internal blank lines dropped.
pub fn dedup_stage(
    input: &Path,
    format: CorpusFormat,
    cfg: &DedupConfig,
    output: &Path,
    report: &Path,
) -> Result<Summary> {
    let mut docs = read_corpus(input, format)?;
    let mut dedup = Deduplicator::new(cfg.clone())?;
    let mut out = DocWriter::create(output)?;
    let mut rep = create(report)?;
    let (mut seen, mut kept, mut removed) = (0u64, 0u64, 0u64);
    loop {
        let batch: Vec<Document> = take_batch(&mut docs, BATCH)?;
        if batch.is_empty() {
            break;
        }
        seen += batch.len() as u64;
        let mut drops = Vec::new();
        for (doc, verdict) in dedup.process_batch(batch) {
            match verdict {
                Verdict::Keep => {
                    kept += 1;
                    out.write_doc(doc.text.lines().filter(|l| !l.trim().is_empty()))?;
                }
                Verdict::Drop(r) => {
                    removed += 1;
                    drops.push(r);
                }
            }
        }
        write_dedup_report(&mut rep, &drops).with_path(report)?;
    }
    for issue in docs.skipped() {
        eprintln!(
            "warning: skipped {} ({}): invalid UTF-8 at byte {}",
            issue.doc_id,
            issue.path.display(),
            issue.byte_offset
        );
    }
    out.finish()?;
    rep.flush().with_path(report)?;
    Ok(Summary::new("dedup")
        .with("documents", seen)
        .with("kept", kept)
        .with("removed", removed)
        .with("skipped_invalid_utf8", docs.skipped().len()))
}

/// Sentence-split, detach punctuation and word-segment every document.
/// Documents containing the reserved word joiner are skipped and counted.
pub fn segment_stage(input: &Path, lexicon: &Lexicon, abbr: &Abbreviations, output: &Path) -> Result<Summary> {
    let mut docs = read_corpus(input, CorpusFormat::BlankLineSeparated)?;
    let mut out = DocWriter::create(output)?;
    let (mut seen, mut skipped, mut sentences) = (0u64, 0u64, 0u64);
    loop {
        let batch: Vec<Document> = take_batch(&mut docs, BATCH)?;
        if batch.is_empty() {
            break;
        }
        seen += batch.len() as u64;
        let segmented: Vec<std::result::Result<Vec<String>, (String, Error)>> = batch
            .par_iter()
            .map(|d| {
                check_raw_text(&d.text).map_err(|e| (d.id.clone(), e))?;
                Ok(split_sentences(&d.text, abbr)
                    .iter()
                    .map(|s| segment_words(&split_punctuation(s, abbr), lexicon).to_string())
                    .collect())
            })
            .collect();
        for doc in segmented {
            match doc {
                Ok(lines) => {
                    sentences += lines.len() as u64;
                    out.write_doc(lines.iter().map(String::as_str))?;
                }
                Err((id, e)) => {
                    skipped += 1;
                    eprintln!("warning: skipped {id}: {e}");
                }
            }
        }
    }
    out.finish()?;
    Ok(Summary::new("segment")
        .with("documents", seen)
        .with("sentences", sentences)
        .with("skipped_reserved_char", skipped)
        .with("skipped_invalid_utf8", docs.skipped().len()))
}

/// Count words in one streaming pass and train.
pub fn bpe_train_stage(
    input: &Path,
    cfg: &BpeTrainConfig,
    merges: &Path,
    vocab: &Path,
) -> Result<(BpeModel, Summary)> {
    let mut counts = WordCounts::new();
    let mut lines = open(input)?.lines().map(|l| l.with_path(input));
    loop {
        let batch = take_batch(&mut lines, BATCH * 4)?;
        if batch.is_empty() {
            break;
        }
        let chunk: Vec<_> = batch
            .iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| crate::segmenter::WordSegmentedSentence::from_line(l))
            .collect();
        counts.merge(WordCounts::from_sentences_par(&chunk));
    }
    let model = train_from_counts(&counts, cfg)?;
    model.save(merges, vocab)?;
    let summary = Summary::new("bpe-train")
        .with("word_types", counts.len())
        .with("merges", model.merges().len())
        .with("vocab_size", model.vocab_size());
    Ok((model, summary))
}

/// How `bpe-apply` marks word boundaries in its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceStyle {
    /// `</w>` on the last piece of each word.
    EndOfWord,
    /// `@@` on every non-final piece.
    Continuation,
}

/// Encode every sentence; document boundaries are preserved.
pub fn bpe_apply_stage(model: &BpeModel, input: &Path, output: &Path, style: PieceStyle) -> Result<Summary> {
    let mut docs = line_documents(input)?;
    let mut out = DocWriter::create(output)?;
    let (mut sentences, mut pieces) = (0u64, 0u64);
    loop {
        let batch = take_batch(&mut docs, BATCH)?;
        if batch.is_empty() {
            break;
        }
        let encoded: Vec<Vec<String>> = batch
            .par_iter()
            .map(|doc| {
                doc.iter()
                    .map(|l| {
                        let sw = model.encode(&l.split_whitespace().collect::<Vec<_>>());
                        match style {
                            PieceStyle::EndOfWord => sw.to_eow_line(),
                            PieceStyle::Continuation => sw.to_continuation_line(model.eow()),
                        }
                    })
                    .collect()
            })
            .collect();
        for doc in &encoded {
            sentences += doc.len() as u64;
            pieces += doc.iter().map(|l| l.split(' ').count() as u64).sum::<u64>();
            out.write_doc(doc.iter().map(String::as_str))?;
        }
    }
    out.finish()?;
    let avg = if sentences == 0 { 0.0 } else { pieces as f64 / sentences as f64 };
    Ok(Summary::new("bpe-apply")
        .with("sentences", sentences)
        .with("pieces", pieces)
        .with("avg_pieces_per_sentence", format!("{avg:.4}")))
}

/// Pack each document's sentences into blocks of at most `max_len` IDs,
/// the `<s>`/`</s>` sentinels included when `sentinels` is set.
pub fn pack_stage(vocab: &TokenVocab, input: &Path, max_len: usize, sentinels: bool, output: &Path) -> Result<Summary> {
    if sentinels && max_len < 4 {
        return Err(Error::usage(format!("max_len {max_len} leaves no room beside the two sentinels")));
    }
    let mut packer = BlockPacker::new(if sentinels { max_len - 2 } else { max_len })?;
    let mut w = create(output)?;
    let (mut blocks, mut tokens) = (0u64, 0u64);
    let mut emit = |bs: Vec<crate::pretrain::SentenceBlock>, w: &mut BufWriter<File>| -> Result<()> {
        for b in bs {
            let b = if sentinels { b.with_sentinels(vocab.bos_id(), vocab.eos_id()) } else { b };
            blocks += 1;
            tokens += b.len() as u64;
            crate::pretrain::write_blocks(&mut *w, [&b]).with_path(output)?;
        }
        Ok(())
    };
    for doc in line_documents(input)? {
        for line in doc? {
            let sw = SubwordSequence::from_eow_line(&line, EOW);
            let ids: Vec<u32> = sw.pieces.iter().map(|p| vocab.id(p)).collect();
            emit(packer.push_sentence(&ids), &mut w)?;
        }
        emit(packer.end_document(), &mut w)?;
    }
    emit(packer.finish(), &mut w)?;
    w.flush().with_path(output)?;
    Ok(Summary::new("pack").with("blocks", blocks).with("tokens", tokens))
}

fn parse_ids(line: &str, path: &Path, lineno: usize) -> Result<Vec<u32>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| Error::parse(path.display().to_string(), lineno, format!("invalid token id {t:?}")))
        })
        .collect()
}

/// Mask every block with a seed derived from (`seed`, `epoch`, block index).
pub fn mask_stage(
    vocab: &TokenVocab,
    input: &Path,
    cfg: MaskConfig,
    seed: u64,
    epoch: u64,
    output: &Path,
) -> Result<Summary> {
    let masker = Masker::for_vocab(cfg, vocab)?;
    let mut lines = open(input)?.lines().map(|l| l.with_path(input));
    let mut w = create(output)?;
    let (mut index, mut positions, mut selected) = (0u64, 0u64, 0u64);
    loop {
        let batch = take_batch(&mut lines, BATCH)?;
        if batch.is_empty() {
            break;
        }
        let start = index;
        let masked: Vec<Result<_>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, line)| {
                let idx = start + i as u64;
                let ids = parse_ids(line, input, idx as usize + 1)?;
                Ok(masker.mask(&ids, derive_seed(seed, epoch, idx)))
            })
            .collect();
        for m in masked {
            let m = m?;
            positions += m.input_ids.len() as u64;
            selected += m.selected().count() as u64;
            writeln!(w, "{}", m.to_line()).with_path(output)?;
        }
        index += batch.len() as u64;
    }
    w.flush().with_path(output)?;
    Ok(Summary::new("mask")
        .with("blocks", index)
        .with("positions", positions)
        .with("selected", selected))
}

/// First-piece indices for each sentence of a segmented corpus and its
/// encoding; blank lines are skipped in both.
pub fn align_stage(words: &Path, subwords: &Path, offset: usize, output: &Path) -> Result<Summary> {
    let non_blank = |p: &Path| -> Result<_> {
        let path = p.to_path_buf();
        Ok(open(p)?
            .lines()
            .enumerate()
            .map(move |(i, l)| l.with_path(&path).map(|l| (i + 1, l)))
            .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty())))
    };
    let mut ws = non_blank(words)?;
    let mut ss = non_blank(subwords)?;
    let mut w = create(output)?;
    let mut n = 0u64;
    loop {
        match (ws.next().transpose()?, ss.next().transpose()?) {
            (None, None) => break,
            (Some((lineno, wl)), Some((_, sl))) => {
                let word_list: Vec<&str> = wl.split_whitespace().collect();
                let sw = SubwordSequence::from_eow_line(&sl, EOW);
                let a = align_first_subword(&word_list, &sw, offset)
                    .map_err(|e| Error::validation(format!("{} line {lineno}: {e}", words.display())))?;
                let idx: Vec<String> = a.first_piece_index.iter().map(usize::to_string).collect();
                writeln!(w, "{}", idx.join(" ")).with_path(output)?;
                n += 1;
            }
            _ => {
                return Err(Error::validation(format!(
                    "{} and {} have different sentence counts",
                    words.display(),
                    subwords.display()
                )))
            }
        }
    }
    w.flush().with_path(output)?;
    Ok(Summary::new("align").with("sentences", n))
}

fn decode_dep_stage(a: &DecodeDepArgs) -> Result<Summary> {
    let matrices = read_score_matrices(&a.scores)?;
    let labels = a.labels.as_deref().map(read_label_scores).transpose()?;
    let mut sentences = match &a.conllu {
        Some(p) => read_conllu(p)?,
        None => Vec::new(),
    };
    if let Some(ls) = &labels {
        if ls.len() != matrices.len() {
            return Err(Error::validation(format!(
                "{} score matrices but {} label score blocks",
                matrices.len(),
                ls.len()
            )));
        }
    }
    if a.conllu.is_some() && sentences.len() != matrices.len() {
        return Err(Error::validation(format!(
            "{} score matrices but {} CoNLL sentences",
            matrices.len(),
            sentences.len()
        )));
    }
    let trees: Vec<_> = matrices
        .par_iter()
        .enumerate()
        .map(|(i, m)| decode_tree(m, labels.as_ref().map(|l| &l[i]), !a.multi_root))
        .collect::<Result<_>>()?;
    if a.conllu.is_none() {
        sentences = trees
            .iter()
            .map(|t| ConllSentence {
                comments: Vec::new(),
                tokens: (0..t.len())
                    .map(|i| ConllToken::bare(i + 1, "_", t.heads[i], t.labels[i].clone()))
                    .collect(),
            })
            .collect();
    } else {
        for (s, t) in sentences.iter_mut().zip(&trees) {
            s.set_tree(t)?;
        }
    }
    let mut w = create(&a.output)?;
    write_conllu(&mut w, &sentences).with_path(&a.output)?;
    w.flush().with_path(&a.output)?;
    Ok(Summary::new("decode-dep").with("sentences", trees.len()))
}

/// Settings for `pipeline`, resolved from defaults, config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub format: CorpusFormat,
    pub lexicon: PathBuf,
    pub abbreviations: Option<PathBuf>,
    pub output: PathBuf,
    pub dedup: DedupConfig,
    pub vocab_size: usize,
    pub max_len: usize,
    pub mask_rate: f64,
    pub epochs: u64,
    pub batch_size: u64,
    pub warmup_epochs: u64,
    pub seed: u64,
}

const CONFIG_KEYS: &[&str] = &[
    "corpus",
    "format",
    "lexicon",
    "abbreviations",
    "output",
    "shingle_size",
    "threshold",
    "num_hashes",
    "vocab_size",
    "max_len",
    "mask_rate",
    "epochs",
    "batch_size",
    "warmup_epochs",
    "seed",
];

/// Parse flat `key=value` lines; `#` starts a comment line.
pub fn parse_config(text: &str, name: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, i + 1, "expected key=value"))?;
        let k = k.trim();
        if !CONFIG_KEYS.contains(&k) {
            return Err(Error::parse(name, i + 1, format!("unknown key {k:?}")));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn config_value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::usage(format!("config value {key}={v:?} is invalid")))
        })
        .transpose()
}

impl PipelineConfig {
    fn resolve(a: &PipelineArgs, seed_flag: Option<u64>) -> Result<Self> {
        let (map, base) = match &a.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_path(p)?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (parse_config(&text, &p.display().to_string())?, dir)
            }
            None => (BTreeMap::new(), PathBuf::new()),
        };
        let path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
            flag.clone().or_else(|| map.get(key).map(|v| base.join(v)))
        };
        let required = |p: Option<PathBuf>, key: &str| {
            p.ok_or_else(|| Error::usage(format!("pipeline needs --{key} or {key}= in the config")))
        };
        let defaults = DedupConfig::default();
        let seed = seed_flag.or(config_value(&map, "seed")?).unwrap_or(0);
        let cfg = PipelineConfig {
            corpus: required(path(&a.corpus, "corpus"), "corpus")?,
            format: a.format.or(config_value(&map, "format")?).unwrap_or(CorpusFormat::BlankLineSeparated),
            lexicon: required(path(&a.lexicon, "lexicon"), "lexicon")?,
            abbreviations: path(&a.abbreviations, "abbreviations"),
            output: required(path(&a.output, "output"), "output")?,
            dedup: DedupConfig {
                shingle_size: a.shingle_size.or(config_value(&map, "shingle_size")?).unwrap_or(defaults.shingle_size),
                threshold: a.threshold.or(config_value(&map, "threshold")?).unwrap_or(defaults.threshold),
                num_hashes: a.num_hashes.or(config_value(&map, "num_hashes")?).unwrap_or(defaults.num_hashes),
                seed,
                rows_per_band: None,
            },
            vocab_size: a.vocab_size.or(config_value(&map, "vocab_size")?).unwrap_or(64_000),
            max_len: a.max_len.or(config_value(&map, "max_len")?).unwrap_or(256),
            mask_rate: a.mask_rate.or(config_value(&map, "mask_rate")?).unwrap_or(0.15),
            epochs: a.epochs.or(config_value(&map, "epochs")?).unwrap_or(40),
            batch_size: a.batch_size.or(config_value(&map, "batch_size")?).unwrap_or(1024),
            warmup_epochs: a.warmup_epochs.or(config_value(&map, "warmup_epochs")?).unwrap_or(2),
            seed,
        };
        for p in [&cfg.corpus, &cfg.lexicon].into_iter().chain(cfg.abbreviations.as_ref()) {
            if !p.exists() {
                return Err(Error::io(p, io::Error::new(io::ErrorKind::NotFound, "input not found")));
            }
        }
        Ok(cfg)
    }
}

/// File names written by `pipeline`, in stage order.
pub const PIPELINE_OUTPUTS: &[&str] = &[
    "dedup.txt",
    "dedup_report.tsv",
    "segmented.txt",
    "bpe.merges",
    "bpe.vocab",
    "encoded.txt",
    "blocks.txt",
    "masked.txt",
    "budget.txt",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub summaries: Vec<Summary>,
    /// `(file name, SHA-256 hex)` for every output.
    pub digests: Vec<(String, String)>,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.summaries {
            writeln!(f, "{s}")?;
        }
        for (name, d) in &self.digests {
            writeln!(f, "{d}  {name}")?;
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut r = open(path)?;
    loop {
        let buf = r.fill_buf().with_path(path)?;
        if buf.is_empty() {
            break;
        }
        hasher.update(buf);
        let n = buf.len();
        r.consume(n);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Run dedup, segment, bpe-train, bpe-apply, pack, mask (epoch 0) and the
/// budget report, then write `digests.sha256` to the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = |name: &str| cfg.output.join(name);
    std::fs::create_dir_all(&cfg.output).with_path(&cfg.output)?;
    let mut summaries = Vec::new();

    summaries.push(dedup_stage(&cfg.corpus, cfg.format, &cfg.dedup, &out("dedup.txt"), &out("dedup_report.tsv"))?);

    let lexicon = Lexicon::load(&cfg.lexicon)?;
    let abbr = load_abbreviations(cfg.abbreviations.as_deref())?;
    let seg = segment_stage(&out("dedup.txt"), &lexicon, &abbr, &out("segmented.txt"))?;
    summaries.push(seg);

    let (model, s) = bpe_train_stage(
        &out("segmented.txt"),
        &BpeTrainConfig::with_vocab_size(cfg.vocab_size),
        &out("bpe.merges"),
        &out("bpe.vocab"),
    )?;
    summaries.push(s);
    drop(model);
    let model = BpeModel::load(out("bpe.merges"), out("bpe.vocab"))?;

    let applied = bpe_apply_stage(&model, &out("segmented.txt"), &out("encoded.txt"), PieceStyle::EndOfWord)?;
    let sentences: u64 = applied.get("sentences").and_then(|v| v.parse().ok()).unwrap_or(0);
    let pieces: u64 = applied.get("pieces").and_then(|v| v.parse().ok()).unwrap_or(0);
    summaries.push(applied);

    let vocab = TokenVocab::from_model(&model);
    summaries.push(pack_stage(&vocab, &out("encoded.txt"), cfg.max_len, true, &out("blocks.txt"))?);

    let mask_cfg = MaskConfig {
        mask_rate: cfg.mask_rate,
        ..MaskConfig::default()
    };
    summaries.push(mask_stage(&vocab, &out("blocks.txt"), mask_cfg, cfg.seed, 0, &out("masked.txt"))?);

    let avg = if sentences == 0 { 0.0 } else { pieces as f64 / sentences as f64 };
    let budget = training_budget(
        sentences,
        avg,
        cfg.max_len as u64,
        cfg.epochs,
        cfg.batch_size,
        cfg.warmup_epochs,
    )?;
    let budget_path = out("budget.txt");
    std::fs::write(&budget_path, budget.to_kv()).with_path(&budget_path)?;
    summaries.push(Summary::new("budget").with("blocks", budget.num_blocks).with("total_steps", budget.total_steps));

    let mut digests = Vec::new();
    for name in PIPELINE_OUTPUTS {
        digests.push((name.to_string(), sha256_file(&out(name))?));
    }
    let listing: String = digests.iter().map(|(n, d)| format!("{d}  {n}\n")).collect();
    let digest_path = out("digests.sha256");
    std::fs::write(&digest_path, listing).with_path(&digest_path)?;
    Ok(PipelineReport { summaries, digests })
}
