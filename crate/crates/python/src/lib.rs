//! Python bindings for the vnprep preprocessing toolkit.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vnprep_core::bpe::{self, BpeTrainConfig, SubwordSequence};
use vnprep_core::corpus::{self, DedupConfig, Document, ShingleSet};
use vnprep_core::segmenter::{self, Lexicon, Sentence, WordSegmentedSentence};
use vnprep_core::{finetune, metrics, parser, pretrain, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Trained byte-pair-encoding model.
#[pyclass(module = "vnprep_py", frozen)]
struct BpeModel {
    inner: bpe::BpeModel,
}

#[pymethods]
impl BpeModel {
    /// Train on word-segmented lines (words separated by spaces).
    #[staticmethod]
    #[pyo3(signature = (lines, vocab_size = 64000))]
    fn train(lines: Vec<String>, vocab_size: usize) -> PyResult<Self> {
        let corpus: Vec<WordSegmentedSentence> = lines.iter().map(|l| WordSegmentedSentence::from_line(l)).collect();
        let inner = bpe::train_bpe(corpus, &BpeTrainConfig::with_vocab_size(vocab_size)).map_err(py_err)?;
        Ok(BpeModel { inner })
    }

    #[staticmethod]
    fn load(merges_path: &str, vocab_path: &str) -> PyResult<Self> {
        Ok(BpeModel { inner: bpe::BpeModel::load(merges_path, vocab_path).map_err(py_err)? })
    }

    fn save(&self, merges_path: &str, vocab_path: &str) -> PyResult<()> {
        self.inner.save(merges_path, vocab_path).map_err(py_err)
    }

    #[getter]
    fn merges(&self) -> Vec<(String, String)> {
        self.inner.merges().to_vec()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn encode_word(&self, word: &str) -> Vec<String> {
        self.inner.encode_word(word)
    }

    /// Pieces for a word list, with the end-of-word marker on final pieces.
    fn encode(&self, words: Vec<String>) -> Vec<String> {
        self.inner.encode(&words).pieces
    }

    fn decode(&self, pieces: Vec<String>) -> PyResult<Vec<String>> {
        let sw = SubwordSequence::from_eow_line(&pieces.join(" "), self.inner.eow());
        self.inner.decode(&sw).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("BpeModel(merges={}, vocab_size={})", self.inner.merges().len(), self.inner.vocab_size())
    }
}

/// Longest-match word segmentation. Lexicon entries are words with
/// syllables joined by spaces or underscores.
#[pyfunction]
fn segment(syllables: Vec<String>, lexicon: Vec<String>) -> PyResult<Vec<String>> {
    let mut lex = Lexicon::new();
    for entry in &lexicon {
        lex.insert(entry.split([' ', '_']).filter(|s| !s.is_empty())).map_err(py_err)?;
    }
    let s = Sentence::new(syllables).map_err(py_err)?;
    Ok(segmenter::segment_words(&s, &lex).words)
}

/// Split raw text into sentences of syllables.
#[pyfunction]
fn split_sentences(text: &str) -> Vec<Vec<String>> {
    segmenter::split_sentences(text, &segmenter::Abbreviations::default())
        .into_iter()
        .map(|s| s.syllables)
        .collect()
}

/// Indices of kept documents and `(dropped, kept, similarity)` records.
#[pyfunction]
#[pyo3(signature = (texts, shingle_size = 5, threshold = 0.8, num_hashes = 256, seed = 0))]
fn dedup(
    texts: Vec<String>,
    shingle_size: usize,
    threshold: f64,
    num_hashes: usize,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<(usize, usize, f64)>)> {
    let cfg = DedupConfig { shingle_size, threshold, num_hashes, seed, ..DedupConfig::default() };
    let docs = texts.into_iter().enumerate().map(|(i, t)| Document::new(i.to_string(), t));
    let out = corpus::dedup_corpus(docs, &cfg).map_err(py_err)?;
    let idx = |id: &str| id.parse::<usize>().unwrap();
    Ok((
        out.kept.iter().map(|d| idx(&d.id)).collect(),
        out.removed.iter().map(|r| (idx(&r.dropped_id), idx(&r.kept_id), r.similarity)).collect(),
    ))
}

/// MinHash estimate of shingle Jaccard similarity between two texts.
#[pyfunction]
#[pyo3(signature = (a, b, shingle_size = 5, num_hashes = 256, seed = 0))]
fn minhash_jaccard(a: &str, b: &str, shingle_size: usize, num_hashes: usize, seed: u64) -> PyResult<f64> {
    let sa = ShingleSet::from_text("a", a, shingle_size);
    let sb = ShingleSet::from_text("b", b, shingle_size);
    Ok(corpus::estimated_jaccard(
        &corpus::minhash_signature(&sa, num_hashes, seed).map_err(py_err)?,
        &corpus::minhash_signature(&sb, num_hashes, seed).map_err(py_err)?,
    ))
}

#[pyfunction]
#[pyo3(signature = (sentences, max_len = 256))]
fn pack_blocks(sentences: Vec<Vec<u32>>, max_len: usize) -> PyResult<Vec<Vec<u32>>> {
    let blocks = pretrain::pack_blocks(&sentences, max_len).map_err(py_err)?;
    Ok(blocks.into_iter().map(|b| b.token_ids).collect())
}

/// Returns `(input_ids, labels)`; unselected labels are -100.
#[pyfunction]
#[pyo3(signature = (token_ids, seed, mask_id, vocab_size, special_ids, mask_rate = 0.15))]
fn mask(
    token_ids: Vec<u32>,
    seed: u64,
    mask_id: u32,
    vocab_size: u32,
    special_ids: Vec<u32>,
    mask_rate: f64,
) -> PyResult<(Vec<u32>, Vec<i64>)> {
    let cfg = pretrain::MaskConfig { mask_rate, ..pretrain::MaskConfig::default() };
    let m = pretrain::Masker::new(cfg, mask_id, vocab_size, &special_ids).map_err(py_err)?.mask(&token_ids, seed);
    Ok((m.input_ids, m.labels))
}

#[pyfunction]
#[pyo3(signature = (sentences, avg_subwords, max_len = 256, epochs = 40, batch_size = 1024, warmup_epochs = 2))]
fn training_budget<'py>(
    py: Python<'py>,
    sentences: u64,
    avg_subwords: f64,
    max_len: u64,
    epochs: u64,
    batch_size: u64,
    warmup_epochs: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = pretrain::training_budget(sentences, avg_subwords, max_len, epochs, batch_size, warmup_epochs)
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("num_blocks", r.num_blocks)?;
    d.set_item("steps_per_epoch", r.steps_per_epoch)?;
    d.set_item("total_steps", r.total_steps)?;
    d.set_item("warmup_steps", r.warmup_steps)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (preset = "base"))]
fn count_parameters(preset: &str) -> PyResult<u64> {
    let cfg = match preset {
        "base" => pretrain::ArchConfig::base(),
        "large" => pretrain::ArchConfig::large(),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    Ok(pretrain::count_parameters(&cfg))
}

/// Maximum spanning arborescence over a `(n+1) x (n+1)` head-by-dependent
/// score matrix. Returns the head of each token `1..=n`.
#[pyfunction]
#[pyo3(signature = (scores, single_root = true))]
fn decode_mst(scores: Vec<Vec<f64>>, single_root: bool) -> PyResult<Vec<usize>> {
    let m = parser::ArcScoreMatrix::from_rows(&scores).map_err(py_err)?;
    Ok(parser::decode_mst(&m, single_root))
}

#[pyfunction]
#[pyo3(signature = (scores, patience = 5, max_epochs = 30))]
fn early_stopping(scores: Vec<f64>, patience: usize, max_epochs: usize) -> PyResult<(usize, usize)> {
    let policy = finetune::TrainingSchedulePolicy { max_epochs, patience };
    let o = finetune::early_stopping_schedule(&scores, &policy).map_err(py_err)?;
    Ok((o.stop_epoch, o.best_epoch))
}

fn sequences(tags: Vec<Vec<String>>) -> Vec<metrics::LabeledSequence> {
    tags.into_iter().map(metrics::LabeledSequence::from_labels).collect()
}

#[pyfunction]
fn pos_accuracy(gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<f64> {
    Ok(metrics::pos_accuracy(&sequences(gold), &sequences(pred)).map_err(py_err)?.value)
}

/// `(precision, recall, f1)` over exact BIO spans.
#[pyfunction]
fn ner_f1(gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<(f64, f64, f64)> {
    let r = metrics::ner_span_f1(&sequences(gold), &sequences(pred)).map_err(py_err)?;
    Ok((r.precision, r.recall, r.f1))
}

/// Each tree is `(heads, labels)`. Returns `(las, uas)`.
#[pyfunction]
fn las_uas(gold: Vec<(Vec<usize>, Vec<String>)>, pred: Vec<(Vec<usize>, Vec<String>)>) -> PyResult<(f64, f64)> {
    let trees = |v: Vec<(Vec<usize>, Vec<String>)>| -> PyResult<Vec<parser::DependencyTree>> {
        v.into_iter().map(|(h, l)| parser::DependencyTree::new(h, l).map_err(py_err)).collect()
    };
    let s = metrics::las_uas(&trees(gold)?, &trees(pred)?).map_err(py_err)?;
    Ok((s.las.value, s.uas.value))
}

#[pyfunction]
fn nli_accuracy(gold: Vec<String>, pred: Vec<String>) -> PyResult<f64> {
    Ok(metrics::nli_accuracy(&gold, &pred).map_err(py_err)?.value)
}

/// Run the full preprocessing pipeline from a config file into `output`;
/// returns `(name, sha256)` for each output file.
#[pyfunction]
#[pyo3(signature = (config, output, seed = None))]
fn run_pipeline(config: &str, output: &str, seed: Option<u64>) -> PyResult<Vec<(String, String)>> {
    let mut args = vec!["vnprep".to_string()];
    if let Some(s) = seed {
        args.extend(["--seed".to_string(), s.to_string()]);
    }
    args.extend(["pipeline", "--config", config, "--output", output].map(String::from));
    let code = vnprep_core::cli::run(args);
    if code != 0 {
        return Err(PyValueError::new_err(format!("pipeline exited with status {code}")));
    }
    let path = std::path::Path::new(output).join("digests.sha256");
    let digests = std::fs::read_to_string(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok(digests
        .lines()
        .filter_map(|l| l.split_once("  "))
        .map(|(h, n)| (n.to_string(), h.to_string()))
        .collect())
}

#[pymodule]
fn vnprep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BpeModel>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(minhash_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(pack_blocks, m)?)?;
    m.add_function(wrap_pyfunction!(mask, m)?)?;
    m.add_function(wrap_pyfunction!(training_budget, m)?)?;
    m.add_function(wrap_pyfunction!(count_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(decode_mst, m)?)?;
    m.add_function(wrap_pyfunction!(early_stopping, m)?)?;
    m.add_function(wrap_pyfunction!(pos_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(ner_f1, m)?)?;
    m.add_function(wrap_pyfunction!(las_uas, m)?)?;
    m.add_function(wrap_pyfunction!(nli_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("EOW", bpe::EOW)?;
    m.add("IGNORE_INDEX", pretrain::IGNORE_INDEX)?;
    Ok(())
}
