//! Corpus ingestion, downstream-task file formats, near-duplicate removal
//! and split-size validation.

mod dedup;
mod formats;
mod stats;

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, IoContext, Result};

pub use dedup::{
    dedup_corpus, estimated_jaccard, minhash_signature, shingle_hash, write_dedup_report,
    DedupConfig, DedupOutcome, Deduplicator, HashFamily, MinHashSignature, Removal, ShingleSet,
    Verdict,
};
pub use formats::{
    parse_bio, parse_conllu, parse_sentence_pairs, parse_tagged, read_bio, read_conllu,
    read_sentence_pairs, read_tagged, write_conllu, write_sentence_pairs, write_tagged, BioFile,
    BioIssue, ConllSentence, ConllToken, NliPair,
};
pub use stats::{reference_split_stats, validate_split_stats, DatasetStats, SplitDiff, SplitReport, Task};

/// A raw, unsegmented document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// On-disk layout of a raw corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Every file is one document.
    OneDocPerFile,
    /// Documents are paragraphs separated by blank lines.
    BlankLineSeparated,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" | "one-doc-per-file" => Ok(CorpusFormat::OneDocPerFile),
            "blank" | "blank-line" | "blank-line-separated" => Ok(CorpusFormat::BlankLineSeparated),
            other => Err(Error::usage(format!(
                "unknown corpus format {other:?} (expected one-doc-per-file or blank-line-separated)"
            ))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::OneDocPerFile => "one-doc-per-file",
            CorpusFormat::BlankLineSeparated => "blank-line-separated",
        })
    }
}

/// A document that was skipped because it was not valid UTF-8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeIssue {
    pub doc_id: String,
    pub path: PathBuf,
    /// Byte offset of the first invalid sequence within the file.
    pub byte_offset: usize,
}

/// Streaming corpus reader.
///
/// Files are visited in lexicographic order of their path relative to the
/// corpus root; within a file, documents come out in positional order. Only
/// the list of file paths and the current paragraph are held in memory.
pub struct CorpusReader {
    root: PathBuf,
    files: VecDeque<PathBuf>,
    format: CorpusFormat,
    current: Option<ParagraphReader>,
    skipped: Vec<DecodeIssue>,
}

/// Open a corpus (a single file or a directory tree) for streaming.
pub fn read_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<CorpusReader> {
    let root = path.as_ref().to_path_buf();
    let meta = std::fs::metadata(&root).with_path(&root)?;
    let mut files = Vec::new();
    if meta.is_file() {
        files.push(root.clone());
    } else {
        for entry in walkdir::WalkDir::new(&root).follow_links(true) {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(&root).to_path_buf();
                Error::io(path, e.into())
            })?;
            if entry.file_type().is_file() {
                files.push(entry.into_path());
            }
        }
        files.sort_by_key(|a| relative_id(&root, a));
    }
    Ok(CorpusReader {
        root,
        files: files.into(),
        format,
        current: None,
        skipped: Vec::new(),
    })
}

fn relative_id(root: &Path, path: &Path) -> String {
    if root == path {
        return path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
    }
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl CorpusReader {
    /// Documents skipped so far because of invalid UTF-8.
    pub fn skipped(&self) -> &[DecodeIssue] {
        &self.skipped
    }

    fn next_whole_file(&mut self) -> Option<Result<Document>> {
        while let Some(path) = self.files.pop_front() {
            let id = relative_id(&self.root, &path);
            let mut bytes = Vec::new();
            let read = File::open(&path).and_then(|mut f| f.read_to_end(&mut bytes));
            if let Err(e) = read {
                return Some(Err(Error::io(path, e)));
            }
            match String::from_utf8(bytes) {
                Ok(text) => return Some(Ok(Document { id, text })),
                Err(e) => self.skipped.push(DecodeIssue {
                    doc_id: id,
                    path,
                    byte_offset: e.utf8_error().valid_up_to(),
                }),
            }
        }
        None
    }

    fn next_paragraph(&mut self) -> Option<Result<Document>> {
        loop {
            if self.current.is_none() {
                let path = self.files.pop_front()?;
                let file = match File::open(&path) {
                    Ok(f) => f,
                    Err(e) => return Some(Err(Error::io(path, e))),
                };
                self.current = Some(ParagraphReader {
                    id_prefix: relative_id(&self.root, &path),
                    path,
                    reader: BufReader::new(file),
                    offset: 0,
                    index: 0,
                });
            }
            let reader = self.current.as_mut().expect("reader just installed");
            match reader.next_paragraph() {
                Ok(Some(Paragraph::Text(doc))) => return Some(Ok(doc)),
                Ok(Some(Paragraph::Invalid(issue))) => self.skipped.push(issue),
                Ok(None) => self.current = None,
                Err(e) => {
                    self.current = None;
                    return Some(Err(e));
                }
            }
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.format {
            CorpusFormat::OneDocPerFile => self.next_whole_file(),
            CorpusFormat::BlankLineSeparated => self.next_paragraph(),
        }
    }
}

struct ParagraphReader {
    id_prefix: String,
    path: PathBuf,
    reader: BufReader<File>,
    offset: usize,
    index: usize,
}

enum Paragraph {
    Text(Document),
    Invalid(DecodeIssue),
}

impl ParagraphReader {
    fn next_paragraph(&mut self) -> Result<Option<Paragraph>> {
        let mut text = String::new();
        let mut lines = 0usize;
        let mut bad_offset: Option<usize> = None;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let line_start = self.offset;
            let n = self
                .reader
                .read_until(b'\n', &mut buf)
                .with_path(&self.path)?;
            self.offset += n;
            if n == 0 {
                break;
            }
            let mut line: &[u8] = &buf;
            if let Some(rest) = line.strip_suffix(b"\n") {
                line = rest;
            }
            if let Some(rest) = line.strip_suffix(b"\r") {
                line = rest;
            }
            if line.iter().all(u8::is_ascii_whitespace) {
                if lines > 0 {
                    break;
                }
                continue;
            }
            match std::str::from_utf8(line) {
                Ok(s) => {
                    if lines > 0 {
                        text.push('\n');
                    }
                    text.push_str(s);
                }
                Err(e) => {
                    bad_offset.get_or_insert(line_start + e.valid_up_to());
                }
            }
            lines += 1;
        }
        if lines == 0 {
            return Ok(None);
        }
        let id = format!("{}#{}", self.id_prefix, self.index);
        self.index += 1;
        Ok(Some(match bad_offset {
            Some(byte_offset) => Paragraph::Invalid(DecodeIssue {
                doc_id: id,
                path: self.path.clone(),
                byte_offset,
            }),
            None => Paragraph::Text(Document { id, text }),
        }))
    }
}

/// Write documents in canonical blank-line-separated form: each document's
/// text followed by a newline, with one empty line between documents.
pub fn write_blank_line_corpus<'a, W: Write>(
    mut w: W,
    docs: impl IntoIterator<Item = &'a Document>,
) -> std::io::Result<()> {
    for (i, doc) in docs.into_iter().enumerate() {
        if i > 0 {
            w.write_all(b"\n")?;
        }
        w.write_all(doc.text.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
