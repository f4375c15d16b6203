//! Readers and writers for the downstream task files: CoNLL-style
//! dependency treebanks, `token<TAB>label` tagging files, and NLI pairs.
//!
//! Canonical forms (what the writers emit): every sentence of a tree or
//! tagging file is terminated by one empty line; NLI files have one pair
//! per line. Readers accept any number of blank lines between sentences.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::metrics::{LabeledSequence, NliLabel};
use crate::parser::DependencyTree;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_path(path)?))
}

fn lines_of<'a, R: BufRead + 'a>(reader: R, name: &'a str) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader.lines().enumerate().map(move |(i, line)| {
        line.map(|mut l| {
            if l.ends_with('\r') {
                l.pop();
            }
            (i + 1, l)
        })
        .map_err(|e| Error::io(name, e))
    })
}

/// One token row of a 10-column CoNLL file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConllToken {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl ConllToken {
    /// A token with every column except ID, FORM, HEAD and DEPREL set to `_`.
    pub fn bare(id: usize, form: impl Into<String>, head: usize, deprel: impl Into<String>) -> Self {
        let u = || "_".to_string();
        ConllToken {
            id,
            form: form.into(),
            lemma: u(),
            upos: u(),
            xpos: u(),
            feats: u(),
            head,
            deprel: deprel.into(),
            deps: u(),
            misc: u(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConllSentence {
    /// `#` comment lines preceding the tokens, without the leading `#`.
    pub comments: Vec<String>,
    pub tokens: Vec<ConllToken>,
}

impl ConllSentence {
    pub fn tree(&self) -> DependencyTree {
        DependencyTree {
            heads: self.tokens.iter().map(|t| t.head).collect(),
            labels: self.tokens.iter().map(|t| t.deprel.clone()).collect(),
        }
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// Overwrite HEAD and DEPREL from a decoded tree of the same length.
    pub fn set_tree(&mut self, tree: &DependencyTree) -> Result<()> {
        if tree.len() != self.tokens.len() {
            return Err(Error::validation(format!(
                "tree has {} tokens, sentence has {}",
                tree.len(),
                self.tokens.len()
            )));
        }
        for (tok, (&h, l)) in self.tokens.iter_mut().zip(tree.heads.iter().zip(&tree.labels)) {
            tok.head = h;
            tok.deprel = l.clone();
        }
        Ok(())
    }
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Vec<ConllSentence>> {
    let path = path.as_ref();
    parse_conllu(open(path)?, &path.display().to_string())
}

pub fn parse_conllu<R: BufRead>(reader: R, name: &str) -> Result<Vec<ConllSentence>> {
    let mut sentences = Vec::new();
    let mut current = ConllSentence::default();
    // Line number of each token's head, for range errors reported after the
    // sentence is complete.
    let mut head_lines: Vec<usize> = Vec::new();

    let mut finish = |cur: &mut ConllSentence, head_lines: &mut Vec<usize>| -> Result<()> {
        if cur.tokens.is_empty() && cur.comments.is_empty() {
            return Ok(());
        }
        let n = cur.tokens.len();
        for (tok, &line) in cur.tokens.iter().zip(head_lines.iter()) {
            if tok.head > n {
                return Err(Error::validation(format!(
                    "{name}:{line}: head {} out of range for a {n}-token sentence",
                    tok.head
                )));
            }
            if tok.head == tok.id {
                return Err(Error::validation(format!(
                    "{name}:{line}: token {} is its own head",
                    tok.id
                )));
            }
        }
        sentences.push(std::mem::take(cur));
        head_lines.clear();
        Ok(())
    };

    for item in lines_of(reader, name) {
        let (lineno, line) = item?;
        if line.trim().is_empty() {
            finish(&mut current, &mut head_lines)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if !current.tokens.is_empty() {
                return Err(Error::parse(name, lineno, "comment inside a sentence"));
            }
            current.comments.push(comment.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                name,
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(name, lineno, format!("unsupported token id {:?}", cols[0])))?;
        if id != current.tokens.len() + 1 {
            return Err(Error::parse(
                name,
                lineno,
                format!("token id {id} out of sequence (expected {})", current.tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(name, lineno, format!("invalid head {:?}", cols[6])))?;
        current.tokens.push(ConllToken {
            id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
        });
        head_lines.push(lineno);
    }
    finish(&mut current, &mut head_lines)?;
    Ok(sentences)
}

pub fn write_conllu<'a, W: Write>(
    mut w: W,
    sentences: impl IntoIterator<Item = &'a ConllSentence>,
) -> std::io::Result<()> {
    for s in sentences {
        for c in &s.comments {
            writeln!(w, "#{c}")?;
        }
        for t in &s.tokens {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, t.misc
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read a `token<TAB>label` file without checking the label scheme.
pub fn read_tagged(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>> {
    let path = path.as_ref();
    parse_tagged(open(path)?, &path.display().to_string())
}

pub fn parse_tagged<R: BufRead>(reader: R, name: &str) -> Result<Vec<LabeledSequence>> {
    Ok(parse_tagged_lines(reader, name)?
        .into_iter()
        .map(|(seq, _)| seq)
        .collect())
}

fn parse_tagged_lines<R: BufRead>(reader: R, name: &str) -> Result<Vec<(LabeledSequence, Vec<usize>)>> {
    let mut out = Vec::new();
    let mut cur = LabeledSequence::default();
    let mut lines = Vec::new();
    for item in lines_of(reader, name) {
        let (lineno, line) = item?;
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push((std::mem::take(&mut cur), std::mem::take(&mut lines)));
            }
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(tok), Some(label), None) if !tok.is_empty() && !label.is_empty() => {
                cur.tokens.push(tok.to_string());
                cur.labels.push(label.to_string());
                lines.push(lineno);
            }
            _ => {
                return Err(Error::parse(name, lineno, "expected \"token<TAB>label\""));
            }
        }
    }
    if !cur.is_empty() {
        out.push((cur, lines));
    }
    Ok(out)
}

/// An `I-X` tag with no compatible `B-X`/`I-X` before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioIssue {
    pub sentence: usize,
    pub token: usize,
    pub line: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BioFile {
    pub sequences: Vec<LabeledSequence>,
    /// Orphan inside tags; scoring treats each as the start of a new span.
    pub orphans: Vec<BioIssue>,
}

pub fn read_bio(path: impl AsRef<Path>) -> Result<BioFile> {
    let path = path.as_ref();
    parse_bio(open(path)?, &path.display().to_string())
}

pub fn parse_bio<R: BufRead>(reader: R, name: &str) -> Result<BioFile> {
    let mut file = BioFile::default();
    for (si, (seq, lines)) in parse_tagged_lines(reader, name)?.into_iter().enumerate() {
        let mut prev: Option<&str> = None;
        for (ti, (label, &line)) in seq.labels.iter().zip(&lines).enumerate() {
            let ty = match label.as_str() {
                "O" => None,
                l => match l.split_once('-') {
                    Some(("B", ty)) if !ty.is_empty() => Some(ty),
                    Some(("I", ty)) if !ty.is_empty() => {
                        if prev != Some(ty) {
                            file.orphans.push(BioIssue {
                                sentence: si,
                                token: ti,
                                line,
                                label: label.clone(),
                            });
                        }
                        Some(ty)
                    }
                    _ => {
                        return Err(Error::parse(name, line, format!("malformed BIO label {l:?}")));
                    }
                },
            };
            prev = ty;
        }
        file.sequences.push(seq);
    }
    Ok(file)
}

pub fn write_tagged<'a, W: Write>(
    mut w: W,
    sequences: impl IntoIterator<Item = &'a LabeledSequence>,
) -> std::io::Result<()> {
    for s in sequences {
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            writeln!(w, "{t}\t{l}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

pub fn read_sentence_pairs(path: impl AsRef<Path>) -> Result<Vec<NliPair>> {
    let path = path.as_ref();
    parse_sentence_pairs(open(path)?, &path.display().to_string())
}

pub fn parse_sentence_pairs<R: BufRead>(reader: R, name: &str) -> Result<Vec<NliPair>> {
    let mut out = Vec::new();
    for item in lines_of(reader, name) {
        let (lineno, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                name,
                lineno,
                format!("expected premise<TAB>hypothesis<TAB>label, found {} columns", cols.len()),
            ));
        }
        let label = cols[2]
            .parse::<NliLabel>()
            .map_err(|_| Error::parse(name, lineno, format!("unknown NLI label {:?}", cols[2])))?;
        out.push(NliPair {
            premise: cols[0].to_string(),
            hypothesis: cols[1].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn write_sentence_pairs<'a, W: Write>(
    mut w: W,
    pairs: impl IntoIterator<Item = &'a NliPair>,
) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.premise, p.hypothesis, p.label)?;
    }
    Ok(())
}
