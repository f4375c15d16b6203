//! Sentence splitting and lexicon-driven Vietnamese word segmentation.
//!
//! Vietnamese writes a space between syllables, including syllables of the
//! same word. Word segmentation groups syllables into words and joins each
//! multi-syllable word with `_`, e.g. `nghiên cứu viên` → `nghiên_cứu_viên`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, IoContext, Result};

/// Marker joining the syllables of one word.
pub const WORD_JOINER: char = '_';

const SENTENCE_FINAL: [char; 4] = ['.', '!', '?', '…'];

/// Abbreviations shipped with the crate, one per line.
pub const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// A sentence as a list of whitespace-delimited syllables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub syllables: Vec<String>,
}

impl Sentence {
    /// Build a sentence, rejecting syllables that are empty or contain
    /// whitespace or the reserved word joiner.
    pub fn new<S: Into<String>>(syllables: impl IntoIterator<Item = S>) -> Result<Self> {
        let syllables: Vec<String> = syllables.into_iter().map(Into::into).collect();
        if syllables.is_empty() {
            return Err(Error::validation("a sentence needs at least one syllable"));
        }
        for s in &syllables {
            check_syllable(s)?;
        }
        Ok(Sentence { syllables })
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.syllables.join(" "))
    }
}

fn check_syllable(s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::validation("empty syllable"));
    }
    if s.contains(WORD_JOINER) {
        return Err(Error::validation(format!(
            "syllable {s:?} contains the reserved word joiner '_'"
        )));
    }
    if s.chars().any(char::is_whitespace) {
        return Err(Error::validation(format!("syllable {s:?} contains whitespace")));
    }
    Ok(())
}

/// Reject raw text containing the reserved word joiner.
pub fn check_raw_text(text: &str) -> Result<()> {
    match text.find(WORD_JOINER) {
        Some(pos) => Err(Error::validation(format!(
            "raw text contains the reserved word joiner '_' at byte {pos}"
        ))),
        None => Ok(()),
    }
}

/// A sentence whose syllables have been grouped into words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct WordSegmentedSentence {
    pub words: Vec<String>,
}

impl WordSegmentedSentence {
    /// Parse one line of a segmented corpus (space-separated word tokens).
    pub fn from_line(line: &str) -> Self {
        WordSegmentedSentence {
            words: line.split_whitespace().map(str::to_string).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl fmt::Display for WordSegmentedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.words.join(" "))
    }
}

/// Known words as syllable sequences.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashSet<Vec<String>>,
    max_entry_len: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<S: Into<String>>(&mut self, syllables: impl IntoIterator<Item = S>) -> Result<bool> {
        let entry: Vec<String> = syllables.into_iter().map(Into::into).collect();
        if entry.is_empty() {
            return Err(Error::validation("lexicon entries need at least one syllable"));
        }
        for s in &entry {
            check_syllable(s)?;
        }
        self.max_entry_len = self.max_entry_len.max(entry.len());
        Ok(self.entries.insert(entry))
    }

    /// Insert an entry written with spaces or underscores between syllables.
    pub fn insert_word(&mut self, word: &str) -> Result<bool> {
        self.insert(word.split(|c: char| c == WORD_JOINER || c.is_whitespace()).filter(|s| !s.is_empty()))
    }

    pub fn contains(&self, syllables: &[String]) -> bool {
        self.entries.contains(syllables)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_entry_len(&self) -> usize {
        self.max_entry_len
    }

    pub fn entries(&self) -> impl Iterator<Item = &[String]> {
        self.entries.iter().map(Vec::as_slice)
    }

    /// Lexicon file: one entry per line, syllables separated by spaces.
    pub fn from_reader<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(name, e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            lex.insert(line.split_whitespace())
                .map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).with_path(path)?;
        Self::from_reader(BufReader::new(file), &path.display().to_string())
    }
}

impl<S: Into<String>, I: IntoIterator<Item = S>> FromIterator<I> for Lexicon {
    /// Panics on an invalid entry; use [`Lexicon::insert`] for fallible input.
    fn from_iter<T: IntoIterator<Item = I>>(iter: T) -> Self {
        let mut lex = Lexicon::new();
        for entry in iter {
            lex.insert(entry).expect("invalid lexicon entry");
        }
        lex
    }
}

/// Fraction of lexicon entries made of two or more syllables.
pub fn lexicon_multisyllable_fraction(lexicon: &Lexicon) -> Result<f64> {
    if lexicon.is_empty() {
        return Err(Error::usage("multi-syllable fraction of an empty lexicon"));
    }
    let multi = lexicon.entries().filter(|e| e.len() >= 2).count();
    Ok(multi as f64 / lexicon.len() as f64)
}

/// Anything that turns a syllable sentence into words.
pub trait WordSegmenter {
    fn segment(&self, sentence: &Sentence) -> WordSegmentedSentence;
}

/// Greedy leftmost-longest dictionary matcher.
#[derive(Debug, Clone)]
pub struct LongestMatchSegmenter {
    lexicon: Lexicon,
}

impl LongestMatchSegmenter {
    pub fn new(lexicon: Lexicon) -> Self {
        LongestMatchSegmenter { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl WordSegmenter for LongestMatchSegmenter {
    fn segment(&self, sentence: &Sentence) -> WordSegmentedSentence {
        segment_words(sentence, &self.lexicon)
    }
}

pub fn segment_words(sentence: &Sentence, lexicon: &Lexicon) -> WordSegmentedSentence {
    let syl = &sentence.syllables;
    let mut words = Vec::new();
    let mut i = 0;
    while i < syl.len() {
        let longest = lexicon.max_entry_len().min(syl.len() - i);
        let len = (2..=longest)
            .rev()
            .find(|&n| lexicon.contains(&syl[i..i + n]))
            .unwrap_or(1);
        words.push(syl[i..i + len].join("_"));
        i += len;
    }
    WordSegmentedSentence { words }
}

pub fn desegment(ws: &WordSegmentedSentence) -> Sentence {
    Sentence {
        syllables: ws
            .words
            .iter()
            .flat_map(|w| w.split(WORD_JOINER))
            .map(str::to_string)
            .collect(),
    }
}

/// Tokens after which a sentence-final period does not end the sentence.
#[derive(Debug, Clone)]
pub struct Abbreviations {
    entries: HashSet<String>,
}

impl Abbreviations {
    pub fn parse(text: &str) -> Self {
        Abbreviations {
            entries: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        }
    }

    pub fn none() -> Self {
        Abbreviations {
            entries: HashSet::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_path(path)?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(token)
    }
}

impl Default for Abbreviations {
    fn default() -> Self {
        Self::parse(DEFAULT_ABBREVIATIONS)
    }
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '«')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

fn ends_sentence(token: &str, abbreviations: &Abbreviations) -> bool {
    if abbreviations.contains(token) {
        return false;
    }
    token
        .trim_end_matches(is_closing)
        .chars()
        .next_back()
        .is_some_and(|c| SENTENCE_FINAL.contains(&c))
}

fn starts_sentence(token: &str) -> bool {
    token
        .trim_start_matches(is_opening)
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Split raw text into sentences of whitespace-delimited syllables.
///
/// A boundary falls after a token ending in `.`, `!`, `?` or `…` (possibly
/// followed by closing quotes or brackets) when the next token starts with
/// an uppercase letter or a digit, unless the token is a listed
/// abbreviation.
pub fn split_sentences(text: &str, abbreviations: &Abbreviations) -> Vec<Sentence> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..tokens.len() {
        let last = i + 1 == tokens.len();
        if last || (ends_sentence(tokens[i], abbreviations) && starts_sentence(tokens[i + 1])) {
            out.push(Sentence {
                syllables: tokens[start..=i].iter().map(|t| t.to_string()).collect(),
            });
            start = i + 1;
        }
    }
    out
}

/// Detach leading and trailing punctuation from each syllable so that
/// `"Tôi,` becomes `"`, `Tôi`, `,`. Listed abbreviations are left intact, as
/// are tokens made only of punctuation.
pub fn split_punctuation(sentence: &Sentence, abbreviations: &Abbreviations) -> Sentence {
    let mut syllables = Vec::with_capacity(sentence.syllables.len());
    for tok in &sentence.syllables {
        if abbreviations.contains(tok) {
            syllables.push(tok.clone());
            continue;
        }
        let core_start = tok.find(|c: char| !is_punct(c));
        let Some(core_start) = core_start else {
            syllables.push(tok.clone());
            continue;
        };
        let core_end = tok
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .expect("a non-punctuation char exists");
        syllables.extend(tok[..core_start].chars().map(String::from));
        syllables.push(tok[core_start..core_end].to_string());
        syllables.extend(tok[core_end..].chars().map(String::from));
    }
    Sentence { syllables }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && c != WORD_JOINER
}
