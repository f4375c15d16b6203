//! Corpus-level task metrics: tagging accuracy, attachment scores, exact
//! span F1 for BIO-encoded entities, and NLI accuracy. Every token counts,
//! punctuation included.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::parser::DependencyTree;

/// Published test scores of the base and large models, kept for report
/// context only.
pub mod reported {
    pub const POS_ACCURACY: (f64, f64) = (96.7, 96.8);
    pub const LAS: (f64, f64) = (78.77, 77.85);
    pub const UAS: (f64, f64) = (85.22, 84.32);
    pub const NER_F1: (f64, f64) = (93.6, 94.7);
    pub const NLI_ACCURACY: (f64, f64) = (78.5, 80.0);
}

/// Tokens with one tag each (POS tags or BIO chunk tags).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledSequence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl LabeledSequence {
    pub fn new(tokens: Vec<String>, labels: Vec<String>) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::validation(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        Ok(LabeledSequence { tokens, labels })
    }

    /// Sequence with placeholder tokens, for label-only inputs.
    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let tokens = vec!["_".to_string(); labels.len()];
        LabeledSequence { tokens, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl FromStr for NliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entailment" => Ok(NliLabel::Entailment),
            "neutral" => Ok(NliLabel::Neutral),
            "contradiction" => Ok(NliLabel::Contradiction),
            other => Err(Error::usage(format!("unknown NLI label {other:?}"))),
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Neutral => "neutral",
            NliLabel::Contradiction => "contradiction",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counts {
    Accuracy { correct: u64, total: u64 },
    Prf { tp: u64, fp: u64, fn_: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub metric: String,
    /// Percentage, unrounded.
    pub value: f64,
    pub counts: Counts,
}

/// Round half up to `decimals` places.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    ((x * scale) + 0.5 + 1e-9).floor() / scale
}

/// Two-decimal percentage string.
pub fn format_percent(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

impl EvalResult {
    fn accuracy(metric: &str, correct: u64, total: u64) -> Self {
        let value = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64 * 100.0
        };
        EvalResult {
            metric: metric.to_string(),
            value,
            counts: Counts::Accuracy { correct, total },
        }
    }

    pub fn rounded(&self) -> f64 {
        round_half_up(self.value, 2)
    }

    /// `metric=<name> value=<v> correct=... total=...` (or `tp= fp= fn=`).
    pub fn to_kv(&self) -> String {
        let counts = match self.counts {
            Counts::Accuracy { correct, total } => format!("correct={correct} total={total}"),
            Counts::Prf { tp, fp, fn_ } => format!("tp={tp} fp={fp} fn={fn_}"),
        };
        format!("metric={} value={} {counts}", self.metric, format_percent(self.value))
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.metric, format_percent(self.value))
    }
}

fn check_lengths(what: &str, gold: usize, pred: usize) -> Result<()> {
    if gold != pred {
        return Err(Error::usage(format!("{what}: {gold} gold vs {pred} predicted sentences")));
    }
    Ok(())
}

pub fn pos_accuracy(gold: &[LabeledSequence], pred: &[LabeledSequence]) -> Result<EvalResult> {
    check_lengths("pos_accuracy", gold.len(), pred.len())?;
    let (mut correct, mut total) = (0u64, 0u64);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::usage(format!(
                "sentence {i}: {} gold vs {} predicted tokens",
                g.len(),
                p.len()
            )));
        }
        total += g.len() as u64;
        correct += g.labels.iter().zip(&p.labels).filter(|(a, b)| a == b).count() as u64;
    }
    Ok(EvalResult::accuracy("pos_accuracy", correct, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttachmentScores {
    pub las: EvalResult,
    pub uas: EvalResult,
}

pub fn las_uas(gold: &[DependencyTree], pred: &[DependencyTree]) -> Result<AttachmentScores> {
    check_lengths("las_uas", gold.len(), pred.len())?;
    let (mut head_ok, mut both_ok, mut total) = (0u64, 0u64, 0u64);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() || g.labels.len() != p.labels.len() {
            return Err(Error::usage(format!(
                "sentence {i}: {} gold vs {} predicted tokens",
                g.len(),
                p.len()
            )));
        }
        for t in 0..g.len() {
            total += 1;
            if g.heads[t] == p.heads[t] {
                head_ok += 1;
                if g.labels[t] == p.labels[t] {
                    both_ok += 1;
                }
            }
        }
    }
    Ok(AttachmentScores {
        las: EvalResult::accuracy("las", both_ok, total),
        uas: EvalResult::accuracy("uas", head_ok, total),
    })
}

/// Entity span `[start, end)` with its type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_bio_tag(tag: &str) -> Result<Bio<'_>> {
    if tag == "O" {
        return Ok(Bio::Outside);
    }
    match tag.split_once('-') {
        Some(("B", t)) if !t.is_empty() => Ok(Bio::Begin(t)),
        Some(("I", t)) if !t.is_empty() => Ok(Bio::Inside(t)),
        _ => Err(Error::usage(format!("malformed BIO tag {tag:?}"))),
    }
}

/// Entity spans of one BIO sequence, and how many orphan `I-X` tags were
/// repaired into span starts.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Result<(Vec<Span>, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let mut repairs = 0;
    for (i, tag) in labels.iter().enumerate() {
        match parse_bio_tag(tag.as_ref())? {
            Bio::Outside => {
                if let Some((s, t)) = open.take() {
                    spans.push(Span { start: s, end: i, label: t.to_string() });
                }
            }
            Bio::Begin(t) => {
                if let Some((s, pt)) = open.take() {
                    spans.push(Span { start: s, end: i, label: pt.to_string() });
                }
                open = Some((i, t));
            }
            Bio::Inside(t) => match open {
                Some((_, pt)) if pt == t => {}
                _ => {
                    if let Some((s, pt)) = open.take() {
                        spans.push(Span { start: s, end: i, label: pt.to_string() });
                    }
                    repairs += 1;
                    open = Some((i, t));
                }
            },
        }
    }
    if let Some((s, t)) = open {
        spans.push(Span { start: s, end: labels.len(), label: t.to_string() });
    }
    Ok((spans, repairs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Orphan inside tags repaired, gold and predicted combined.
    pub repairs: usize,
}

impl NerResult {
    pub fn f1_result(&self) -> EvalResult {
        EvalResult {
            metric: "ner_f1".to_string(),
            value: self.f1,
            counts: Counts::Prf { tp: self.tp, fp: self.fp, fn_: self.fn_ },
        }
    }

    pub fn to_kv(&self) -> String {
        format!(
            "metric=ner_f1 value={} precision={} recall={} tp={} fp={} fn={} repairs={}",
            format_percent(self.f1),
            format_percent(self.precision),
            format_percent(self.recall),
            self.tp,
            self.fp,
            self.fn_,
            self.repairs
        )
    }
}

impl fmt::Display for NerResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision: {}  recall: {}  f1: {}",
            format_percent(self.precision),
            format_percent(self.recall),
            format_percent(self.f1)
        )
    }
}

/// Micro-averaged exact-match span scores.
pub fn ner_span_f1(gold: &[LabeledSequence], pred: &[LabeledSequence]) -> Result<NerResult> {
    check_lengths("ner_span_f1", gold.len(), pred.len())?;
    let (mut tp, mut n_gold, mut n_pred, mut repairs) = (0u64, 0u64, 0u64, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::usage(format!(
                "sentence {i}: {} gold vs {} predicted tokens",
                g.len(),
                p.len()
            )));
        }
        let (gs, gr) = extract_spans(&g.labels)?;
        let (ps, pr) = extract_spans(&p.labels)?;
        repairs += gr + pr;
        n_gold += gs.len() as u64;
        n_pred += ps.len() as u64;
        tp += ps.iter().filter(|s| gs.contains(s)).count() as u64;
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, n_pred);
    let r = ratio(tp, n_gold);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok(NerResult {
        precision: p * 100.0,
        recall: r * 100.0,
        f1: f1 * 100.0,
        tp,
        fp: n_pred - tp,
        fn_: n_gold - tp,
        repairs,
    })
}

pub fn nli_accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<EvalResult> {
    check_lengths("nli_accuracy", gold.len(), pred.len())?;
    let mut correct = 0u64;
    for (g, p) in gold.iter().zip(pred) {
        let g: NliLabel = g.as_ref().parse()?;
        let p: NliLabel = p.as_ref().parse()?;
        if g == p {
            correct += 1;
        }
    }
    Ok(EvalResult::accuracy("nli_accuracy", correct, gold.len() as u64))
}
