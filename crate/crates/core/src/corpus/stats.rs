use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Pos,
    Dep,
    Ner,
    Nli,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(Task::Pos),
            "dep" => Ok(Task::Dep),
            "ner" => Ok(Task::Ner),
            "nli" => Ok(Task::Nli),
            other => Err(Error::usage(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Pos => "POS",
            Task::Dep => "DEP",
            Task::Ner => "NER",
            Task::Nli => "NLI",
        })
    }
}

/// Split sizes of a downstream dataset, in sentences (sentence pairs for NLI).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub task: Task,
    pub n_train: u64,
    pub n_valid: u64,
    pub n_test: u64,
}

impl DatasetStats {
    pub fn new(task: Task, n_train: u64, n_valid: u64, n_test: u64) -> Self {
        DatasetStats {
            task,
            n_train,
            n_valid,
            n_test,
        }
    }
}

/// Published split sizes of the standard Vietnamese benchmarks
/// (VLSP 2013 POS, VnDT v1.1, VLSP 2016 NER, XNLI-vi).
pub fn reference_split_stats(task: Task) -> DatasetStats {
    match task {
        Task::Pos => DatasetStats::new(task, 27_000, 870, 2_120),
        Task::Dep => DatasetStats::new(task, 8_977, 200, 1_020),
        Task::Ner => DatasetStats::new(task, 14_861, 2_000, 2_831),
        Task::Nli => DatasetStats::new(task, 392_702, 2_490, 5_010),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDiff {
    pub split: &'static str,
    pub observed: u64,
    pub expected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitReport {
    pub task: Task,
    pub diffs: Vec<SplitDiff>,
}

impl SplitReport {
    pub fn passed(&self) -> bool {
        self.diffs.is_empty()
    }
}

impl fmt::Display for SplitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "{}: pass", self.task);
        }
        write!(f, "{}: fail", self.task)?;
        for d in &self.diffs {
            write!(f, "; {} observed {} expected {}", d.split, d.observed, d.expected)?;
        }
        Ok(())
    }
}

pub fn validate_split_stats(observed: &DatasetStats, expected: &DatasetStats) -> Result<SplitReport> {
    if observed.task != expected.task {
        return Err(Error::usage(format!(
            "cannot compare {} statistics against {} statistics",
            observed.task, expected.task
        )));
    }
    let diffs = [
        ("train", observed.n_train, expected.n_train),
        ("valid", observed.n_valid, expected.n_valid),
        ("test", observed.n_test, expected.n_test),
    ]
    .into_iter()
    .filter(|(_, o, e)| o != e)
    .map(|(split, observed, expected)| SplitDiff {
        split,
        observed,
        expected,
    })
    .collect();
    Ok(SplitReport {
        task: observed.task,
        diffs,
    })
}
