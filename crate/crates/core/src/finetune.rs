//! Model-free fine-tuning helpers: first-subword alignment, early stopping
//! with best-checkpoint selection, seed averaging, and hyperparameter
//! presets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::bpe::{decode_with_marker, SubwordSequence, EOW};
use crate::error::{Error, Result};

/// Position of each word's first subword in the model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub first_piece_index: Vec<usize>,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.first_piece_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_piece_index.is_empty()
    }
}

/// Map every word to its first piece, shifted by `sentinel_offset` (1 when
/// the encoder input starts with `<s>`).
pub fn align_first_subword<S: AsRef<str>>(
    words: &[S],
    sw: &SubwordSequence,
    sentinel_offset: usize,
) -> Result<Alignment> {
    let decoded = decode_with_marker(sw, EOW).map_err(|e| Error::validation(format!("alignment failed: {e}")))?;
    for (i, w) in words.iter().enumerate() {
        match decoded.get(i) {
            Some(d) if d == w.as_ref() => {}
            Some(d) => {
                return Err(Error::validation(format!(
                    "alignment failed at word {i}: expected {:?}, subwords spell {d:?}",
                    w.as_ref()
                )))
            }
            None => {
                return Err(Error::validation(format!(
                    "alignment failed at word {i} ({:?}): subwords cover only {} words",
                    w.as_ref(),
                    decoded.len()
                )))
            }
        }
    }
    if decoded.len() != words.len() {
        return Err(Error::validation(format!(
            "alignment failed at word {}: subwords spell {} extra words",
            words.len(),
            decoded.len() - words.len()
        )));
    }
    Ok(Alignment {
        first_piece_index: sw.word_boundaries.iter().map(|&b| b + sentinel_offset).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingSchedulePolicy {
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainingSchedulePolicy {
    fn default() -> Self {
        TrainingSchedulePolicy {
            max_epochs: 30,
            patience: 5,
        }
    }
}

impl TrainingSchedulePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::usage("max_epochs and patience must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::usage(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub score: f64,
    pub best_so_far: f64,
    pub patience_counter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    /// 1-based epoch after which training stops.
    pub stop_epoch: usize,
    /// 1-based epoch of the selected checkpoint.
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
}

impl ScheduleOutcome {
    /// `epoch<TAB>score<TAB>best_so_far<TAB>patience_counter` per epoch.
    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.trace {
            writeln!(w, "{}\t{}\t{}\t{}", r.epoch, r.score, r.best_so_far, r.patience_counter)?;
        }
        Ok(())
    }
}

/// Replay early stopping over per-epoch validation scores.
///
/// Only a strictly higher score counts as an improvement. Training stops
/// once `patience` consecutive epochs have passed without one, at
/// `max_epochs`, or when the scores run out.
pub fn early_stopping_schedule(val_scores: &[f64], policy: &TrainingSchedulePolicy) -> Result<ScheduleOutcome> {
    policy.validate()?;
    if val_scores.is_empty() {
        return Err(Error::usage("early stopping needs at least one validation score"));
    }
    if let Some(i) = val_scores.iter().position(|s| s.is_nan()) {
        return Err(Error::usage(format!("validation score for epoch {} is NaN", i + 1)));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut counter = 0;
    let mut trace = Vec::new();
    for (i, &score) in val_scores.iter().take(policy.max_epochs).enumerate() {
        let epoch = i + 1;
        if score > best {
            best = score;
            best_epoch = epoch;
            counter = 0;
        } else {
            counter += 1;
        }
        trace.push(EpochRecord {
            epoch,
            score,
            best_so_far: best,
            patience_counter: counter,
        });
        if counter >= policy.patience {
            break;
        }
    }
    Ok(ScheduleOutcome {
        stop_epoch: trace.len(),
        best_epoch,
        trace,
    })
}

/// Mean of per-seed scores; the number of runs must be exactly `required_n`.
pub fn average_over_seeds(per_seed_scores: &[f64], required_n: usize) -> Result<f64> {
    if per_seed_scores.len() != required_n || required_n == 0 {
        return Err(Error::usage(format!(
            "expected {required_n} per-seed scores, got {}",
            per_seed_scores.len()
        )));
    }
    Ok(per_seed_scores.iter().sum::<f64>() / required_n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamPreset {
    pub name: String,
    pub learning_rate: f64,
    pub batch_size: u64,
    pub optimizer: String,
    /// Any further keys in the preset (epochs, patience, warmup, ...).
    pub extra: BTreeMap<String, String>,
}

impl HyperparamPreset {
    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.extra.get(key).and_then(|v| v.parse().ok())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.extra.get(key).and_then(|v| v.parse().ok())
    }
}

impl fmt::Display for HyperparamPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}.learning_rate={}", self.name, self.learning_rate)?;
        writeln!(f, "{}.batch_size={}", self.name, self.batch_size)?;
        write!(f, "{}.optimizer={}", self.name, self.optimizer)?;
        for (k, v) in &self.extra {
            write!(f, "\n{}.{k}={v}", self.name)?;
        }
        Ok(())
    }
}

/// Presets shipped with the crate.
pub const DEFAULT_PRESETS: &str = include_str!("../data/presets.conf");

/// Parse a flat `preset.key=value` file.
pub fn parse_presets(text: &str, name: &str) -> Result<BTreeMap<String, HyperparamPreset>> {
    let mut raw: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, i + 1, "expected preset.key=value"))?;
        let (preset, field) = key
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| Error::parse(name, i + 1, "key must be preset.field"))?;
        raw.entry(preset.to_string())
            .or_default()
            .insert(field.to_string(), value.trim().to_string());
    }
    let mut out = BTreeMap::new();
    for (preset, mut fields) in raw {
        let mut take = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| Error::validation(format!("preset {preset} lacks {k}")))
        };
        let learning_rate: f64 = take("learning_rate")?
            .parse()
            .map_err(|_| Error::validation(format!("preset {preset}: bad learning_rate")))?;
        let batch_size: u64 = take("batch_size")?
            .parse()
            .map_err(|_| Error::validation(format!("preset {preset}: bad batch_size")))?;
        let optimizer = take("optimizer")?;
        if !(learning_rate > 0.0) || batch_size == 0 {
            return Err(Error::validation(format!("preset {preset}: values must be positive")));
        }
        out.insert(
            preset.clone(),
            HyperparamPreset {
                name: preset,
                learning_rate,
                batch_size,
                optimizer,
                extra: fields,
            },
        );
    }
    Ok(out)
}

pub fn default_presets() -> BTreeMap<String, HyperparamPreset> {
    parse_presets(DEFAULT_PRESETS, "presets.conf").expect("bundled presets parse")
}
