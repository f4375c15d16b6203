//! Independent reference implementations used by the integration tests.
//! None of these share code with the library; they are slow and obvious.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

/// Textbook BPE: recount every pair from scratch after each merge.
pub fn naive_bpe(word_counts: &BTreeMap<String, u64>, vocab_size: usize, eow: &str) -> Vec<(String, String)> {
    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .iter()
        .map(|(w, &c)| {
            let chars: Vec<char> = w.chars().collect();
            let mut syms: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
            match syms.last_mut() {
                Some(last) => last.push_str(eow),
                None => syms.push(eow.to_string()),
            }
            (syms, c)
        })
        .collect();
    let mut vocab: HashSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_insert(0) += c;
            }
        }
        let mut best: Option<(&(String, String), u64)> = None;
        for (p, &c) in &pairs {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((p, c));
            }
        }
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let pair = pair.clone();
        for (syms, _) in words.iter_mut() {
            *syms = apply_merge(syms, &pair);
        }
        vocab.insert(format!("{}{}", pair.0, pair.1));
        merges.push(pair);
    }
    merges
}

fn apply_merge(syms: &[String], pair: &(String, String)) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

/// Apply merges one after another to the character split of `word`.
pub fn naive_encode_word(word: &str, merges: &[(String, String)], eow: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    match syms.last_mut() {
        Some(last) => last.push_str(eow),
        None => syms.push(eow.to_string()),
    }
    for m in merges {
        syms = apply_merge(&syms, m);
    }
    syms
}

fn reaches_root(heads: &[usize]) -> bool {
    let n = heads.len();
    (1..=n).all(|start| {
        let mut v = start;
        for _ in 0..=n {
            if v == 0 {
                return true;
            }
            v = heads[v - 1];
        }
        false
    })
}

/// Best total score over every head assignment that forms a tree rooted at
/// 0. `scores[h][d]` is the score of arc h → d.
pub fn brute_force_best_tree(scores: &[Vec<f64>], single_root: bool) -> (f64, Vec<usize>) {
    let n = scores.len() - 1;
    let mut heads = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    loop {
        let valid = heads.iter().enumerate().all(|(i, &h)| h != i + 1)
            && reaches_root(&heads)
            && (!single_root || heads.iter().filter(|&&h| h == 0).count() == 1);
        if valid {
            let total: f64 = heads.iter().enumerate().map(|(i, &h)| scores[h][i + 1]).sum();
            if total > best.0 {
                best = (total, heads.clone());
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            heads[k] += 1;
            if heads[k] <= n {
                break;
            }
            heads[k] = 0;
            k += 1;
        }
    }
}

/// Number of valid trees, for sanity checks on the enumerator itself.
pub fn count_trees(n: usize, single_root: bool) -> usize {
    let mut heads = vec![0usize; n];
    let mut count = 0;
    loop {
        let valid = heads.iter().enumerate().all(|(i, &h)| h != i + 1)
            && reaches_root(&heads)
            && (!single_root || heads.iter().filter(|&&h| h == 0).count() == 1);
        count += usize::from(valid);
        let mut k = 0;
        loop {
            if k == n {
                return count;
            }
            heads[k] += 1;
            if heads[k] <= n {
                break;
            }
            heads[k] = 0;
            k += 1;
        }
    }
}

/// conlleval-style chunk extraction: `(start, end_exclusive, type)`.
pub fn conlleval_chunks(tags: &[&str]) -> Vec<(usize, usize, String)> {
    fn split(tag: &str) -> (&str, &str) {
        if tag == "O" {
            ("O", "")
        } else {
            (&tag[..1], &tag[2..])
        }
    }
    let mut chunks = Vec::new();
    let mut start: Option<usize> = None;
    let (mut prev_tag, mut prev_type) = ("O", "");
    for (i, tag) in tags.iter().enumerate() {
        let (t, ty) = split(tag);
        let chunk_end = prev_tag != "O" && (t == "O" || t == "B" || ty != prev_type);
        let chunk_start = t != "O" && (t == "B" || prev_tag == "O" || ty != prev_type);
        if chunk_end {
            chunks.push((start.take().unwrap(), i, prev_type.to_string()));
        }
        if chunk_start {
            start = Some(i);
        }
        prev_tag = t;
        prev_type = ty;
    }
    if let Some(s) = start {
        chunks.push((s, tags.len(), prev_type.to_string()));
    }
    chunks
}

/// Micro P/R/F1 (percent) from conlleval chunks.
pub fn oracle_prf(gold: &[Vec<&str>], pred: &[Vec<&str>]) -> (f64, f64, f64) {
    let (mut tp, mut ng, mut np) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let gc: HashSet<_> = conlleval_chunks(g).into_iter().collect();
        let pc = conlleval_chunks(p);
        ng += gc.len();
        np += pc.len();
        tp += pc.iter().filter(|c| gc.contains(*c)).count();
    }
    let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let r = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (100.0 * p, 100.0 * r, 100.0 * f)
}

/// |A ∩ B| / |A ∪ B| over string shingles; both empty gives 1.
pub fn exact_jaccard<T: std::hash::Hash + Eq>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Word k-shingles as joined strings; texts shorter than `k` have none.
pub fn string_shingles(text: &str, k: usize) -> HashSet<String> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() < k {
        return HashSet::new();
    }
    toks.windows(k).map(|w| w.join(" ")).collect()
}

/// `[h;1]ᵀ U [d;1]` by explicit loops over plain vectors.
pub fn triple_loop_biaffine(heads: &[Vec<f64>], deps: &[Vec<f64>], u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let aug = |v: &Vec<f64>| {
        let mut v = v.clone();
        v.push(1.0);
        v
    };
    let mut out = vec![vec![0.0; deps.len()]; heads.len()];
    for (i, h) in heads.iter().enumerate() {
        let h = aug(h);
        for (j, d) in deps.iter().enumerate() {
            let d = aug(d);
            let mut s = 0.0;
            for a in 0..h.len() {
                for b in 0..d.len() {
                    s += h[a] * u[a][b] * d[b];
                }
            }
            out[i][j] = s;
        }
    }
    out
}
