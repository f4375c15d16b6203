//! Biaffine arc and label scoring over given representations, and
//! maximum spanning arborescence decoding.
//!
//! Node 0 is the artificial ROOT; tokens are 1..=n. Score matrices are
//! indexed `[head][dependent]`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, IoContext, Result};

/// Score of a forbidden arc (self-loops, arcs into ROOT).
pub const NO_ARC: f64 = f64::NEG_INFINITY;

/// Heads and relation labels for the tokens of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyTree {
    /// `heads[i]` is the head of token `i + 1`; 0 is ROOT.
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DependencyTree {
    pub fn new(heads: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if heads.len() != labels.len() {
            return Err(Error::validation(format!(
                "{} heads but {} labels",
                heads.len(),
                labels.len()
            )));
        }
        let n = heads.len();
        if let Some((i, &h)) = heads.iter().enumerate().find(|(i, &h)| h > n || h == i + 1) {
            return Err(Error::validation(format!("token {} has invalid head {h}", i + 1)));
        }
        Ok(DependencyTree { heads, labels })
    }

    /// Unlabeled tree; every label is `_`.
    pub fn unlabeled(heads: Vec<usize>) -> Self {
        let labels = vec!["_".to_string(); heads.len()];
        DependencyTree { heads, labels }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn root_children(&self) -> usize {
        self.heads.iter().filter(|&&h| h == 0).count()
    }

    /// Heads in range, every token reaches ROOT, and, in single-root mode,
    /// exactly one token attaches to ROOT.
    pub fn is_well_formed(&self, single_root: bool) -> bool {
        is_arborescence(&self.heads) && (!single_root || self.root_children() == 1)
    }
}

/// True when `heads` (for tokens 1..=n) forms a tree rooted at 0.
pub fn is_arborescence(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().enumerate().any(|(i, &h)| h > n || h == i + 1) {
        return false;
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return false;
        }
        for p in path {
            state[p] = 2;
        }
    }
    true
}

/// Dense `(n+1) x (n+1)` arc score grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcScoreMatrix {
    scores: Array2<f64>,
}

impl ArcScoreMatrix {
    /// Column 0 and the diagonal are overwritten with [`NO_ARC`]; every
    /// other entry must be finite.
    pub fn from_array(mut scores: Array2<f64>) -> Result<Self> {
        let (r, c) = scores.dim();
        if r != c || r < 2 {
            return Err(Error::usage(format!(
                "arc score matrix must be square with at least 2 rows, got {r}x{c}"
            )));
        }
        for ((h, d), v) in scores.indexed_iter_mut() {
            if d == 0 || h == d {
                *v = NO_ARC;
            } else if !v.is_finite() {
                return Err(Error::validation(format!("arc score [{h}][{d}] is not finite: {v}")));
            }
        }
        Ok(ArcScoreMatrix { scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::usage("arc score rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((n, n), flat).map_err(|e| Error::usage(e.to_string()))?;
        Self::from_array(a)
    }

    /// Number of tokens.
    pub fn n(&self) -> usize {
        self.scores.nrows() - 1
    }

    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.scores[[head, dep]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        heads.iter().enumerate().map(|(i, &h)| self.scores[[h, i + 1]]).sum()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.scores.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Bilinear form parameters `U` of shape `(d_head + 1) x (d_dep + 1)`; the
/// extra row and column act on a constant-1 feature appended to each
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct BiaffineParams {
    pub u: Array2<f64>,
}

impl BiaffineParams {
    pub fn new(u: Array2<f64>) -> Self {
        BiaffineParams { u }
    }

    pub fn d_head(&self) -> usize {
        self.u.nrows().saturating_sub(1)
    }

    pub fn d_dep(&self) -> usize {
        self.u.ncols().saturating_sub(1)
    }
}

fn augment(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let ones = Array2::<f64>::ones((x.nrows(), 1));
    concatenate(Axis(1), &[x, ones.view()]).expect("row counts agree")
}

fn bilinear(
    head_reprs: ArrayView2<'_, f64>,
    dep_reprs: ArrayView2<'_, f64>,
    u: &Array2<f64>,
) -> Result<Array2<f64>> {
    if head_reprs.ncols() + 1 != u.nrows() || dep_reprs.ncols() + 1 != u.ncols() {
        return Err(Error::usage(format!(
            "shape mismatch: head reprs {:?}, dep reprs {:?}, U {:?} (U must be (d_head+1) x (d_dep+1))",
            head_reprs.dim(),
            dep_reprs.dim(),
            u.dim()
        )));
    }
    if head_reprs.nrows() != dep_reprs.nrows() + 1 {
        return Err(Error::usage(format!(
            "need n+1 head representations for n dependents, got {} and {}",
            head_reprs.nrows(),
            dep_reprs.nrows()
        )));
    }
    Ok(augment(head_reprs).dot(u).dot(&augment(dep_reprs).t()))
}

/// `scores[h][d] = [head_h; 1]ᵀ U [dep_d; 1]`, row 0 of `head_reprs` being
/// ROOT.
pub fn biaffine_arc_scores(
    head_reprs: ArrayView2<'_, f64>,
    dep_reprs: ArrayView2<'_, f64>,
    params: &BiaffineParams,
) -> Result<ArcScoreMatrix> {
    if dep_reprs.nrows() == 0 {
        return Err(Error::usage("no dependents to score"));
    }
    let s = bilinear(head_reprs, dep_reprs, &params.u)?;
    let n = dep_reprs.nrows();
    let mut full = Array2::<f64>::zeros((n + 1, n + 1));
    full.slice_mut(ndarray::s![.., 1..]).assign(&s);
    ArcScoreMatrix::from_array(full)
}

/// Relation scores for arcs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelScores {
    pub relations: Vec<String>,
    arcs: HashMap<(usize, usize), Vec<f64>>,
}

impl LabelScores {
    pub fn new(relations: Vec<String>) -> Self {
        LabelScores {
            relations,
            arcs: HashMap::new(),
        }
    }

    pub fn insert(&mut self, head: usize, dep: usize, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.relations.len() {
            return Err(Error::usage(format!(
                "arc {head}->{dep}: {} scores for {} relations",
                scores.len(),
                self.relations.len()
            )));
        }
        self.arcs.insert((head, dep), scores);
        Ok(())
    }

    pub fn get(&self, head: usize, dep: usize) -> Option<&[f64]> {
        self.arcs.get(&(head, dep)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }
}

/// One biaffine form per relation, evaluated on every (head, dependent)
/// pair.
pub fn biaffine_label_scores(
    head_reprs: ArrayView2<'_, f64>,
    dep_reprs: ArrayView2<'_, f64>,
    relations: &[String],
    per_relation: &[BiaffineParams],
) -> Result<LabelScores> {
    if relations.len() != per_relation.len() {
        return Err(Error::usage(format!(
            "{} relations but {} parameter matrices",
            relations.len(),
            per_relation.len()
        )));
    }
    let grids: Vec<Array2<f64>> = per_relation
        .iter()
        .map(|p| bilinear(head_reprs, dep_reprs, &p.u))
        .collect::<Result<_>>()?;
    let mut out = LabelScores::new(relations.to_vec());
    let n = dep_reprs.nrows();
    for h in 0..=n {
        for d in 1..=n {
            if h != d {
                out.arcs.insert((h, d), grids.iter().map(|g| g[[h, d - 1]]).collect());
            }
        }
    }
    Ok(out)
}

/// Highest-scoring relation for each decoded arc; ties resolve to the
/// lexicographically smallest relation name.
pub fn assign_labels(label_scores: &LabelScores, heads: &[usize]) -> Result<Vec<String>> {
    if label_scores.relations.is_empty() {
        return Err(Error::usage("empty relation set"));
    }
    heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let d = i + 1;
            let scores = label_scores
                .get(h, d)
                .ok_or_else(|| Error::usage(format!("no label scores for arc {h}->{d}")))?;
            let mut best: Option<(f64, &str)> = None;
            for (s, rel) in scores.iter().zip(&label_scores.relations) {
                let better = match best {
                    None => true,
                    Some((bs, br)) => *s > bs || (*s == bs && rel.as_str() < br),
                };
                if better {
                    best = Some((*s, rel));
                }
            }
            Ok(best.expect("relations non-empty").1.to_string())
        })
        .collect()
}

fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let m = parent.len();
    let mut state = vec![0u8; m];
    state[0] = 2;
    for start in 1..m {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("v is on the path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Chu-Liu-Edmonds on a dense `m x m` grid rooted at 0. Returns a parent
/// per node (`parent[0]` is meaningless).
fn chu_liu_edmonds(scores: &[Vec<f64>]) -> Vec<usize> {
    let m = scores.len();
    let mut parent = vec![0usize; m];
    for (v, p) in parent.iter_mut().enumerate().skip(1) {
        let mut best: Option<(usize, f64)> = None;
        for (u, row) in scores.iter().enumerate() {
            if u != v && best.is_none_or(|(_, s)| row[v] > s) {
                best = Some((u, row[v]));
            }
        }
        *p = best.expect("at least two nodes").0;
    }
    let Some(cycle) = find_cycle(&parent) else {
        return parent;
    };

    let mut in_cycle = vec![false; m];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let outside: Vec<usize> = (0..m).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let mut new_index = vec![usize::MAX; m];
    for (i, &v) in outside.iter().enumerate() {
        new_index[v] = i;
    }

    let mut sub = vec![vec![NO_ARC; c + 1]; c + 1];
    let mut enter = vec![0usize; c + 1];
    let mut leave = vec![0usize; c + 1];
    for (iu, &u) in outside.iter().enumerate() {
        for (iv, &v) in outside.iter().enumerate() {
            sub[iu][iv] = scores[u][v];
        }
        let mut best = NO_ARC;
        let mut arg = cycle[0];
        for &v in &cycle {
            let s = scores[u][v] - scores[parent[v]][v];
            if s > best {
                best = s;
                arg = v;
            }
        }
        sub[iu][c] = best;
        enter[iu] = arg;
    }
    for (iv, &v) in outside.iter().enumerate() {
        let mut best = NO_ARC;
        let mut arg = cycle[0];
        for &u in &cycle {
            if scores[u][v] > best {
                best = scores[u][v];
                arg = u;
            }
        }
        sub[c][iv] = best;
        leave[iv] = arg;
    }

    let sub_parent = chu_liu_edmonds(&sub);
    let mut result = parent.clone();
    for (iv, &v) in outside.iter().enumerate().skip(1) {
        let p = sub_parent[iv];
        result[v] = if p == c { leave[iv] } else { outside[p] };
    }
    let entry_from = sub_parent[c];
    result[enter[entry_from]] = outside[entry_from];
    result
}

/// Maximum spanning arborescence over `scores`. With `single_root`, exactly
/// one token attaches to ROOT.
pub fn decode_mst(scores: &ArcScoreMatrix, single_root: bool) -> Vec<usize> {
    let n = scores.n();
    let rows = scores.to_rows();
    let heads = chu_liu_edmonds(&rows)[1..].to_vec();
    if !single_root || heads.iter().filter(|&&h| h == 0).count() == 1 {
        return heads;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for root in 1..=n {
        let mut constrained = rows.clone();
        for (d, v) in constrained[0].iter_mut().enumerate() {
            if d != root {
                *v = NO_ARC;
            }
        }
        let cand = chu_liu_edmonds(&constrained)[1..].to_vec();
        let score = scores.tree_score(&cand);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    best.expect("n >= 1").1
}

/// Decode heads and labels together.
pub fn decode_tree(scores: &ArcScoreMatrix, labels: Option<&LabelScores>, single_root: bool) -> Result<DependencyTree> {
    let heads = decode_mst(scores, single_root);
    match labels {
        Some(ls) => {
            let labels = assign_labels(ls, &heads)?;
            Ok(DependencyTree { heads, labels })
        }
        None => Ok(DependencyTree::unlabeled(heads)),
    }
}

fn parse_f64(tok: &str, name: &str, line: usize) -> Result<f64> {
    match tok {
        "-inf" | "-Infinity" => Ok(NO_ARC),
        _ => tok
            .parse::<f64>()
            .map_err(|_| Error::parse(name, line, format!("invalid number {tok:?}"))),
    }
}

/// Score matrices, one block of `n+1` rows of `n+1` tab-separated numbers
/// per sentence, blocks separated by blank lines. Column 0 and the
/// diagonal are ignored and may hold any number (conventionally `-inf`).
pub fn parse_score_matrices<R: BufRead>(reader: R, name: &str) -> Result<Vec<ArcScoreMatrix>> {
    let mut out = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut start_line = 0;
    let mut flush = |rows: &mut Vec<Vec<f64>>, line: usize| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let m = ArcScoreMatrix::from_rows(rows).map_err(|e| Error::parse(name, line, e.to_string()))?;
        out.push(m);
        rows.clear();
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            flush(&mut rows, start_line)?;
            continue;
        }
        if rows.is_empty() {
            start_line = lineno;
        }
        let row = line
            .trim_end()
            .split('\t')
            .map(|t| parse_f64(t.trim(), name, lineno))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    flush(&mut rows, start_line)?;
    Ok(out)
}

pub fn read_score_matrices(path: impl AsRef<Path>) -> Result<Vec<ArcScoreMatrix>> {
    let path = path.as_ref();
    let f = File::open(path).with_path(path)?;
    parse_score_matrices(BufReader::new(f), &path.display().to_string())
}

pub fn write_score_matrices<'a, W: Write>(
    mut w: W,
    matrices: impl IntoIterator<Item = &'a ArcScoreMatrix>,
) -> std::io::Result<()> {
    for m in matrices {
        for row in m.scores.rows() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| if *v == NO_ARC { "-inf".to_string() } else { v.to_string() })
                .collect();
            writeln!(w, "{}", cells.join("\t"))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Label score file: a `#relations<TAB>r1<TAB>r2...` header, then one block
/// per sentence of `head<TAB>dep<TAB>s1...` lines, blocks separated by
/// blank lines.
pub fn parse_label_scores<R: BufRead>(reader: R, name: &str) -> Result<Vec<LabelScores>> {
    let mut lines = reader.lines().enumerate();
    let relations: Vec<String> = loop {
        let Some((i, line)) = lines.next() else {
            return Ok(Vec::new());
        };
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("#relations\t")
            .ok_or_else(|| Error::parse(name, i + 1, "expected #relations header"))?;
        break rest.split('\t').map(str::to_string).collect();
    };
    let mut out = Vec::new();
    let mut cur = LabelScores::new(relations.clone());
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::replace(&mut cur, LabelScores::new(relations.clone())));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != relations.len() + 2 {
            return Err(Error::parse(name, i + 1, format!("expected {} columns", relations.len() + 2)));
        }
        let h: usize = cols[0].parse().map_err(|_| Error::parse(name, i + 1, "invalid head"))?;
        let d: usize = cols[1].parse().map_err(|_| Error::parse(name, i + 1, "invalid dependent"))?;
        let s = cols[2..]
            .iter()
            .map(|t| parse_f64(t, name, i + 1))
            .collect::<Result<Vec<_>>>()?;
        cur.insert(h, d, s)?;
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn read_label_scores(path: impl AsRef<Path>) -> Result<Vec<LabelScores>> {
    let path = path.as_ref();
    let f = File::open(path).with_path(path)?;
    parse_label_scores(BufReader::new(f), &path.display().to_string())
}

/// Naive per-arc loop used as a cross-check of the matrix route.
#[doc(hidden)]
pub fn bilinear_score(head: &Array1<f64>, dep: &Array1<f64>, u: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..u.nrows() {
        let hi = if i < head.len() { head[i] } else { 1.0 };
        for j in 0..u.ncols() {
            let dj = if j < dep.len() { dep[j] } else { 1.0 };
            total += hi * u[[i, j]] * dj;
        }
    }
    total
}
