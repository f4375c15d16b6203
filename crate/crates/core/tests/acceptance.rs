//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vnprep::bpe::{train_from_counts, BpeTrainConfig, WordCounts, EOW};
use vnprep::corpus::{dedup_corpus, estimated_jaccard, minhash_signature, DedupConfig, Document, ShingleSet};
use vnprep::finetune::{early_stopping_schedule, TrainingSchedulePolicy};
use vnprep::metrics::{extract_spans, las_uas, ner_span_f1, nli_accuracy, pos_accuracy, LabeledSequence};
use vnprep::parser::{decode_mst, ArcScoreMatrix, DependencyTree};
use vnprep::pretrain::{count_parameters, training_budget, ArchConfig, MaskConfig, Masker};
use vnprep::segmenter::{desegment, segment_words, Lexicon, Sentence};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn budget() -> Result<String, String> {
    let r = training_budget(145_000_000, 24.4, 256, 40, 1024, 2).map_err(|e| e.to_string())?;
    let half = training_budget(145_000_000, 24.4, 256, 40, 512, 2).map_err(|e| e.to_string())?;
    ensure((r.num_blocks, r.total_steps) == (13_820_313, 539_856), || format!("{r:?}"))?;
    ensure(half.total_steps == 1_079_712, || format!("batch 512: {half:?}"))?;
    ensure((r.num_blocks as f64 - 13.8e6).abs() / 13.8e6 < 0.005, || "blocks far from 13.8M".into())?;
    ensure((r.total_steps as f64 - 540e3).abs() / 540e3 < 0.005, || "steps far from 540K".into())?;
    ensure((half.total_steps as f64 - 1.08e6).abs() / 1.08e6 < 0.005, || "steps far from 1.08M".into())?;
    Ok(format!("blocks={} steps={} steps@512={}", r.num_blocks, r.total_steps, half.total_steps))
}

fn parameters() -> Result<String, String> {
    let base = count_parameters(&ArchConfig::base());
    let large = count_parameters(&ArchConfig::large());
    let rel = |n: u64, target: f64| (n as f64 - target).abs() / target;
    ensure(rel(base, 135e6) <= 0.02, || format!("base {base}"))?;
    ensure(rel(large, 370e6) <= 0.02, || format!("large {large}"))?;
    Ok(format!("base={base} large={large}"))
}

fn bpe_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let letters: Vec<char> = "abcdeg".chars().collect();
    let word = |rng: &mut ChaCha8Rng| -> String {
        let n = rng.random_range(1..=6);
        (0..n).map(|_| *letters.choose(rng).unwrap()).collect()
    };
    let mut last_model = None;
    for corpus in 0..20 {
        let distinct = rng.random_range(1..=50);
        let mut words = BTreeMap::new();
        while words.len() < distinct {
            words.insert(word(&mut rng), rng.random_range(1..8u64));
        }
        let mut counts = WordCounts::new();
        for (w, &n) in &words {
            counts.add_word(w, n);
        }
        let vocab_size = rng.random_range(10..120);
        let model = train_from_counts(&counts, &BpeTrainConfig::with_vocab_size(vocab_size)).map_err(|e| e.to_string())?;
        let naive = common::naive_bpe(&words, vocab_size, EOW);
        ensure(model.merges() == &naive[..], || format!("corpus {corpus}: merge lists differ"))?;
        last_model = Some(model);
    }
    let model = last_model.unwrap();
    for i in 0..1000 {
        let n = rng.random_range(0..15);
        let seq: Vec<String> = (0..n).map(|_| word(&mut rng)).collect();
        let decoded = model.decode(&model.encode(&seq)).map_err(|e| e.to_string())?;
        ensure(decoded == seq, || format!("round trip {i} failed"))?;
    }
    Ok("20 corpora, 1000 round trips".into())
}

fn mst_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..200 {
        let n = rng.random_range(1..=5);
        let mut rows: Vec<Vec<f64>> = (0..=n).map(|_| (0..=n).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let m = ArcScoreMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        for (h, row) in rows.iter_mut().enumerate() {
            row[0] = f64::NEG_INFINITY;
            row[h] = f64::NEG_INFINITY;
        }
        for single_root in [false, true] {
            let got = m.tree_score(&decode_mst(&m, single_root));
            let (best, _) = common::brute_force_best_tree(&rows, single_root);
            ensure((got - best).abs() < 1e-9, || format!("matrix {i} single_root={single_root}: {got} vs {best}"))?;
        }
    }
    Ok("200 matrices x 2 root modes".into())
}

fn masking() -> Result<String, String> {
    let specials = [0u32, 1, 2, 3];
    let mask_id = 3u32;
    let vocab = 30_000u32;
    let cfg = MaskConfig::default();
    let masker = Masker::new(cfg, mask_id, vocab, &specials).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let blocks: Vec<Vec<u32>> = (0..400).map(|_| (0..256).map(|_| rng.random_range(4..vocab)).collect()).collect();
    let (mut positions, mut selected, mut masked, mut random, mut kept) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut lines = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let out = masker.mask(b, vnprep::pretrain::derive_seed(11, 0, i as u64));
        positions += b.len();
        for p in out.selected() {
            selected += 1;
            match out.input_ids[p] {
                id if id == mask_id => masked += 1,
                id if id == b[p] => kept += 1,
                _ => random += 1,
            }
        }
        lines.push(out.to_line());
    }
    let frac = selected as f64 / positions as f64;
    ensure(positions >= 100_000, || format!("only {positions} positions"))?;
    ensure((0.143..=0.157).contains(&frac), || format!("selected fraction {frac}"))?;
    let s = selected as f64;
    for (name, count, p) in [("mask", masked, cfg.mask_token_p), ("random", random, cfg.random_p), ("keep", kept, cfg.keep_p)] {
        let sigma = (s * p * (1.0 - p)).sqrt();
        ensure((count as f64 - s * p).abs() <= 3.0 * sigma, || format!("{name} count {count} vs {:.1} (sigma {sigma:.1})", s * p))?;
    }
    let again: Vec<String> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| masker.mask(b, vnprep::pretrain::derive_seed(11, 0, i as u64)).to_line())
        .collect();
    ensure(again == lines, || "fixed seed produced different output".into())?;
    Ok(format!(
        "positions={positions} fraction={frac:.4} mask/random/keep={:.3}/{:.3}/{:.3}",
        masked as f64 / s,
        random as f64 / s,
        kept as f64 / s
    ))
}

fn segmentation() -> Result<String, String> {
    let lex: Lexicon = [vec!["nghiên", "cứu", "viên"]].into_iter().collect();
    let s = Sentence::new(["Tôi", "là", "một", "nghiên", "cứu", "viên"]).map_err(|e| e.to_string())?;
    let ws = segment_words(&s, &lex);
    ensure(ws.words == ["Tôi", "là", "một", "nghiên_cứu_viên"], || format!("{:?}", ws.words))?;

    let syllables = ["tôi", "là", "một", "nghiên", "cứu", "viên", "sinh", "học", "đại", "Việt", "Nam"];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let n = rng.random_range(1..20);
        let syl: Vec<&str> = (0..n).map(|_| *syllables.choose(&mut rng).unwrap()).collect();
        let entries: Vec<Vec<&str>> = (0..rng.random_range(0..12))
            .map(|_| (0..rng.random_range(1..4)).map(|_| *syllables.choose(&mut rng).unwrap()).collect())
            .collect();
        let lex: Lexicon = entries.into_iter().collect();
        let s = Sentence::new(syl).map_err(|e| e.to_string())?;
        ensure(desegment(&segment_words(&s, &lex)) == s, || format!("pair {i} not lossless"))?;
    }
    Ok("example + 1000 pairs".into())
}

fn seq(tags: &[&str]) -> LabeledSequence {
    LabeledSequence::from_labels(tags.iter().copied())
}

fn tree(heads: &[usize], labels: &[&str]) -> DependencyTree {
    DependencyTree::new(heads.to_vec(), labels.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn metrics() -> Result<String, String> {
    let err = |e: vnprep::Error| e.to_string();
    let g = [seq(&["N", "V", "N", "CH"])];
    ensure(pos_accuracy(&g, &g).map_err(err)?.value == 100.0, || "pos identical".into())?;
    ensure(pos_accuracy(&g, &[seq(&["N", "V", "A", "CH"])]).map_err(err)?.value == 75.0, || "pos 3/4".into())?;

    let gold = tree(&[2, 0, 2, 3], &["sub", "root", "dob", "nmod"]);
    let s = las_uas(std::slice::from_ref(&gold), std::slice::from_ref(&gold)).map_err(err)?;
    ensure((s.las.value, s.uas.value) == (100.0, 100.0), || "dep identical".into())?;
    let pred = tree(&[2, 0, 2, 2], &["sub", "root", "nmod", "nmod"]);
    let s = las_uas(&[gold], &[pred]).map_err(err)?;
    ensure((s.uas.value, s.las.value) == (75.0, 50.0), || format!("dep hand count {s:?}"))?;

    let two = [seq(&["B-PER", "I-PER", "O", "B-LOC"])];
    ensure(ner_span_f1(&two, &two).map_err(err)?.f1 == 100.0, || "ner identical".into())?;
    let r = ner_span_f1(&[seq(&["B-PER", "O", "O"])], &[seq(&["B-PER", "O", "B-LOC"])]).map_err(err)?;
    ensure(
        (r.precision, r.recall, r.f1_result().rounded()) == (50.0, 100.0, 66.67),
        || format!("ner hand counts {r:?}"),
    )?;
    let r = ner_span_f1(&[seq(&["B-PER", "O"])], &[seq(&["O", "O"])]).map_err(err)?;
    ensure((r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0), || "ner empty prediction".into())?;

    let all = ["entailment", "neutral", "contradiction", "neutral"];
    ensure(nli_accuracy(&all, &all).map_err(err)?.value == 100.0, || "nli identical".into())?;
    let half = ["entailment", "neutral", "neutral", "entailment"];
    ensure(nli_accuracy(&all, &half).map_err(err)?.value == 50.0, || "nli 2/4".into())?;

    const TAGS: [&str; 7] = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..500 {
        let n = rng.random_range(1..16);
        let g: Vec<&str> = (0..n).map(|_| *TAGS.choose(&mut rng).unwrap()).collect();
        let p: Vec<&str> = (0..n).map(|_| *TAGS.choose(&mut rng).unwrap()).collect();
        let (spans, _) = extract_spans(&g).map_err(err)?;
        let ours: Vec<_> = spans.into_iter().map(|s| (s.start, s.end, s.label)).collect();
        ensure(ours == common::conlleval_chunks(&g), || format!("sequence {i}: spans differ"))?;
        let r = ner_span_f1(&[seq(&g)], &[seq(&p)]).map_err(err)?;
        let (op, or, of) = common::oracle_prf(std::slice::from_ref(&g), std::slice::from_ref(&p));
        ensure(
            (r.precision - op).abs() < 1e-9 && (r.recall - or).abs() < 1e-9 && (r.f1 - of).abs() < 1e-9,
            || format!("sequence {i}: P/R/F differ from oracle"),
        )?;
    }
    for i in 0..500 {
        let n = rng.random_range(1..10);
        let random_tree = |rng: &mut ChaCha8Rng| {
            let heads: Vec<usize> = (1..=n).map(|d| { let h = rng.random_range(0..=n); if h == d { 0 } else { h } }).collect();
            let labels: Vec<&str> = (0..n).map(|_| *["sub", "dob", "nmod"].choose(rng).unwrap()).collect();
            tree(&heads, &labels)
        };
        let (g, p) = (random_tree(&mut rng), random_tree(&mut rng));
        let s = las_uas(&[g], &[p]).map_err(err)?;
        ensure(s.las.value <= s.uas.value, || format!("tree pair {i}: LAS > UAS"))?;
    }
    Ok("examples exact, 500 NER oracle checks, 500 tree pairs".into())
}

fn dedup() -> Result<String, String> {
    let err = |e: vnprep::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = ["ba", "mẹ", "con", "nhà", "đi", "về", "ăn", "cơm", "học", "trường"];
    for c in 0..50 {
        let mut texts: Vec<String> = (0..rng.random_range(1..15))
            .map(|_| (0..rng.random_range(1..20)).map(|_| *vocab.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "))
            .collect();
        for _ in 0..rng.random_range(0..6) {
            let copy = texts.choose(&mut rng).unwrap().clone();
            texts.push(copy);
        }
        let docs: Vec<Document> = texts.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.clone())).collect();
        let out = dedup_corpus(docs, &DedupConfig::default()).map_err(err)?;
        let kept: Vec<&str> = out.kept.iter().map(|d| d.text.as_str()).collect();
        let unique: HashSet<&str> = kept.iter().copied().collect();
        ensure(unique.len() == kept.len(), || format!("corpus {c}: exact duplicate survived"))?;
    }

    let token_hash = |x: u64| vnprep::corpus::shingle_hash(&[format!("t{x}")]);
    let num_hashes = 256;
    let mut worst: f64 = 0.0;
    let mut pair = 0u64;
    while pair < 100 {
        let universe = rng.random_range(5..200u64);
        let pa = rng.random_range(0.1..0.9);
        let pb = rng.random_range(0.1..0.9);
        let a: HashSet<u64> = (0..universe).filter(|_| rng.random_bool(pa)).map(token_hash).collect();
        let b: HashSet<u64> = (0..universe).filter(|_| rng.random_bool(pb)).map(token_hash).collect();
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let j = common::exact_jaccard(&a, &b);
        let sa = ShingleSet::from_hashes("a", a.iter().copied());
        let sb = ShingleSet::from_hashes("b", b.iter().copied());
        let est = estimated_jaccard(
            &minhash_signature(&sa, num_hashes, pair).map_err(err)?,
            &minhash_signature(&sb, num_hashes, pair).map_err(err)?,
        );
        let sigma = (j * (1.0 - j) / num_hashes as f64).sqrt();
        let dev = (est - j).abs();
        ensure(dev <= 3.0 * sigma, || format!("pair {pair}: estimate {est:.4} vs exact {j:.4} (sigma {sigma:.4})"))?;
        if sigma > 0.0 {
            worst = worst.max(dev / sigma);
        }
        pair += 1;
    }
    Ok(format!("50 corpora, 100 MinHash pairs, worst deviation {worst:.2} sigma"))
}

fn data_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run_pipeline(threads: &str, out: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_vnprep"))
        .args(["--threads", threads, "pipeline", "--config"])
        .arg(data_dir().join("toy.conf"))
        .arg("--output")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    std::fs::read_to_string(out.join("digests.sha256")).map_err(|e| e.to_string())
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_pipeline("1", &tmp.path().join("a"))?;
    let b = run_pipeline("1", &tmp.path().join("b"))?;
    let c = run_pipeline("8", &tmp.path().join("c"))?;
    ensure(a == b, || "two runs differ".into())?;
    ensure(a == c, || "threads 1 and 8 differ".into())?;
    let golden = std::fs::read_to_string(data_dir().join("toy.digests")).map_err(|e| e.to_string())?;
    ensure(a == golden, || "digests differ from data/toy.digests".into())?;
    Ok(format!("{} files identical across runs and thread counts", a.lines().count()))
}

fn early_stopping() -> Result<String, String> {
    let policy = TrainingSchedulePolicy { max_epochs: 30, patience: 5 };
    let run = |s: &[f64]| early_stopping_schedule(s, &policy).map(|o| (o.stop_epoch, o.best_epoch)).map_err(|e| e.to_string());
    let rising: Vec<f64> = (1..=30).map(f64::from).collect();
    ensure(run(&rising)? == (30, 30), || "monotone".into())?;
    ensure(run(&[0.5, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9])? == (7, 2), || "plateau".into())?;
    ensure(run(&[0.7; 30])? == (6, 1), || "all-equal".into())?;
    Ok("monotone (30,30), plateau (7,2), all-equal (6,1)".into())
}

fn main() {
    let criteria: [(&str, Check, Duration); 10] = [
        ("budget arithmetic", budget, Duration::from_millis(1)),
        ("parameter counts", parameters, Duration::from_millis(1)),
        ("BPE oracle equivalence", bpe_oracle, Duration::from_secs(10)),
        ("MST oracle equivalence", mst_oracle, Duration::from_secs(30)),
        ("masking statistics", masking, Duration::from_secs(5)),
        ("segmentation", segmentation, Duration::from_secs(5)),
        ("metrics", metrics, Duration::from_secs(10)),
        ("dedup", dedup, Duration::from_secs(10)),
        ("end-to-end determinism", determinism, Duration::from_secs(60)),
        ("early stopping", early_stopping, Duration::from_secs(1)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => (false, e),
        };
        println!(
            "criterion {:>2} {:<24} {} ({:.3?} / {:?}) {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            elapsed,
            limit,
            detail
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
