mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use vnprep::corpus::{
    dedup_corpus, estimated_jaccard, minhash_signature, parse_conllu, parse_sentence_pairs, parse_tagged,
    write_conllu, write_sentence_pairs, write_tagged, ConllSentence, ConllToken, DedupConfig, Document, NliPair,
    ShingleSet,
};
use vnprep::metrics::{LabeledSequence, NliLabel};

fn docs_strategy() -> impl Strategy<Value = Vec<String>> {
    let doc = prop::collection::vec(prop::sample::select(&["ba", "mẹ", "con", "nhà", "đi", "về", "ăn", "cơm"][..]), 1..14)
        .prop_map(|w| w.join(" "));
    (prop::collection::vec(doc, 1..12), prop::collection::vec(any::<prop::sample::Index>(), 0..6)).prop_map(
        |(mut docs, dups)| {
            for d in dups {
                let copy = docs[d.index(docs.len())].clone();
                docs.push(copy);
            }
            docs
        },
    )
}

fn documents(texts: &[String]) -> Vec<Document> {
    texts.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exact_duplicates_are_always_removed(texts in docs_strategy()) {
        let out = dedup_corpus(documents(&texts), &DedupConfig::default()).unwrap();
        let kept: Vec<&str> = out.kept.iter().map(|d| d.text.as_str()).collect();
        let unique: HashSet<&str> = kept.iter().copied().collect();
        prop_assert_eq!(unique.len(), kept.len());
        let all: HashSet<&str> = texts.iter().map(String::as_str).collect();
        prop_assert!(all.iter().all(|t| unique.contains(t) || out.removed.iter().any(|r| texts[r.dropped_id[1..].parse::<usize>().unwrap()] == *t)));
    }

    #[test]
    fn dedup_is_idempotent(texts in docs_strategy()) {
        let cfg = DedupConfig::default();
        let once = dedup_corpus(documents(&texts), &cfg).unwrap();
        let twice = dedup_corpus(once.kept.clone(), &cfg).unwrap();
        prop_assert_eq!(twice.kept, once.kept);
        prop_assert!(twice.removed.is_empty());
    }

    #[test]
    fn survivor_is_seen_first(texts in docs_strategy()) {
        let out = dedup_corpus(documents(&texts), &DedupConfig { shingle_size: 2, ..DedupConfig::default() }).unwrap();
        let index = |id: &str| id[1..].parse::<usize>().unwrap();
        for r in &out.removed {
            prop_assert!(index(&r.kept_id) < index(&r.dropped_id));
            prop_assert!(out.kept.iter().any(|d| d.id == r.kept_id));
        }
    }

    #[test]
    fn conllu_round_trip(sentences in prop::collection::vec((1usize..7).prop_flat_map(|n| prop::collection::vec(0..=n, n)), 1..4)) {
        let sents: Vec<ConllSentence> = sentences
            .iter()
            .map(|heads| ConllSentence {
                comments: vec![" text".to_string()],
                tokens: heads
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| ConllToken::bare(i + 1, format!("w{i}"), if h == i + 1 { 0 } else { h }, "dep"))
                    .collect(),
            })
            .collect();
        let mut buf = Vec::new();
        write_conllu(&mut buf, &sents).unwrap();
        prop_assert_eq!(parse_conllu(&buf[..], "mem").unwrap(), sents);
    }

    #[test]
    fn tagged_and_pairs_round_trip(rows in prop::collection::vec(prop::collection::vec(("[a-zà-ỹ_]{1,6}", "[A-Z]{1,3}"), 1..6), 1..4)) {
        let seqs: Vec<LabeledSequence> = rows
            .iter()
            .map(|r| LabeledSequence::new(r.iter().map(|p| p.0.clone()).collect(), r.iter().map(|p| p.1.clone()).collect()).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_tagged(&mut buf, &seqs).unwrap();
        prop_assert_eq!(parse_tagged(&buf[..], "mem").unwrap(), seqs);

        let labels = [NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction];
        let pairs: Vec<NliPair> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| NliPair { premise: r[0].0.clone(), hypothesis: r[r.len() - 1].0.clone(), label: labels[i % 3] })
            .collect();
        let mut buf = Vec::new();
        write_sentence_pairs(&mut buf, &pairs).unwrap();
        prop_assert_eq!(parse_sentence_pairs(&buf[..], "mem").unwrap(), pairs);
    }
}

fn tokens(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn exactly_one_pair_crosses_the_threshold() {
    let a = tokens("t", 30);
    let mut b = a.clone();
    b[29] = "x".to_string();
    let mut c = a.clone();
    c[15] = "y".to_string();
    let texts = vec![
        a.join(" "),
        tokens("u", 25).join(" "),
        c.join(" "),
        b.join(" "),
        tokens("v", 40).join(" "),
    ];
    let cfg = DedupConfig::default();
    let shingles: Vec<_> = texts.iter().map(|t| common::string_shingles(t, cfg.shingle_size)).collect();
    let mut crossing = Vec::new();
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            if common::exact_jaccard(&shingles[i], &shingles[j]) >= cfg.threshold {
                crossing.push((i, j));
            }
        }
    }
    assert_eq!(crossing, vec![(0, 3)]);

    let out = dedup_corpus(documents(&texts), &cfg).unwrap();
    assert_eq!(out.removed.len(), 1);
    assert_eq!((out.removed[0].dropped_id.as_str(), out.removed[0].kept_id.as_str()), ("d3", "d0"));
}

#[test]
fn two_identical_documents() {
    let out = dedup_corpus(documents(&["x y".into(), "x y".into()]), &DedupConfig::default()).unwrap();
    assert_eq!(out.kept.len(), 1);
    assert_eq!(out.removed[0].dropped_id, "d1");
    assert_eq!(out.removed[0].similarity, 1.0);
    let out = dedup_corpus(documents(&["a b c d e f".into(), "g h i j k l".into()]), &DedupConfig::default()).unwrap();
    assert_eq!(out.kept.len(), 2);
}

#[test]
fn library_jaccard_agrees_with_string_sets() {
    let a = "một hai ba bốn năm sáu bảy tám chín mười";
    let b = "một hai ba bốn năm sáu bảy tám chín mươi";
    let exact = common::exact_jaccard(&common::string_shingles(a, 3), &common::string_shingles(b, 3));
    let lib = ShingleSet::from_text("a", a, 3).exact_jaccard(&ShingleSet::from_text("b", b, 3));
    assert_eq!(lib, exact);
    assert_eq!(exact, 7.0 / 9.0);
}

#[test]
fn minhash_is_unbiased_over_seeds() {
    let a: HashSet<u64> = (0..20u64).map(|i| vnprep::corpus::shingle_hash(&[format!("s{i}")])).collect();
    let b: HashSet<u64> = (8..28u64).map(|i| vnprep::corpus::shingle_hash(&[format!("s{i}")])).collect();
    let j = common::exact_jaccard(&a, &b);
    let sa = ShingleSet::from_hashes("a", a.iter().copied());
    let sb = ShingleSet::from_hashes("b", b.iter().copied());
    let trials = 1000;
    let num_hashes = 64;
    let mean: f64 = (0..trials)
        .map(|seed| {
            estimated_jaccard(
                &minhash_signature(&sa, num_hashes, seed).unwrap(),
                &minhash_signature(&sb, num_hashes, seed).unwrap(),
            )
        })
        .sum::<f64>()
        / trials as f64;
    let se = (j * (1.0 - j) / (trials as f64 * num_hashes as f64)).sqrt();
    assert!((mean - j).abs() <= 3.0 * se, "mean {mean} vs exact {j} (se {se})");
}

#[test]
fn disjoint_singletons_never_match() {
    let a = ShingleSet::from_hashes("a", [1u64]);
    let b = ShingleSet::from_hashes("b", [2u64]);
    for seed in 0..50 {
        let e = estimated_jaccard(&minhash_signature(&a, 256, seed).unwrap(), &minhash_signature(&b, 256, seed).unwrap());
        assert_eq!(e, 0.0);
    }
}
