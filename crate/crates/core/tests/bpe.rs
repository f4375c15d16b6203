mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use vnprep::bpe::{
    avg_subwords_per_sentence, decode_with_marker, train_bpe, train_from_counts, BpeModel, BpeTrainConfig, WordCounts,
    EOW,
};
use vnprep::segmenter::{segment_words, Lexicon, Sentence, WordSegmentedSentence};

fn corpus_strategy() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map("[abcde]{1,6}", 1u64..6, 1..50)
}

fn counts_of(words: &BTreeMap<String, u64>) -> WordCounts {
    let mut c = WordCounts::new();
    for (w, &n) in words {
        c.add_word(w, n);
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merges_match_naive_reference(words in corpus_strategy(), extra in 0usize..40) {
        let alphabet: std::collections::HashSet<String> = words
            .keys()
            .flat_map(|w| {
                let chars: Vec<char> = w.chars().collect();
                let n = chars.len();
                chars.into_iter().enumerate().map(move |(i, c)| {
                    if i + 1 == n { format!("{c}{EOW}") } else { c.to_string() }
                })
            })
            .collect();
        let vocab_size = alphabet.len() + extra;
        let model = train_from_counts(&counts_of(&words), &BpeTrainConfig::with_vocab_size(vocab_size)).unwrap();
        prop_assert_eq!(model.merges(), &common::naive_bpe(&words, vocab_size, EOW)[..]);
    }

    #[test]
    fn encoding_matches_sequential_replay(words in corpus_strategy(), probe in "[abcdef]{1,8}") {
        let model = train_from_counts(&counts_of(&words), &BpeTrainConfig::with_vocab_size(200)).unwrap();
        prop_assert_eq!(model.encode_word(&probe), common::naive_encode_word(&probe, model.merges(), EOW));
    }

    #[test]
    fn round_trip(words in corpus_strategy(), seq in prop::collection::vec("[abcde]{1,7}", 0..12)) {
        let model = train_from_counts(&counts_of(&words), &BpeTrainConfig::with_vocab_size(100)).unwrap();
        let sw = model.encode(&seq);
        prop_assert_eq!(sw.num_words(), seq.len());
        prop_assert_eq!(model.decode(&sw).unwrap(), seq.clone());
        let reparsed = vnprep::bpe::SubwordSequence::from_eow_line(&sw.to_eow_line(), EOW);
        prop_assert_eq!(reparsed, sw);
    }

    #[test]
    fn save_and_reload_encode_identically(words in corpus_strategy(), seq in prop::collection::vec("[abcde]{1,7}", 1..8)) {
        let model = train_from_counts(&counts_of(&words), &BpeTrainConfig::with_vocab_size(60)).unwrap();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        model.write_merges(&mut m).unwrap();
        model.write_vocab(&mut v).unwrap();
        let reloaded = BpeModel::from_readers(&m[..], &v[..], EOW).unwrap();
        prop_assert_eq!(&reloaded, &model);
        prop_assert_eq!(reloaded.encode(&seq), model.encode(&seq));
    }
}

#[test]
fn naive_reference_sanity() {
    let words: BTreeMap<String, u64> = [("ab".to_string(), 3), ("cd".to_string(), 1)].into();
    let merges = common::naive_bpe(&words, 100, EOW);
    assert_eq!(merges, vec![("a".to_string(), "b</w>".to_string())]);
}

fn lines(ls: &[&str]) -> Vec<WordSegmentedSentence> {
    ls.iter().map(|l| WordSegmentedSentence::from_line(l)).collect()
}

#[test]
fn training_is_thread_count_independent() {
    let corpus: Vec<WordSegmentedSentence> = (0..3000)
        .map(|i| {
            let words: Vec<String> = (0..8).map(|j| format!("w{}x{}", (i * 7 + j * 13) % 97, j % 5)).collect();
            WordSegmentedSentence { words }
        })
        .collect();
    let train_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let counts = WordCounts::from_sentences_par(&corpus);
            train_from_counts(&counts, &BpeTrainConfig::with_vocab_size(500)).unwrap()
        })
    };
    let one = train_with(1);
    assert_eq!(one.merges(), train_with(2).merges());
    assert_eq!(one.merges(), train_with(8).merges());
    assert_eq!(one, train_bpe(corpus.clone(), &BpeTrainConfig::with_vocab_size(500)).unwrap());
}

#[test]
fn hand_replay_of_abc() {
    let model = train_bpe(lines(&["ab ab ab c"]), &BpeTrainConfig::with_vocab_size(4)).unwrap();
    assert_eq!(model.merges()[0], ("a".to_string(), "b</w>".to_string()));
    let model = train_bpe(lines(&["abx abx abx c"]), &BpeTrainConfig::with_vocab_size(6)).unwrap();
    assert_eq!(model.merges()[0], ("a".to_string(), "b".to_string()));
    assert_eq!(model.encode_word("abc"), vec!["ab", "c</w>"]);
}

#[test]
fn fully_merged_word_is_one_piece() {
    let model = train_bpe(lines(&["xyz xyz xyz"]), &BpeTrainConfig::with_vocab_size(100)).unwrap();
    assert_eq!(model.encode_word("xyz"), vec!["xyz</w>"]);
}

#[test]
fn example_sentence_round_trip() {
    let lexicon: Lexicon = [vec!["nghiên", "cứu", "viên"]].into_iter().collect();
    let s = Sentence::new(["Tôi", "là", "một", "nghiên", "cứu", "viên"]).unwrap();
    let ws = segment_words(&s, &lexicon);
    let model = train_bpe(
        lines(&["Tôi là sinh_viên", "nghiên_cứu là một", "Tôi nghiên_cứu"]),
        &BpeTrainConfig::with_vocab_size(80),
    )
    .unwrap();
    let sw = model.encode_sentence(&ws);
    assert_eq!(decode_with_marker(&sw, EOW).unwrap(), ws.words);
}

#[test]
fn average_on_ten_sentences_matches_hand_count() {
    let corpus = lines(&[
        "a", "a b", "a b c", "ab", "ba ab", "c", "abc abc", "b", "cab", "a a a a",
    ]);
    let model = train_bpe(corpus.clone(), &BpeTrainConfig::with_vocab_size(7)).unwrap();
    let by_hand: usize = corpus.iter().map(|s| s.words.iter().map(|w| model.encode_word(w).len()).sum::<usize>()).sum();
    let avg = avg_subwords_per_sentence(corpus, &model).unwrap();
    assert_eq!(avg, by_hand as f64 / 10.0);
}
