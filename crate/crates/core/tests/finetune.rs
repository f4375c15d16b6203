use proptest::prelude::*;
use vnprep::bpe::{train_bpe, BpeTrainConfig};
use vnprep::finetune::{align_first_subword, average_over_seeds, early_stopping_schedule, TrainingSchedulePolicy};
use vnprep::segmenter::WordSegmentedSentence;

fn policy(patience: usize) -> TrainingSchedulePolicy {
    TrainingSchedulePolicy { max_epochs: 30, patience }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn more_patience_never_stops_earlier(scores in prop::collection::vec(0u8..10, 1..30), p in 1usize..10) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let a = early_stopping_schedule(&scores, &policy(p)).unwrap();
        let b = early_stopping_schedule(&scores, &policy(p + 1)).unwrap();
        prop_assert!(b.stop_epoch >= a.stop_epoch);
    }

    #[test]
    fn best_epoch_holds_the_maximum(scores in prop::collection::vec(0u8..10, 1..30), p in 1usize..10) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let o = early_stopping_schedule(&scores, &policy(p)).unwrap();
        let best = scores[o.best_epoch - 1];
        prop_assert!(scores[..o.stop_epoch].iter().all(|&s| s <= best));
        prop_assert!(scores[..o.best_epoch - 1].iter().all(|&s| s < best));
    }

    #[test]
    fn alignment_has_one_index_per_word(words in prop::collection::vec("[abc]{1,6}", 1..10), offset in 0usize..3) {
        let model = train_bpe(
            vec![WordSegmentedSentence { words: vec!["ab".into(), "abc".into(), "ca".into(), "ab".into()] }],
            &BpeTrainConfig::with_vocab_size(8),
        ).unwrap();
        let sw = model.encode(&words);
        let a = align_first_subword(&words, &sw, offset).unwrap();
        prop_assert_eq!(a.len(), words.len());
        prop_assert!(a.first_piece_index.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(a.first_piece_index[0], offset);
    }

    #[test]
    fn seed_average_matches_hand_sum(scores in prop::collection::vec(0.0f64..100.0, 5)) {
        let by_hand = (scores[0] + scores[1] + scores[2] + scores[3] + scores[4]) / 5.0;
        prop_assert!((average_over_seeds(&scores, 5).unwrap() - by_hand).abs() < 1e-9);
    }
}

#[test]
fn hand_traced_schedules() {
    let rising: Vec<f64> = (1..=30).map(f64::from).collect();
    let o = early_stopping_schedule(&rising, &policy(5)).unwrap();
    assert_eq!((o.stop_epoch, o.best_epoch), (30, 30));

    let plateau = [0.5, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
    let o = early_stopping_schedule(&plateau, &policy(5)).unwrap();
    assert_eq!((o.stop_epoch, o.best_epoch), (7, 2));

    let flat = [0.7; 30];
    let o = early_stopping_schedule(&flat, &policy(5)).unwrap();
    assert_eq!((o.stop_epoch, o.best_epoch), (6, 1));
}

#[test]
fn alignment_examples() {
    let model = train_bpe(
        vec![WordSegmentedSentence::from_line("Tôi Tôi Tôi")],
        &BpeTrainConfig::with_vocab_size(100),
    )
    .unwrap();
    let words = ["Tôi", "nghiên_cứu_viên"];
    let sw = model.encode(&words);
    assert_eq!(sw.pieces[0], "Tôi</w>");
    assert!(sw.len() > 2);
    assert_eq!(align_first_subword(&words, &sw, 0).unwrap().first_piece_index, vec![0, 1]);

    let mut broken = sw.clone();
    broken.word_boundaries.pop();
    assert!(align_first_subword(&words, &broken, 0).is_err());
}
