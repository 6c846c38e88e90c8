mod common;

use std::collections::BTreeSet;

use scene_factory::balancer::{
    augment_negatives, build_existence_eval, default_distractors, is_no_answer, BalanceError, EvalSubset, Vocabulary,
};
use scene_factory::lexicon::Lexicon;

#[test]
fn half_ratio_over_yes_only_fixture() {
    let (scenes, records) = common::yes_corpus();
    assert_eq!(records.len(), 200);
    let out = augment_negatives(&records, &scenes, 0.5, 3).unwrap();
    let lex = Lexicon::default();
    let no = out.iter().filter(|r| is_no_answer(&lex, &r.response)).count();
    let frac = no as f64 / out.len() as f64;
    assert!((0.48..=0.52).contains(&frac), "no fraction {frac}");
    assert_eq!(&out[..200], &records[..]);

    for r in &out[200..] {
        let label = common::asked_label(r.user_text()).expect("existence question");
        let g = &scenes[&r.scene_id];
        assert_eq!(
            common::oracle_count(g, &label),
            0,
            "{label} is present in {}",
            r.scene_id
        );
        assert!(!common::oracle_has_id(&r.response));
    }
    let pairs: BTreeSet<(String, String)> = out[200..]
        .iter()
        .map(|r| (r.scene_id.clone(), r.user_text().to_string()))
        .collect();
    assert_eq!(pairs.len(), 200, "duplicate negatives");
}

#[test]
fn ratio_and_seed_behaviour() {
    let (scenes, records) = common::yes_corpus();
    let a = augment_negatives(&records, &scenes, 0.5, 1).unwrap();
    assert_eq!(a, augment_negatives(&records, &scenes, 0.5, 1).unwrap());
    assert_eq!(augment_negatives(&records, &scenes, 0.0, 1).unwrap(), records);
    let third = augment_negatives(&records, &scenes, 0.2, 1).unwrap();
    assert_eq!(third.len(), 250);
    assert!(matches!(
        augment_negatives(&records, &scenes, 1.0, 1),
        Err(BalanceError::BadRatio(_))
    ));
}

#[test]
fn existence_eval_has_three_disjoint_subsets() {
    let (scenes, _) = common::yes_corpus();
    let qs = build_existence_eval(&scenes, 50, &default_distractors(), 5).unwrap();
    assert_eq!(qs.len(), 150);
    let vocab = Vocabulary::from_scenes(&scenes);
    let mut keys = BTreeSet::new();
    for sub in [EvalSubset::Yes, EvalSubset::No1, EvalSubset::No2] {
        let part: Vec<_> = qs.iter().filter(|q| q.subset == sub).collect();
        assert_eq!(part.len(), 50, "{sub}");
        for q in part {
            assert!(
                keys.insert((q.scene_id.clone(), q.label.clone())),
                "overlap at {}",
                q.label
            );
            let count = common::oracle_count(&scenes[&q.scene_id], &q.label);
            match sub {
                EvalSubset::Yes => assert!(count > 0 && q.answer == "yes"),
                EvalSubset::No1 => assert!(count == 0 && vocab.global_labels.contains(&q.label) && q.answer == "no"),
                EvalSubset::No2 => assert!(!vocab.global_labels.contains(&q.label) && q.answer == "no"),
            }
        }
    }
    assert!(matches!(
        build_existence_eval(&scenes, 10_000, &default_distractors(), 5),
        Err(BalanceError::InsufficientLabels { .. })
    ));
}
