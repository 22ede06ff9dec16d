#[path = "support/synthetic.rs"]
mod synthetic;

use asasf_core::{Corpus, CorpusFormat, Split};
use proptest::prelude::*;
use synthetic::Shape;

fn shape() -> impl Strategy<Value = Shape> {
    (1usize..4, 1usize..5, 0usize..4, 0usize..3, 1usize..4).prop_map(|(s, t, ua, u, uq)| Shape {
        seen_questions: s,
        train_per_question: t,
        ua_per_question: ua,
        unseen_questions: u,
        uq_per_question: uq,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_then_load_is_identity(shape in shape(), seed in any::<u64>(), csv in any::<bool>()) {
        let corpus = Corpus::new(synthetic::corpus(shape, seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let format = if csv { CorpusFormat::Csv } else { CorpusFormat::Jsonl };
        let path = dir.path().join(if csv { "c.csv" } else { "c.jsonl" });
        corpus.save(&path, format).unwrap();
        let back = Corpus::load(&path, CorpusFormat::from_path(&path)).unwrap();
        prop_assert_eq!(back.records(), corpus.records());
        for r in corpus.records() {
            prop_assert_eq!(back.split_of(&r.id), corpus.split_of(&r.id));
        }
    }

    #[test]
    fn split_views_partition_the_corpus(shape in shape(), seed in any::<u64>()) {
        let corpus = Corpus::new(synthetic::corpus(shape, seed)).unwrap();
        let total: usize = Split::ALL.iter().map(|s| corpus.split_view(*s).len()).sum();
        prop_assert_eq!(total, corpus.len());
        let train_q = corpus.question_ids(Split::Train);
        prop_assert!(corpus.question_ids(Split::TestUq).is_disjoint(&train_q));
        prop_assert!(corpus.question_ids(Split::TestUa).is_subset(&train_q));
    }
}

#[test]
fn split_view_keeps_input_order() {
    let rows = synthetic::corpus(Shape::small(), 0);
    let corpus = Corpus::new(rows.clone()).unwrap();
    let expected: Vec<_> = rows
        .iter()
        .filter(|(_, s)| *s == Split::TestUa)
        .map(|(r, _)| r.clone())
        .collect();
    assert_eq!(corpus.split_view(Split::TestUa), expected);
}
