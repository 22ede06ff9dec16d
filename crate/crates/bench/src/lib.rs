//! Seeded inputs shared by the benchmarks.

use asasf_core::{AnswerRecord, Label};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "tcp", "udp", "packet", "window", "ack", "flow", "congestion", "route", "hop", "frame",
    "collision", "token", "ring", "bus", "star", "delay", "sender", "receiver", "buffer", "loss",
    "retransmit", "timeout", "bandwidth", "latency", "the", "a", "is", "of", "to", "and",
];

/// `n` sentences of 5..=`max_len` words.
pub fn sentences(n: usize, max_len: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(5..=max_len.max(5));
            (0..len)
                .map(|_| *WORDS.choose(&mut rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn records(n: usize, seed: u64) -> Vec<AnswerRecord> {
    sentences(n, 40, seed)
        .into_iter()
        .enumerate()
        .map(|(i, answer)| AnswerRecord {
            id: format!("r{i:05}"),
            question_id: format!("q{}", i % 20),
            question: "q".into(),
            reference_answer: "r".into(),
            student_answer: answer,
            gold_score: (i % 5) as f64 / 4.0,
            gold_label: Label::ALL[i % 3],
            gold_feedback: "f".into(),
        })
        .collect()
}
