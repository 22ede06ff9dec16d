//! Seeded synthetic corpora and gold-echo responders for tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use asasf_core::promptkit::CompiledPrompt;
use asasf_core::{AnswerRecord, Label, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "tcp", "udp", "packet", "window", "ack", "flow", "control", "congestion", "route", "hop",
    "frame", "collision", "token", "ring", "bus", "star", "delay", "buffer", "sender", "receiver",
    "timeout", "sequence", "number", "checksum", "header", "bridge", "switch", "spanning", "tree",
    "loop", "multicast", "broadcast",
];

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    /// Questions with train and unseen-answer test records.
    pub seen_questions: usize,
    pub train_per_question: usize,
    pub ua_per_question: usize,
    /// Questions that appear only in the unseen-question split.
    pub unseen_questions: usize,
    pub uq_per_question: usize,
}

impl Shape {
    pub fn small() -> Shape {
        Shape {
            seen_questions: 4,
            train_per_question: 6,
            ua_per_question: 5,
            unseen_questions: 2,
            uq_per_question: 4,
        }
    }
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Records with unique student answers, so a stub can recover an item from
/// its prompt.
pub fn corpus(shape: Shape, seed: u64) -> Vec<(AnswerRecord, Split)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut out = Vec::new();
    let mut make = |rng: &mut ChaCha8Rng, q: usize, n: usize, split: Split, out: &mut Vec<_>| {
        for _ in 0..n {
            let answer = loop {
                let a = words(rng, 3, 8);
                if used.insert(a.clone()) {
                    break a;
                }
            };
            let label = *Label::ALL.choose(rng).unwrap();
            let score = match label {
                Label::Correct => 1.0,
                Label::Incorrect => 0.0,
                Label::PartiallyCorrect => *[0.25, 0.5, 0.75].choose(rng).unwrap(),
            };
            let id = format!("q{q}-{}-{}", split.as_str(), out.len());
            out.push((
                AnswerRecord {
                    id,
                    question_id: format!("q{q}"),
                    question: format!("Question {q}: explain {}?", VOCAB[q % VOCAB.len()]),
                    reference_answer: format!("reference for {q}: {}", words(rng, 4, 6)),
                    student_answer: answer,
                    gold_score: score,
                    gold_label: label,
                    gold_feedback: format!("feedback {}", words(rng, 3, 7)),
                },
                split,
            ));
        }
    };
    for q in 0..shape.seen_questions {
        make(&mut rng, q, shape.train_per_question, Split::Train, &mut out);
        make(&mut rng, q, shape.ua_per_question, Split::TestUa, &mut out);
    }
    for q in shape.seen_questions..shape.seen_questions + shape.unseen_questions {
        make(&mut rng, q, shape.uq_per_question, Split::TestUq, &mut out);
    }
    out
}

/// Student answer of the live item: the last `Student Answer:` line.
pub fn live_answer(user_text: &str) -> Option<&str> {
    user_text
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Student Answer: "))
}

pub fn typed_reply(r: &AnswerRecord) -> String {
    serde_json::json!({
        "score": r.gold_score,
        "label": r.gold_label.as_str(),
        "feedback": r.gold_feedback,
    })
    .to_string()
}

pub fn relaxed_reply(r: &AnswerRecord) -> String {
    format!(
        "Score: {}\nLabel: {}\nFeedback: {}",
        r.gold_score,
        r.gold_label.as_str(),
        r.gold_feedback
    )
}

pub fn is_relaxed_request(system_text: &str) -> bool {
    system_text.contains("labelled lines")
}

/// Answers each prompt with the live item's gold values. Typed requests for
/// answers in `malformed` get prose instead of JSON; relaxed requests are
/// always answered properly.
pub struct GoldEcho {
    by_answer: HashMap<String, AnswerRecord>,
    malformed: HashSet<String>,
}

impl GoldEcho {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a AnswerRecord>) -> GoldEcho {
        GoldEcho {
            by_answer: records
                .into_iter()
                .map(|r| (r.student_answer.clone(), r.clone()))
                .collect(),
            malformed: HashSet::new(),
        }
    }

    pub fn malformed_for<'a>(mut self, answers: impl IntoIterator<Item = &'a str>) -> GoldEcho {
        self.malformed.extend(answers.into_iter().map(str::to_string));
        self
    }

    pub fn respond(&self, system_text: &str, user_text: &str) -> String {
        let Some(answer) = live_answer(user_text) else {
            return "no student answer found".into();
        };
        let Some(r) = self.by_answer.get(answer) else {
            return format!("unknown answer {answer}");
        };
        if is_relaxed_request(system_text) {
            relaxed_reply(r)
        } else if self.malformed.contains(answer) {
            "The student seems to understand most of it, I would say fairly good.".into()
        } else {
            typed_reply(r)
        }
    }

    pub fn respond_to(&self, p: &CompiledPrompt) -> String {
        self.respond(&p.system_text, &p.user_text)
    }
}
