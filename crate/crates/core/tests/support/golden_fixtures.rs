//! Prompt renderings pinned by golden files under `tests/golden/`.
#![allow(dead_code)]

use std::path::Path;

use asasf_core::promptkit::{compile_signature, record_inputs, render_prompt, render_relaxed};
use asasf_core::{AnswerRecord, Demo, Label, PromptStyle, Signature};

fn record(id: &str, answer: &str, score: f64, label: Label, feedback: &str) -> AnswerRecord {
    AnswerRecord {
        id: id.into(),
        question_id: "q-tcp".into(),
        question: "Why does TCP use a three-way handshake?".into(),
        reference_answer: "Both sides agree on initial sequence numbers before data flows."
            .into(),
        student_answer: answer.into(),
        gold_score: score,
        gold_label: label,
        gold_feedback: feedback.into(),
    }
}

fn show(system: &str, user: &str) -> String {
    format!("=== system ===\n{system}\n=== user ===\n{user}\n")
}

/// (file name, rendered text) for every pinned prompt.
pub fn cases() -> Vec<(String, String)> {
    let sig = Signature::asas_f();
    let live = record("live", "To sync sequence numbers.", 0.0, Label::Incorrect, "");
    let demo_records = [
        record(
            "d1",
            "So both ends agree on sequence numbers.",
            1.0,
            Label::Correct,
            "Covers the key point.",
        ),
        record(
            "d2",
            "It makes the connection \"reliable\".",
            0.25,
            Label::PartiallyCorrect,
            "Too vague: which mechanism?\nName the sequence numbers.",
        ),
    ];

    let mut out = Vec::new();
    for (style, tag) in [(PromptStyle::Predict, "predict"), (PromptStyle::ChainOfThought, "cot")] {
        let template = compile_signature(&sig, style).unwrap();
        let inputs = record_inputs(&live, &template).unwrap();
        let demos: Vec<Demo> = demo_records
            .iter()
            .map(|r| Demo::from_record(r, &template).unwrap())
            .collect();
        let zero = render_prompt(&template, &inputs, &[]).unwrap();
        let few = render_prompt(&template, &inputs, &demos).unwrap();
        let relaxed = render_relaxed(&template, &inputs, &demos).unwrap();
        let name = |kind: &str| format!("{tag}_{kind}.txt");
        out.push((name("zero_shot"), show(&zero.system_text, &zero.user_text)));
        out.push((name("two_demos"), show(&few.system_text, &few.user_text)));
        out.push((name("relaxed"), show(&relaxed.system_text, &relaxed.user_text)));
    }
    out
}

/// Names of cases whose rendering differs from the file in `dir`.
pub fn mismatches(dir: &Path) -> Vec<String> {
    cases()
        .into_iter()
        .filter(|(name, text)| {
            std::fs::read(dir.join(name)).map_or(true, |bytes| bytes != text.as_bytes())
        })
        .map(|(name, _)| name)
        .collect()
}

pub fn rewrite(dir: &Path) {
    for (name, text) in cases() {
        std::fs::write(dir.join(name), text).expect("write golden file");
    }
}
