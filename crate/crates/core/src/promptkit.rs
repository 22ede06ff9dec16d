//! Declarative signatures compiled into deterministic prompt text.
//!
//! A [`Signature`] names the input and output fields of a task. Compiling it
//! with a [`PromptStyle`] yields a [`PromptTemplate`]; rendering the template
//! with live inputs and zero or more [`Demo`]s yields a [`CompiledPrompt`]
//! whose bytes depend only on those arguments.
//!
//! Typed prompts ask for a single JSON object. Relaxed prompts, used for the
//! fallback predictor, ask for labelled `Name: value` lines instead.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AnswerRecord;

pub const REASONING_FIELD: &str = "reasoning";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("signature needs at least one input and one output field")]
    EmptySignature,
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("demo from `{record}` does not match the signature: {detail}")]
    DemoSchemaMismatch { record: String, detail: String },
    #[error("field `{0}` does not correspond to any record attribute")]
    UnmappedField(String),
    #[error("could not read signature: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse signature: {0}")]
    Json(#[from] serde_json::Error),
}

/// Type tag of an output field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Real number in `[0, 1]`.
    Real01,
    /// One of the three canonical labels.
    Label3,
    FreeText,
}

impl FieldKind {
    fn type_hint(self) -> &'static str {
        match self {
            FieldKind::Real01 => "number between 0 and 1",
            FieldKind::Label3 => "one of: correct, partially_correct, incorrect",
            FieldKind::FreeText => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputField {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputField {
    pub name: String,
    pub kind: FieldKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub task_description: String,
    pub scoring_criteria: String,
    pub inputs: Vec<InputField>,
    pub outputs: Vec<OutputField>,
}

pub const DEFAULT_TASK_DESCRIPTION: &str = "Score a student answer to a question against the \
reference answer, assign a label, and write feedback that explains the score.";

pub const DEFAULT_SCORING_CRITERIA: &str = "\
- correct: the answer covers every required point of the reference answer; score 1.
- partially_correct: the answer covers some required points but misses or gets others wrong; score strictly between 0 and 1.
- incorrect: the answer is wrong, irrelevant or missing; score 0.";

impl Signature {
    /// The question / reference answer / student answer → score, label,
    /// feedback signature.
    pub fn asas_f() -> Signature {
        let input = |name: &str, description: &str| InputField {
            name: name.into(),
            description: description.into(),
        };
        let output = |name: &str, kind, description: &str| OutputField {
            name: name.into(),
            kind,
            description: description.into(),
        };
        Signature {
            task_description: DEFAULT_TASK_DESCRIPTION.into(),
            scoring_criteria: DEFAULT_SCORING_CRITERIA.into(),
            inputs: vec![
                input("question", "The question the student was asked."),
                input("reference_answer", "A model answer written by the instructor."),
                input("student_answer", "The student's answer to be graded. May be empty."),
            ],
            outputs: vec![
                output("score", FieldKind::Real01, "Numeric score of the student answer."),
                output("label", FieldKind::Label3, "Categorical grade of the student answer."),
                output(
                    "feedback",
                    FieldKind::FreeText,
                    "Elaborated feedback explaining what is right or missing.",
                ),
            ],
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Signature, PromptError> {
        let text = std::fs::read_to_string(path)?;
        let sig: Signature = serde_json::from_str(&text)?;
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.inputs.is_empty() || self.outputs.is_empty() {
            return Err(PromptError::EmptySignature);
        }
        let mut seen = HashSet::new();
        for name in self
            .inputs
            .iter()
            .map(|f| &f.name)
            .chain(self.outputs.iter().map(|f| &f.name))
        {
            if !seen.insert(name.as_str()) {
                return Err(PromptError::DuplicateField(name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    #[default]
    Predict,
    ChainOfThought,
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "predict" => Ok(PromptStyle::Predict),
            "chain_of_thought" | "cot" => Ok(PromptStyle::ChainOfThought),
            other => Err(format!("unknown prompt style `{other}`")),
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStyle::Predict => "predict",
            PromptStyle::ChainOfThought => "chain_of_thought",
        })
    }
}

/// Name and type tag of one requested output field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub kind: FieldKind,
}

/// A signature compiled for one style. Holds everything needed to render.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub style: PromptStyle,
    pub instruction: String,
    pub scoring_criteria: String,
    pub inputs: Vec<InputField>,
    /// Requested outputs, including the leading reasoning field for
    /// chain-of-thought.
    pub outputs: Vec<OutputField>,
}

/// A fully worked example shown before the live item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub source_record_id: String,
}

impl Demo {
    /// Map a labelled record onto `template`'s fields.
    pub fn from_record(record: &AnswerRecord, template: &PromptTemplate) -> Result<Demo, PromptError> {
        let inputs = record_inputs(record, template)?;
        let mut outputs = BTreeMap::new();
        for field in template.demo_outputs() {
            let value = match field.name.as_str() {
                "score" => format_score(record.gold_score),
                "label" => record.gold_label.as_str().to_string(),
                "feedback" => record.gold_feedback.clone(),
                other => return Err(PromptError::UnmappedField(other.to_string())),
            };
            outputs.insert(field.name.clone(), value);
        }
        Ok(Demo {
            inputs,
            outputs,
            source_record_id: record.id.clone(),
        })
    }
}

/// Live inputs for `record`: the template's input fields and nothing else, so
/// gold outputs cannot reach the live item.
pub fn record_inputs(
    record: &AnswerRecord,
    template: &PromptTemplate,
) -> Result<BTreeMap<String, String>, PromptError> {
    template
        .inputs
        .iter()
        .map(|field| {
            let value = match field.name.as_str() {
                "question" => &record.question,
                "reference_answer" => &record.reference_answer,
                "student_answer" => &record.student_answer,
                other => return Err(PromptError::UnmappedField(other.to_string())),
            };
            Ok((field.name.clone(), value.clone()))
        })
        .collect()
}

/// Shortest decimal that round-trips, always with a fractional part
/// (`1.0`, `0.75`).
pub fn format_score(score: f64) -> String {
    serde_json::to_string(&score).unwrap_or_else(|_| score.to_string())
}

/// Rendered prompt ready for a chat completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledPrompt {
    pub system_text: String,
    pub user_text: String,
    pub output_schema: Vec<SchemaField>,
    pub demo_count: usize,
    pub relaxed: bool,
}

pub fn compile_signature(sig: &Signature, style: PromptStyle) -> Result<PromptTemplate, PromptError> {
    sig.validate()?;
    let mut outputs = sig.outputs.clone();
    if style == PromptStyle::ChainOfThought {
        if outputs.iter().any(|f| f.name == REASONING_FIELD) {
            return Err(PromptError::DuplicateField(REASONING_FIELD.into()));
        }
        outputs.insert(
            0,
            OutputField {
                name: REASONING_FIELD.into(),
                kind: FieldKind::FreeText,
                description: "Think step by step about how the student answer compares to the \
                              reference answer before grading."
                    .into(),
            },
        );
    }
    Ok(PromptTemplate {
        style,
        instruction: sig.task_description.clone(),
        scoring_criteria: sig.scoring_criteria.clone(),
        inputs: sig.inputs.clone(),
        outputs,
    })
}

pub fn render_prompt(
    template: &PromptTemplate,
    inputs: &BTreeMap<String, String>,
    demos: &[Demo],
) -> Result<CompiledPrompt, PromptError> {
    template.render(inputs, demos, false)
}

/// Like [`render_prompt`] but requests labelled plain-text lines instead of
/// JSON.
pub fn render_relaxed(
    template: &PromptTemplate,
    inputs: &BTreeMap<String, String>,
    demos: &[Demo],
) -> Result<CompiledPrompt, PromptError> {
    template.render(inputs, demos, true)
}

fn display_name(name: &str) -> String {
    name.split('_')
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

impl PromptTemplate {
    pub fn schema(&self) -> Vec<SchemaField> {
        self.outputs
            .iter()
            .map(|f| SchemaField {
                name: f.name.clone(),
                kind: f.kind,
            })
            .collect()
    }

    /// Same template with a different instruction (used by the optimizer).
    pub fn with_instruction(&self, instruction: impl Into<String>) -> PromptTemplate {
        PromptTemplate {
            instruction: instruction.into(),
            ..self.clone()
        }
    }

    /// Output fields demos carry: everything except the reasoning field.
    pub fn demo_outputs(&self) -> impl Iterator<Item = &OutputField> + '_ {
        let skip_reasoning = self.style == PromptStyle::ChainOfThought;
        self.outputs
            .iter()
            .filter(move |f| !(skip_reasoning && f.name == REASONING_FIELD))
    }

    fn system_text(&self, relaxed: bool) -> String {
        let mut s = String::new();
        s.push_str(self.instruction.trim());
        s.push_str("\n\nScoring criteria:\n");
        s.push_str(self.scoring_criteria.trim());
        s.push_str("\n\nInput fields:\n");
        for f in &self.inputs {
            s.push_str(&format!("- {}: {}\n", f.name, f.description));
        }
        s.push_str("\nOutput fields:\n");
        for f in &self.outputs {
            s.push_str(&format!("- {} ({}): {}\n", f.name, f.kind.type_hint(), f.description));
        }
        s.push('\n');
        if relaxed {
            s.push_str("Respond with exactly these labelled lines and nothing else:\n");
            for f in &self.outputs {
                s.push_str(&format!("{}: <{}>\n", display_name(&f.name), f.kind.type_hint()));
            }
        } else {
            let keys = self
                .outputs
                .iter()
                .map(|f| format!("\"{}\"", f.name))
                .collect::<Vec<_>>()
                .join(", ");
            s.push_str(&format!(
                "Respond with a single JSON object with exactly the keys {keys}, in that order, \
                 and nothing else.\n"
            ));
        }
        s
    }

    fn check_demo(&self, demo: &Demo) -> Result<(), PromptError> {
        let mismatch = |detail: String| PromptError::DemoSchemaMismatch {
            record: demo.source_record_id.clone(),
            detail,
        };
        let want_in: Vec<&str> = self.inputs.iter().map(|f| f.name.as_str()).collect();
        let have_in: Vec<&str> = demo.inputs.keys().map(String::as_str).collect();
        let mut want_in_sorted = want_in.clone();
        want_in_sorted.sort_unstable();
        if have_in != want_in_sorted {
            return Err(mismatch(format!("inputs {have_in:?}, expected {want_in_sorted:?}")));
        }
        let mut want_out: Vec<&str> = self.demo_outputs().map(|f| f.name.as_str()).collect();
        want_out.sort_unstable();
        let have_out: Vec<&str> = demo.outputs.keys().map(String::as_str).collect();
        if have_out != want_out {
            return Err(mismatch(format!("outputs {have_out:?}, expected {want_out:?}")));
        }
        for f in self.demo_outputs() {
            if f.kind == FieldKind::Real01 && demo.outputs[&f.name].parse::<f64>().is_err() {
                return Err(mismatch(format!("`{}` is not a number", f.name)));
            }
        }
        Ok(())
    }

    fn push_inputs(&self, out: &mut String, values: &BTreeMap<String, String>) {
        for f in &self.inputs {
            out.push_str(&format!("{}: {}\n", display_name(&f.name), values[&f.name]));
        }
    }

    fn demo_json(&self, demo: &Demo) -> String {
        let parts = self
            .demo_outputs()
            .map(|f| {
                let raw = &demo.outputs[&f.name];
                let value = match f.kind {
                    FieldKind::Real01 => raw.clone(),
                    _ => serde_json::to_string(raw).expect("strings serialize"),
                };
                format!("\"{}\": {}", f.name, value)
            })
            .collect::<Vec<_>>();
        format!("{{{}}}", parts.join(", "))
    }

    fn render(
        &self,
        inputs: &BTreeMap<String, String>,
        demos: &[Demo],
        relaxed: bool,
    ) -> Result<CompiledPrompt, PromptError> {
        for f in &self.inputs {
            if !inputs.contains_key(&f.name) {
                return Err(PromptError::MissingInput(f.name.clone()));
            }
        }
        for demo in demos {
            self.check_demo(demo)?;
        }

        let mut user = String::new();
        for (i, demo) in demos.iter().enumerate() {
            user.push_str(&format!("Example {}:\n", i + 1));
            self.push_inputs(&mut user, &demo.inputs);
            if relaxed {
                for f in self.demo_outputs() {
                    user.push_str(&format!("{}: {}\n", display_name(&f.name), demo.outputs[&f.name]));
                }
            } else {
                user.push_str(&format!("Output: {}\n", self.demo_json(demo)));
            }
            user.push_str("\n---\n\n");
        }
        if !demos.is_empty() {
            user.push_str("Grade the following item.\n");
        }
        self.push_inputs(&mut user, inputs);
        if !relaxed {
            user.push_str("Output:");
        }

        Ok(CompiledPrompt {
            system_text: self.system_text(relaxed),
            user_text: user,
            output_schema: self.schema(),
            demo_count: demos.len(),
            relaxed,
        })
    }
}
