//! Labeled short-answer corpora and their train / unseen-answers /
//! unseen-questions partitions.
//!
//! Rows carry `{id, question, question_id, reference_answer, student_answer,
//! score, label, feedback, split}` and optionally `max_points`. When
//! `max_points` is present the raw score is divided by it; otherwise the score
//! must already lie in `[0, 1]`. Out-of-range scores are rejected, never
//! clamped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Canonical grading label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Incorrect,
    PartiallyCorrect,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Correct, Label::Incorrect, Label::PartiallyCorrect];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::Incorrect => "incorrect",
            Label::PartiallyCorrect => "partially_correct",
        }
    }

    /// Case-insensitive parse that folds whitespace, hyphens and underscores,
    /// so `"Partially correct"` and `"PARTIALLY_CORRECT"` both resolve.
    pub fn canonicalize(raw: &str) -> Option<Label> {
        let folded = raw
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '.')
            .to_lowercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|part| !part.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        match folded.as_str() {
            "correct" => Some(Label::Correct),
            "incorrect" => Some(Label::Incorrect),
            "partially_correct" => Some(Label::PartiallyCorrect),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::canonicalize(s).ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// Corpus partition a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestUa,
    TestUq,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::TestUa, Split::TestUq];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestUa => "test_ua",
            Split::TestUq => "test_uq",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_lowercase().replace(['-', ' '], "_");
        match folded.as_str() {
            "train" => Ok(Split::Train),
            "test_ua" | "ua" | "test_unseen_answers" | "unseen_answers" => Ok(Split::TestUa),
            "test_uq" | "uq" | "test_unseen_questions" | "unseen_questions" => Ok(Split::TestUq),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

/// One labeled item: question, reference answer, student answer and the gold
/// score / label / feedback assigned by a human grader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    pub question_id: String,
    pub question: String,
    pub reference_answer: String,
    /// May be empty ("no-response"); such records stay in the corpus.
    pub student_answer: String,
    pub gold_score: f64,
    pub gold_label: Label,
    pub gold_feedback: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything other than `.csv` is JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("row {row}: field `{field}` is not valid: {detail}")]
    InvalidField {
        row: usize,
        field: &'static str,
        detail: String,
    },
    #[error("row {row}: score {score} is outside [0, 1]")]
    ScoreOutOfRange { row: usize, score: f64 },
    #[error("row {row}: unknown label `{label}`")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: unknown split `{split}`")]
    UnknownSplit { row: usize, split: String },
    #[error("row {row}: duplicate record id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("split violation for question `{question_id}`: {reason}")]
    SplitViolation { question_id: String, reason: String },
    #[error("question text maps to more than one question_id (`{first}` and `{second}`)")]
    QuestionIdConflict { first: String, second: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: malformed JSON: {source}")]
    Json {
        row: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// An immutable, validated collection of records with their split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<AnswerRecord>,
    split_assignment: BTreeMap<String, Split>,
}

impl Corpus {
    /// Validate and assemble a corpus from `(record, split)` pairs.
    pub fn new(rows: Vec<(AnswerRecord, Split)>) -> Result<Corpus, DatasetError> {
        let mut records = Vec::with_capacity(rows.len());
        let mut split_assignment = BTreeMap::new();
        for (idx, (record, split)) in rows.into_iter().enumerate() {
            let row = idx + 1;
            validate_record(row, &record)?;
            if split_assignment.insert(record.id.clone(), split).is_some() {
                return Err(DatasetError::DuplicateId { row, id: record.id });
            }
            records.push(record);
        }
        let corpus = Corpus {
            records,
            split_assignment,
        };
        corpus.check_question_ids()?;
        corpus.check_split_isolation()?;
        Ok(corpus)
    }

    pub fn records(&self) -> &[AnswerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&AnswerRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records assigned to `split`, in input order.
    pub fn split_view(&self, split: Split) -> Vec<AnswerRecord> {
        self.split_iter(split).cloned().collect()
    }

    pub fn split_iter(&self, split: Split) -> impl Iterator<Item = &AnswerRecord> + '_ {
        self.records
            .iter()
            .filter(move |r| self.split_assignment.get(&r.id) == Some(&split))
    }

    pub fn question_ids(&self, split: Split) -> BTreeSet<&str> {
        self.split_iter(split).map(|r| r.question_id.as_str()).collect()
    }

    pub fn load(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus, DatasetError> {
        let path = path.as_ref();
        let rows = match format {
            CorpusFormat::Jsonl => read_jsonl_rows(path)?,
            CorpusFormat::Csv => read_csv_rows(path)?,
        };
        let parsed = rows
            .iter()
            .enumerate()
            .map(|(idx, row)| parse_row(idx + 1, row))
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::new(parsed)
    }

    /// Write in the same row schema `load` accepts. Scores are written already
    /// normalized, so no `max_points` column is emitted.
    pub fn save(&self, path: impl AsRef<Path>, format: CorpusFormat) -> Result<(), DatasetError> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        match format {
            CorpusFormat::Jsonl => {
                for record in &self.records {
                    let row = self.output_row(record);
                    serde_json::to_writer(&mut out, &row)
                        .map_err(|source| DatasetError::Json { row: 0, source })?;
                    out.write_all(b"\n")?;
                }
            }
            CorpusFormat::Csv => {
                let mut writer = csv::Writer::from_writer(out);
                for record in &self.records {
                    writer.serialize(self.output_row(record))?;
                }
                writer.flush()?;
                return Ok(());
            }
        }
        out.flush()?;
        Ok(())
    }

    fn output_row<'a>(&'a self, record: &'a AnswerRecord) -> OutputRow<'a> {
        OutputRow {
            id: &record.id,
            question: &record.question,
            question_id: &record.question_id,
            reference_answer: &record.reference_answer,
            student_answer: &record.student_answer,
            score: record.gold_score,
            label: record.gold_label.as_str(),
            feedback: &record.gold_feedback,
            split: self.split_assignment[&record.id].as_str(),
        }
    }

    fn check_question_ids(&self) -> Result<(), DatasetError> {
        let mut by_text: HashMap<&str, &str> = HashMap::new();
        for record in &self.records {
            let existing = by_text
                .entry(record.question.as_str())
                .or_insert(record.question_id.as_str());
            if *existing != record.question_id {
                return Err(DatasetError::QuestionIdConflict {
                    first: existing.to_string(),
                    second: record.question_id.clone(),
                });
            }
        }
        Ok(())
    }

    fn check_split_isolation(&self) -> Result<(), DatasetError> {
        let train = self.question_ids(Split::Train);
        if let Some(leak) = self
            .question_ids(Split::TestUq)
            .into_iter()
            .find(|qid| train.contains(qid))
        {
            return Err(DatasetError::SplitViolation {
                question_id: leak.to_string(),
                reason: "unseen-questions split shares a question with train".into(),
            });
        }
        if let Some(orphan) = self
            .question_ids(Split::TestUa)
            .into_iter()
            .find(|qid| !train.contains(qid))
        {
            return Err(DatasetError::SplitViolation {
                question_id: orphan.to_string(),
                reason: "unseen-answers split has a question with no train record".into(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct OutputRow<'a> {
    id: &'a str,
    question: &'a str,
    question_id: &'a str,
    reference_answer: &'a str,
    student_answer: &'a str,
    score: f64,
    label: &'a str,
    feedback: &'a str,
    split: &'a str,
}

fn validate_record(row: usize, record: &AnswerRecord) -> Result<(), DatasetError> {
    if record.id.trim().is_empty() {
        return Err(DatasetError::MissingField { row, field: "id" });
    }
    if record.question_id.trim().is_empty() {
        return Err(DatasetError::MissingField {
            row,
            field: "question_id",
        });
    }
    if !(0.0..=1.0).contains(&record.gold_score) {
        return Err(DatasetError::ScoreOutOfRange {
            row,
            score: record.gold_score,
        });
    }
    Ok(())
}

type RawRow = BTreeMap<String, Value>;

fn read_jsonl_rows(path: &Path) -> Result<Vec<RawRow>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            row: rows.len() + 1,
            source,
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_csv_rows(path: &Path) -> Result<Vec<RawRow>, DatasetError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = headers
            .iter()
            .zip(record.iter())
            .map(|(h, v)| (h.trim().to_string(), Value::String(v.to_string())))
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn text_field(row: usize, raw: &RawRow, field: &'static str) -> Result<String, DatasetError> {
    match raw.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::Null) | None => Err(DatasetError::MissingField { row, field }),
        Some(other) => Err(DatasetError::InvalidField {
            row,
            field,
            detail: format!("expected text, found {other}"),
        }),
    }
}

fn number_field(row: usize, raw: &RawRow, field: &'static str) -> Result<Option<f64>, DatasetError> {
    let invalid = |detail: String| DatasetError::InvalidField { row, field, detail };
    match raw.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| invalid(n.to_string())),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| invalid(format!("`{s}` is not a number"))),
        Some(other) => Err(invalid(format!("expected number, found {other}"))),
    }
}

fn parse_row(row: usize, raw: &RawRow) -> Result<(AnswerRecord, Split), DatasetError> {
    let raw_score = number_field(row, raw, "score")?
        .ok_or(DatasetError::MissingField { row, field: "score" })?;
    let score = match number_field(row, raw, "max_points")? {
        Some(max) if max > 0.0 => raw_score / max,
        Some(max) => {
            return Err(DatasetError::InvalidField {
                row,
                field: "max_points",
                detail: format!("{max} is not positive"),
            })
        }
        None => raw_score,
    };
    if !score.is_finite() || !(0.0..=1.0).contains(&score) {
        return Err(DatasetError::ScoreOutOfRange { row, score });
    }
    let label_text = text_field(row, raw, "label")?;
    let label = Label::canonicalize(&label_text).ok_or(DatasetError::UnknownLabel {
        row,
        label: label_text,
    })?;
    let split_text = text_field(row, raw, "split")?;
    let split = split_text
        .parse::<Split>()
        .map_err(|_| DatasetError::UnknownSplit {
            row,
            split: split_text,
        })?;
    let record = AnswerRecord {
        id: text_field(row, raw, "id")?,
        question_id: text_field(row, raw, "question_id")?,
        question: text_field(row, raw, "question")?,
        reference_answer: text_field(row, raw, "reference_answer")?,
        student_answer: text_field(row, raw, "student_answer")?,
        gold_score: score,
        gold_label: label,
        gold_feedback: text_field(row, raw, "feedback")?,
    };
    Ok((record, split))
}
