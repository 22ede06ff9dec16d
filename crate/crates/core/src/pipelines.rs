//! Grading pipelines: zero-shot, retrieval-augmented few-shot, the
//! similarity vote grader, the constant majority baseline, and programs found
//! by the few-shot optimizer.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{AnswerRecord, Label, Split};
use crate::embedding::Embedder;
use crate::llmclient::{
    ChatBackend, ErrorLedger, Judgment, LedgerSnapshot, ModelConfig, ParsePath, Predictor, Stratum,
};
use crate::promptkit::{
    compile_signature, record_inputs, CompiledPrompt, Demo, PromptError, PromptStyle,
    PromptTemplate, SchemaField, Signature,
};
use crate::retrieval::{MaxSimIndex, RetrievalError};
use crate::votegrader::{vote_classify, MajorityBaseline, VoteError};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("mode `{0}` needs a MaxSim index; build one with `asasf index` first")]
    MissingIndex(Mode),
    #[error("mode `{0}` needs a chat backend")]
    MissingBackend(Mode),
    #[error("mode `optimized` needs an optimized program")]
    MissingProgram,
    #[error("gold fields of `{0}` would be placed in its own prompt")]
    GoldLeakage(String),
    #[error("no candidate produced a single parseable judgment within the budget")]
    BudgetExhaustedWithoutValidCandidate,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error("manifest io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest encoding: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Errors that abort a whole run rather than failing one item.
    pub fn is_config(&self) -> bool {
        !matches!(self, PipelineError::Retrieval(_) | PipelineError::Vote(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ZeroShot,
    Rag,
    #[serde(alias = "votegrader")]
    Vote,
    Optimized,
    Majority,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ZeroShot => "zero_shot",
            Mode::Rag => "rag",
            Mode::Vote => "vote",
            Mode::Optimized => "optimized",
            Mode::Majority => "majority",
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Mode::ZeroShot | Mode::Rag | Mode::Optimized)
    }

    pub fn uses_index(self) -> bool {
        matches!(self, Mode::Rag | Mode::Vote)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zeroshot" | "zero" => Ok(Mode::ZeroShot),
            "rag" => Ok(Mode::Rag),
            "vote" | "votegrader" => Ok(Mode::Vote),
            "optimized" | "opt" => Ok(Mode::Optimized),
            "majority" => Ok(Mode::Majority),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub k: usize,
    #[serde(default)]
    pub style: PromptStyle,
    #[serde(default)]
    pub model: ModelConfig,
    /// Model that proposes instruction candidates for the optimizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_model: Option<ModelConfig>,
    #[serde(default)]
    pub exclude_same_question: bool,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(mode: Mode, k: usize) -> PipelineConfig {
        PipelineConfig {
            mode,
            k,
            style: PromptStyle::Predict,
            model: ModelConfig::default(),
            proposal_model: None,
            exclude_same_question: false,
            seed: 0,
        }
    }

    pub fn validate(&self, index_size: Option<usize>) -> Result<(), PipelineError> {
        match self.mode {
            Mode::ZeroShot | Mode::Majority if self.k != 0 => {
                return Err(PipelineError::Config(format!(
                    "mode {} uses no demos, so k must be 0 (got {})",
                    self.mode, self.k
                )))
            }
            Mode::Rag | Mode::Vote => {
                if self.k == 0 {
                    return Err(PipelineError::Config(format!(
                        "mode {} needs k >= 1",
                        self.mode
                    )));
                }
                if let Some(n) = index_size {
                    if self.k > n {
                        return Err(PipelineError::Config(format!(
                            "k = {} exceeds the index size {n}",
                            self.k
                        )));
                    }
                }
            }
            _ => {}
        }
        self.model
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// One graded item together with the ids of the demos or neighbors used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedItem {
    pub judgment: Judgment,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demo_ids: Vec<String>,
}

/// A grader bound to its resources. Build with [`Grader::new`] and the
/// `with_*` methods, then call [`Grader::grade_item`] or
/// [`Grader::run_split`].
pub struct Grader<'a> {
    cfg: PipelineConfig,
    template: PromptTemplate,
    backend: Option<&'a dyn ChatBackend>,
    index: Option<&'a MaxSimIndex>,
    embedder: Option<&'a dyn Embedder>,
    program: Option<&'a OptimizedProgram>,
    majority: Option<MajorityBaseline>,
    ledger: ErrorLedger,
}

impl<'a> Grader<'a> {
    pub fn new(cfg: PipelineConfig, signature: &Signature) -> Result<Grader<'a>, PipelineError> {
        let template = compile_signature(signature, cfg.style)?;
        Ok(Grader {
            cfg,
            template,
            backend: None,
            index: None,
            embedder: None,
            program: None,
            majority: None,
            ledger: ErrorLedger::new(),
        })
    }

    pub fn with_backend(mut self, backend: &'a dyn ChatBackend) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_index(mut self, index: &'a MaxSimIndex, embedder: &'a dyn Embedder) -> Self {
        self.index = Some(index);
        self.embedder = Some(embedder);
        self
    }

    pub fn with_program(mut self, program: &'a OptimizedProgram) -> Self {
        self.template = self.template.with_instruction(program.instruction.clone());
        self.program = Some(program);
        self
    }

    pub fn with_majority(mut self, baseline: MajorityBaseline) -> Self {
        self.majority = Some(baseline);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn ledger(&self) -> &ErrorLedger {
        &self.ledger
    }

    pub fn model_id(&self) -> String {
        match (self.cfg.mode.uses_llm(), self.backend) {
            (true, Some(b)) => b.model_id().to_string(),
            (true, None) => self.cfg.model.model.clone(),
            (false, _) => "none".to_string(),
        }
    }

    pub fn stratum(&self) -> Stratum {
        Stratum::new(self.model_id(), self.cfg.mode.as_str(), self.effective_k())
    }

    fn effective_k(&self) -> usize {
        match (self.cfg.mode, self.program) {
            (Mode::Optimized, Some(p)) => p.demos.len(),
            _ => self.cfg.k,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.cfg.validate(self.index.map(MaxSimIndex::len))?;
        let mode = self.cfg.mode;
        if mode.uses_llm() && self.backend.is_none() {
            return Err(PipelineError::MissingBackend(mode));
        }
        if mode.uses_index() && (self.index.is_none() || self.embedder.is_none()) {
            return Err(PipelineError::MissingIndex(mode));
        }
        if mode == Mode::Optimized && self.program.is_none() {
            return Err(PipelineError::MissingProgram);
        }
        if mode == Mode::Majority && self.majority.is_none() {
            return Err(PipelineError::Config(
                "majority mode needs a baseline fitted on the train split".into(),
            ));
        }
        Ok(())
    }

    pub fn grade_item(&self, record: &AnswerRecord) -> Result<Judgment, PipelineError> {
        self.grade_traced(record).map(|g| g.judgment)
    }

    fn predictor(&self) -> Result<Predictor<'_>, PipelineError> {
        let backend = self
            .backend
            .ok_or(PipelineError::MissingBackend(self.cfg.mode))?;
        Ok(Predictor::new(backend, &self.ledger))
    }

    fn retrieve(
        &self,
        record: &AnswerRecord,
    ) -> Result<Vec<crate::retrieval::RetrievedExample>, PipelineError> {
        let (index, embedder) = match (self.index, self.embedder) {
            (Some(i), Some(e)) => (i, e),
            _ => return Err(PipelineError::MissingIndex(self.cfg.mode)),
        };
        let mut exclude: HashSet<String> = if self.cfg.exclude_same_question {
            index.ids_for_question(&record.question_id)
        } else {
            HashSet::new()
        };
        exclude.insert(record.id.clone());
        Ok(index.top_k(embedder, &record.student_answer, self.cfg.k, Some(&exclude))?)
    }

    fn check_no_leakage(
        &self,
        record: &AnswerRecord,
        inputs: &BTreeMap<String, String>,
        demos: &[Demo],
    ) -> Result<(), PipelineError> {
        let leaks_field = self
            .template
            .outputs
            .iter()
            .any(|f| inputs.contains_key(&f.name));
        let leaks_demo = demos.iter().any(|d| d.source_record_id == record.id);
        if leaks_field || leaks_demo {
            return Err(PipelineError::GoldLeakage(record.id.clone()));
        }
        Ok(())
    }

    fn llm_judgment(
        &self,
        record: &AnswerRecord,
        demos: &[Demo],
    ) -> Result<Judgment, PipelineError> {
        let inputs = record_inputs(record, &self.template)?;
        self.check_no_leakage(record, &inputs, demos)?;
        Ok(self
            .predictor()?
            .predict(&self.template, &inputs, demos, &self.stratum())?)
    }

    fn grade_traced(&self, record: &AnswerRecord) -> Result<GradedItem, PipelineError> {
        match self.cfg.mode {
            Mode::ZeroShot => Ok(GradedItem {
                judgment: self.llm_judgment(record, &[])?,
                demo_ids: Vec::new(),
            }),
            Mode::Rag => {
                let neighbors = self.retrieve(record)?;
                let demos = neighbors
                    .iter()
                    .map(|n| Demo::from_record(&n.record, &self.template))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(GradedItem {
                    judgment: self.llm_judgment(record, &demos)?,
                    demo_ids: demos.iter().map(|d| d.source_record_id.clone()).collect(),
                })
            }
            Mode::Optimized => {
                let program = self.program.ok_or(PipelineError::MissingProgram)?;
                let demos: Vec<Demo> = program
                    .demos
                    .iter()
                    .filter(|d| d.source_record_id != record.id)
                    .cloned()
                    .collect();
                Ok(GradedItem {
                    judgment: self.llm_judgment(record, &demos)?,
                    demo_ids: demos.iter().map(|d| d.source_record_id.clone()).collect(),
                })
            }
            Mode::Vote => {
                let neighbors = self.retrieve(record)?;
                let vote = vote_classify(&neighbors)?;
                self.ledger.record(&self.stratum(), ParsePath::Typed);
                Ok(GradedItem {
                    judgment: constant_judgment(vote.label, vote.score),
                    demo_ids: vote.neighbor_ids,
                })
            }
            Mode::Majority => {
                let m = self.majority.ok_or_else(|| {
                    PipelineError::Config("majority baseline not fitted".into())
                })?;
                self.ledger.record(&self.stratum(), ParsePath::Typed);
                Ok(GradedItem {
                    judgment: constant_judgment(m.label, m.score),
                    demo_ids: Vec::new(),
                })
            }
        }
    }

    /// Grade every record. Output order equals input order regardless of the
    /// concurrency level; item-level failures become failed judgments.
    pub fn run_split(
        &self,
        records: &[AnswerRecord],
    ) -> Result<(Vec<GradedItem>, LedgerSnapshot), PipelineError> {
        self.validate()?;
        let workers = if self.cfg.mode.uses_llm() {
            self.cfg.model.concurrency
        } else {
            1
        }
        .clamp(1, records.len().max(1));

        let slots: Vec<Mutex<Option<GradedItem>>> =
            records.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort: Mutex<Option<PipelineError>> = Mutex::new(None);
        let stratum = self.stratum();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.lock().expect("abort lock").is_some() {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(record) = records.get(i) else { return };
                    let item = match self.grade_traced(record) {
                        Ok(item) => item,
                        Err(e) if e.is_config() => {
                            abort.lock().expect("abort lock").get_or_insert(e);
                            return;
                        }
                        Err(e) => {
                            log::warn!("item {} failed: {e}", record.id);
                            self.ledger.record(&stratum, ParsePath::Failed);
                            GradedItem {
                                judgment: Judgment::failed("", e.to_string()),
                                demo_ids: Vec::new(),
                            }
                        }
                    };
                    *slots[i].lock().expect("slot lock") = Some(item);
                });
            }
        });

        if let Some(e) = abort.into_inner().expect("abort lock") {
            return Err(e);
        }
        let items = slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot is filled"))
            .collect();
        Ok((items, self.ledger.snapshot()))
    }
}

fn constant_judgment(label: Label, score: f64) -> Judgment {
    Judgment {
        score: Some(score),
        label: Some(label),
        feedback: String::new(),
        parse_path: ParsePath::Typed,
        raw_text: String::new(),
        first_raw: None,
        error: None,
    }
}

/// One evaluated optimizer candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub instruction_index: usize,
    pub demo_ids: Vec<String>,
    /// Label accuracy on the dev set; failed items count as wrong. `None`
    /// when every dev item failed.
    pub dev_accuracy: Option<f64>,
    pub failed: usize,
}

/// Instruction and demo set chosen by [`optimize_few_shot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedProgram {
    pub instruction: String,
    pub demo_ids: Vec<String>,
    pub demos: Vec<Demo>,
    pub dev_accuracy: f64,
    pub instructions: Vec<String>,
    pub trace: Vec<CandidateTrace>,
    pub seed: u64,
    pub style: PromptStyle,
}

impl OptimizedProgram {
    pub fn load(path: impl AsRef<Path>) -> Result<OptimizedProgram, PipelineError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Search settings for [`optimize_few_shot`].
#[derive(Debug, Clone)]
pub struct OptimizerSettings {
    pub budget: usize,
    pub k_max: usize,
    pub seed: u64,
    pub style: PromptStyle,
    /// Dev items graded concurrently within one candidate.
    pub concurrency: usize,
}

/// Budgeted random search over (instruction, demo subset) candidates, scored
/// by dev-set label accuracy. Candidates are evaluated sequentially; the first
/// best candidate wins. Demos are drawn only from `train` records whose ids
/// are not in `dev`.
pub fn optimize_few_shot(
    train: &[AnswerRecord],
    dev: &[AnswerRecord],
    signature: &Signature,
    instructions: &[String],
    executor: &dyn ChatBackend,
    settings: &OptimizerSettings,
    ledger: &ErrorLedger,
) -> Result<OptimizedProgram, PipelineError> {
    if settings.budget == 0 {
        return Err(PipelineError::Config("budget must be at least 1".into()));
    }
    if dev.is_empty() {
        return Err(PipelineError::Config("dev set is empty".into()));
    }
    let base = compile_signature(signature, settings.style)?;
    let mut instructions: Vec<String> = if instructions.is_empty() {
        vec![base.instruction.clone()]
    } else {
        instructions.to_vec()
    };
    dedup_in_order(&mut instructions);

    let dev_ids: HashSet<&str> = dev.iter().map(|r| r.id.as_str()).collect();
    let pool: Vec<&AnswerRecord> = train
        .iter()
        .filter(|r| !dev_ids.contains(r.id.as_str()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut trace = Vec::with_capacity(settings.budget);
    let mut best: Option<(f64, usize, Vec<Demo>)> = None;

    for _ in 0..settings.budget {
        let instruction_index = rng.gen_range(0..instructions.len());
        let size = rng.gen_range(0..=settings.k_max.min(pool.len()));
        let picks = rand::seq::index::sample(&mut rng, pool.len(), size).into_vec();
        let template = base.with_instruction(instructions[instruction_index].clone());
        let demos = picks
            .iter()
            .map(|&i| Demo::from_record(pool[i], &template))
            .collect::<Result<Vec<_>, _>>()?;

        let stratum = Stratum::new(executor.model_id(), "optimize", demos.len());
        let judgments = evaluate_candidate(
            &template,
            &demos,
            dev,
            executor,
            ledger,
            &stratum,
            settings.concurrency,
        )?;
        let failed = judgments.iter().filter(|j| j.is_failed()).count();
        let correct = judgments
            .iter()
            .zip(dev)
            .filter(|(j, r)| j.label == Some(r.gold_label))
            .count();
        let accuracy = (failed < dev.len()).then(|| correct as f64 / dev.len() as f64);
        trace.push(CandidateTrace {
            instruction_index,
            demo_ids: demos.iter().map(|d| d.source_record_id.clone()).collect(),
            dev_accuracy: accuracy,
            failed,
        });
        if let Some(acc) = accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, instruction_index, demos));
            }
        }
    }

    let (dev_accuracy, instruction_index, demos) =
        best.ok_or(PipelineError::BudgetExhaustedWithoutValidCandidate)?;
    Ok(OptimizedProgram {
        instruction: instructions[instruction_index].clone(),
        demo_ids: demos.iter().map(|d| d.source_record_id.clone()).collect(),
        demos,
        dev_accuracy,
        instructions,
        trace,
        seed: settings.seed,
        style: settings.style,
    })
}

/// Split `train` into (pool, dev) with a seeded shuffle. `dev` gets
/// `round(fraction * n)` records, at least one and never all of them.
pub fn hold_out_dev(
    train: &[AnswerRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<AnswerRecord>, Vec<AnswerRecord>), PipelineError> {
    if train.len() < 2 {
        return Err(PipelineError::Config(
            "need at least two train records to hold out a dev set".into(),
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::Config(format!(
            "dev fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_dev = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut dev_pos = rand::seq::index::sample(&mut rng, train.len(), n_dev).into_vec();
    dev_pos.sort_unstable();
    let dev_set: HashSet<usize> = dev_pos.iter().copied().collect();
    let pool = (0..train.len())
        .filter(|i| !dev_set.contains(i))
        .map(|i| train[i].clone())
        .collect();
    let dev = dev_pos.iter().map(|&i| train[i].clone()).collect();
    Ok((pool, dev))
}

fn dedup_in_order(items: &mut Vec<String>) {
    let mut seen = HashSet::new();
    items.retain(|s| seen.insert(s.clone()));
}

fn evaluate_candidate(
    template: &PromptTemplate,
    demos: &[Demo],
    dev: &[AnswerRecord],
    executor: &dyn ChatBackend,
    ledger: &ErrorLedger,
    stratum: &Stratum,
    concurrency: usize,
) -> Result<Vec<Judgment>, PipelineError> {
    let predictor = Predictor::new(executor, ledger);
    let slots: Vec<Mutex<Option<Judgment>>> = dev.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let error: Mutex<Option<PromptError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..concurrency.clamp(1, dev.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = dev.get(i) else { return };
                // Dev items are never demos: demos come from the filtered pool.
                let result = record_inputs(record, template)
                    .and_then(|inputs| predictor.predict(template, &inputs, demos, stratum));
                match result {
                    Ok(j) => *slots[i].lock().expect("slot lock") = Some(j),
                    Err(e) => {
                        error.lock().expect("error lock").get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = error.into_inner().expect("error lock") {
        return Err(e.into());
    }
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("slot filled"))
        .collect())
}

/// Ask the proposal model for `n` rewrites of `base`. The base instruction is
/// always the first candidate; empty and duplicate proposals are dropped.
pub fn propose_instructions(
    proposer: &dyn ChatBackend,
    base: &str,
    n: usize,
) -> Vec<String> {
    let mut out = vec![base.to_string()];
    for i in 1..=n {
        let prompt = CompiledPrompt {
            system_text: "You write task instructions for a language model that grades student \
                          answers. Reply with the instruction text only."
                .into(),
            user_text: format!(
                "Write variant {i} of the following grading instruction. Keep its meaning, \
                 change the wording, and make the grading expectations explicit.\n\n\
                 Instruction: {base}"
            ),
            output_schema: Vec::new(),
            demo_count: 0,
            relaxed: true,
        };
        match proposer.complete(&prompt) {
            Ok(c) => {
                let text = c
                    .text
                    .trim()
                    .trim_start_matches("Instruction:")
                    .trim()
                    .trim_matches('"')
                    .trim()
                    .to_string();
                if !text.is_empty() {
                    out.push(text);
                }
            }
            Err(e) => log::warn!("instruction proposal {i} failed: {e}"),
        }
    }
    dedup_in_order(&mut out);
    out
}

/// One graded item as stored in a run manifest, with its gold fields so the
/// manifest can be evaluated on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub record_id: String,
    pub question_id: String,
    pub gold_score: f64,
    pub gold_label: Label,
    pub gold_feedback: String,
    pub judgment: Judgment,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demo_ids: Vec<String>,
}

/// Serialized record of one pipeline execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub created_at: String,
    /// The fully resolved run configuration, verbatim.
    pub run_config: Value,
    pub mode: Mode,
    pub k: usize,
    pub style: PromptStyle,
    pub model_id: String,
    pub seed: u64,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_fingerprint: Option<String>,
    pub output_schema: Vec<SchemaField>,
    pub items: Vec<ManifestItem>,
    pub ledger: LedgerSnapshot,
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        grader: &Grader<'_>,
        split: Split,
        records: &[AnswerRecord],
        graded: Vec<GradedItem>,
        ledger: LedgerSnapshot,
        run_config: Value,
        created_at: impl Into<String>,
    ) -> RunManifest {
        let items = records
            .iter()
            .zip(graded)
            .map(|(r, g)| ManifestItem {
                record_id: r.id.clone(),
                question_id: r.question_id.clone(),
                gold_score: r.gold_score,
                gold_label: r.gold_label,
                gold_feedback: r.gold_feedback.clone(),
                judgment: g.judgment,
                demo_ids: g.demo_ids,
            })
            .collect();
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            created_at: created_at.into(),
            run_config,
            mode: grader.cfg.mode,
            k: grader.effective_k(),
            style: grader.cfg.style,
            model_id: grader.model_id(),
            seed: grader.cfg.seed,
            split,
            index_fingerprint: if grader.cfg.mode.uses_index() {
                grader.index.map(|i| i.fingerprint().to_string())
            } else {
                None
            },
            output_schema: grader.template.schema(),
            items,
            ledger,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunManifest, PipelineError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
