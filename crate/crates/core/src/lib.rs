//! Automatic short-answer scoring with feedback: corpus handling, token-level
//! embeddings, MaxSim retrieval, similarity voting, prompt compilation, LLM
//! client with structured-output fallback, grading pipelines and metrics.

pub mod dataset;
pub mod embedding;
pub mod llmclient;
pub mod metrics;
pub mod pipelines;
pub mod promptkit;
pub mod retrieval;
pub mod votegrader;

pub use dataset::{AnswerRecord, Corpus, CorpusFormat, DatasetError, Label, Split};
pub use embedding::{
    embedder_from_config, tokenize, BackendKind, DeterministicEmbedder, Embedder, EmbedderConfig,
    EmbeddingError, RemoteEmbedder, Role, TokenEmbeddingMatrix,
};
pub use llmclient::{
    ChatBackend, Completion, ErrorLedger, FnBackend, HttpChatClient, Judgment, LedgerCounts,
    LedgerSnapshot, LlmError, ModelConfig, ParsePath, Predictor, Stratum,
};
pub use metrics::{
    bleu, build_report, embed_sim_f1, evaluate_manifest, rouge2, scoring_metrics, Evaluation,
    Gold, MetricsError, Report, ReportRow, ScoreReport, TextReport,
};
pub use pipelines::{
    hold_out_dev, optimize_few_shot, propose_instructions, GradedItem, Grader, ManifestItem, Mode,
    OptimizedProgram, OptimizerSettings, PipelineConfig, PipelineError, RunManifest,
};
pub use promptkit::{
    compile_signature, render_prompt, CompiledPrompt, Demo, PromptError, PromptStyle,
    PromptTemplate, Signature,
};
pub use retrieval::{maxsim_score, MaxSimIndex, RetrievalError, RetrievedExample};
pub use votegrader::{vote_classify, MajorityBaseline, VoteError, VoteResult};
