//! Scoring metrics (accuracy, macro-F1, RMSE), feedback text metrics (BLEU,
//! ROUGE-2, embedding-similarity F1) and report tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, Split};
use crate::embedding::{tokenize, Embedder, EmbeddingError, Role, TokenEmbeddingMatrix};
use crate::llmclient::Judgment;
use crate::pipelines::RunManifest;
use crate::promptkit::SchemaField;

pub const BLEU_MAX_ORDER: usize = 4;

/// How BLEU is computed here, in the usual signature style.
pub const BLEU_SIGNATURE: &str = "nrefs:1|case:lc|eff:yes|tok:asasf-word|smooth:exp|version:1";

/// How macro-F1 picks its label set.
pub const MACRO_F1_CONVENTION: &str = "macro-F1 averages over labels present in gold or predictions";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("nothing left to evaluate")]
    EmptyEvaluationSet,
    #[error("every reference is empty")]
    AllEmptyReferences,
    #[error("manifests disagree on {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub rmse: f64,
    pub n_evaluated: usize,
    /// Failed judgments, left out of every metric above.
    pub n_excluded: usize,
}

/// Gold label and score of one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gold {
    pub label: Label,
    pub score: f64,
}

/// Compare judgments with gold values, position by position. Judgments
/// without both a label and a score count as excluded.
pub fn scoring_metrics(judgments: &[Judgment], golds: &[Gold]) -> Result<ScoreReport, MetricsError> {
    if judgments.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            left: judgments.len(),
            right: golds.len(),
        });
    }
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (j, g) in judgments.iter().zip(golds) {
        if let (false, Some(label), Some(score)) = (j.is_failed(), j.label, j.score) {
            labels.push((label, g.label));
            scores.push((score, g.score));
        }
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyEvaluationSet);
    }
    let n = labels.len();
    let correct = labels.iter().filter(|(p, g)| p == g).count();
    let mse = scores.iter().map(|(p, g)| (p - g).powi(2)).sum::<f64>() / n as f64;
    Ok(ScoreReport {
        accuracy: correct as f64 / n as f64,
        macro_f1: macro_f1(&labels),
        rmse: mse.sqrt(),
        n_evaluated: n,
        n_excluded: judgments.len() - n,
    })
}

/// `pairs` are (predicted, gold).
pub fn macro_f1<T: Ord + Copy>(pairs: &[(T, T)]) -> f64 {
    let present: BTreeSet<T> = pairs.iter().flat_map(|&(p, g)| [p, g]).collect();
    if present.is_empty() {
        return 0.0;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total: f64 = present
        .iter()
        .map(|&l| {
            let tp = pairs.iter().filter(|&&(p, g)| p == l && g == l).count();
            let predicted = pairs.iter().filter(|&&(p, _)| p == l).count();
            let actual = pairs.iter().filter(|&&(_, g)| g == l).count();
            let (prec, rec) = (ratio(tp, predicted), ratio(tp, actual));
            if prec + rec == 0.0 {
                0.0
            } else {
                2.0 * prec * rec / (prec + rec)
            }
        })
        .sum();
    total / present.len() as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of corpus BLEU, summable across partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_MAX_ORDER],
    pub totals: [usize; BLEU_MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn of_pair(candidate: &str, reference: &str) -> BleuStats {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        let mut s = BleuStats {
            candidate_len: c.len(),
            reference_len: r.len(),
            ..BleuStats::default()
        };
        for n in 1..=BLEU_MAX_ORDER {
            let rc = ngram_counts(&r, n);
            let cc = ngram_counts(&c, n);
            s.matches[n - 1] = cc
                .iter()
                .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
            s.totals[n - 1] = c.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn merge(mut self, other: &BleuStats) -> BleuStats {
        for n in 0..BLEU_MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
        self
    }

    /// BLEU in [0, 100]. Orders with no candidate n-grams are left out of the
    /// geometric mean; zero-match orders get exponential smoothing.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut smooth = 1.0;
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..BLEU_MAX_ORDER {
            let total = self.totals[n];
            if total == 0 {
                continue;
            }
            let p = if self.matches[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * total as f64)
            } else {
                self.matches[n] as f64 / total as f64
            };
            log_sum += p.ln();
            orders += 1;
        }
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

/// Corpus-level BLEU-4 over aligned candidate/reference pairs.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    let stats = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| BleuStats::of_pair(c.as_ref(), r.as_ref()))
        .fold(BleuStats::default(), |acc, s| acc.merge(&s));
    if stats.reference_len == 0 {
        return Err(MetricsError::AllEmptyReferences);
    }
    Ok(stats.score())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge2 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn rouge2(candidate: &str, reference: &str) -> Rouge2 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let cc = ngram_counts(&c, 2);
    let rc = ngram_counts(&r, 2);
    let (nc, nr) = (c.len().saturating_sub(1), r.len().saturating_sub(1));
    if nc == 0 || nr == 0 {
        return Rouge2 {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let overlap: usize = cc
        .iter()
        .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    let precision = overlap as f64 / nc as f64;
    let recall = overlap as f64 / nr as f64;
    let f1 = if overlap == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Rouge2 {
        precision,
        recall,
        f1,
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Greedy matching F1 between two token matrices with unit rows.
pub fn greedy_match_f1(candidate: &TokenEmbeddingMatrix, reference: &TokenEmbeddingMatrix) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let best = |from: &TokenEmbeddingMatrix, to: &TokenEmbeddingMatrix| {
        from.iter_rows()
            .map(|a| to.iter_rows().map(|b| dot(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.rows() as f64
    };
    let p = best(candidate, reference);
    let r = best(reference, candidate);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Token-level embedding similarity F1 between two texts. Empty text on
/// either side gives 0.0.
pub fn embed_sim_f1(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<f64, MetricsError> {
    if tokenize(candidate).is_empty() || tokenize(reference).is_empty() {
        return Ok(0.0);
    }
    let m = embedder.embed_batch(&[candidate, reference], Role::Document)?;
    Ok(greedy_match_f1(&m[0], &m[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextReport {
    pub bleu: f64,
    pub bleu_signature: String,
    pub rouge2_precision: f64,
    pub rouge2_recall: f64,
    pub rouge2_f1: f64,
    /// `None` without an embedder.
    pub embed_sim_f1: Option<f64>,
    pub n: usize,
}

/// Feedback metrics over aligned (predicted, gold) feedback pairs. ROUGE-2
/// and embedding similarity are averaged per item; BLEU is corpus-level.
pub fn text_metrics<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    embedder: Option<&dyn Embedder>,
) -> Result<TextReport, MetricsError> {
    let b = bleu(candidates, references)?;
    let n = candidates.len();
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for (c, g) in candidates.iter().zip(references) {
        let x = rouge2(c.as_ref(), g.as_ref());
        p += x.precision;
        r += x.recall;
        f += x.f1;
    }
    let embed = match embedder {
        None => None,
        Some(e) => {
            let mut sum = 0.0;
            for (c, g) in candidates.iter().zip(references) {
                sum += embed_sim_f1(c.as_ref(), g.as_ref(), e)?;
            }
            Some(sum / n as f64)
        }
    };
    Ok(TextReport {
        bleu: b,
        bleu_signature: BLEU_SIGNATURE.to_string(),
        rouge2_precision: p / n as f64,
        rouge2_recall: r / n as f64,
        rouge2_f1: f / n as f64,
        embed_sim_f1: embed,
        n,
    })
}

/// Metrics of one run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model: String,
    pub mode: String,
    pub k: usize,
    pub split: Split,
    pub scores: ScoreReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<TextReport>,
    pub typed_failure_rate: f64,
    pub hard_failure_rate: f64,
    pub notes: Vec<String>,
}

/// Score a manifest. Text metrics are computed on non-failed items only when
/// `with_text` is set; `embedder` additionally enables EmbedSim.
pub fn evaluate_manifest(
    manifest: &RunManifest,
    with_text: bool,
    embedder: Option<&dyn Embedder>,
) -> Result<Evaluation, MetricsError> {
    let judgments: Vec<Judgment> = manifest.items.iter().map(|i| i.judgment.clone()).collect();
    let golds: Vec<Gold> = manifest
        .items
        .iter()
        .map(|i| Gold {
            label: i.gold_label,
            score: i.gold_score,
        })
        .collect();
    let scores = scoring_metrics(&judgments, &golds)?;
    let text = if with_text {
        let (cands, refs): (Vec<&str>, Vec<&str>) = manifest
            .items
            .iter()
            .filter(|i| !i.judgment.is_failed())
            .map(|i| (i.judgment.feedback.as_str(), i.gold_feedback.as_str()))
            .unzip();
        Some(text_metrics(&cands, &refs, embedder)?)
    } else {
        None
    };
    let totals = manifest.ledger.totals();
    let mut notes = vec![MACRO_F1_CONVENTION.to_string()];
    if text.is_some() {
        notes.push(format!("BLEU {BLEU_SIGNATURE}"));
    }
    Ok(Evaluation {
        model: manifest.model_id.clone(),
        mode: manifest.mode.to_string(),
        k: manifest.k,
        split: manifest.split,
        scores,
        text,
        typed_failure_rate: totals.typed_failure_rate(),
        hard_failure_rate: totals.hard_failure_rate(),
        notes,
    })
}

/// Manifests reported together must share the output schema.
pub fn check_schema(schemas: &[&[SchemaField]]) -> Result<(), MetricsError> {
    if let Some(first) = schemas.first() {
        if let Some(other) = schemas.iter().find(|s| *s != first) {
            let names = |s: &[SchemaField]| {
                s.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(",")
            };
            return Err(MetricsError::SchemaMismatch(format!(
                "output schema ({} vs {})",
                names(first),
                names(other)
            )));
        }
    }
    Ok(())
}

/// One report row, also the CSV record layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub mode: String,
    pub k: usize,
    pub split: Split,
    pub acc: f64,
    pub f1: f64,
    pub rmse: f64,
    pub bleu: Option<f64>,
    pub rouge2: Option<f64>,
    pub embedsim: Option<f64>,
    pub n: usize,
    pub excluded: usize,
}

impl From<&Evaluation> for ReportRow {
    fn from(e: &Evaluation) -> ReportRow {
        ReportRow {
            model: e.model.clone(),
            mode: e.mode.clone(),
            k: e.k,
            split: e.split,
            acc: e.scores.accuracy,
            f1: e.scores.macro_f1,
            rmse: e.scores.rmse,
            bleu: e.text.as_ref().map(|t| t.bleu),
            rouge2: e.text.as_ref().map(|t| t.rouge2_f1),
            embedsim: e.text.as_ref().and_then(|t| t.embed_sim_f1),
            n: e.scores.n_evaluated,
            excluded: e.scores.n_excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub text: String,
    pub csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    None,
    Best,
    Second,
}

/// Best and second-best marks for one column. Ties share a mark.
pub fn mark_column(values: &[Option<f64>], higher_is_better: bool) -> Vec<Mark> {
    let mut distinct: Vec<f64> = values.iter().flatten().copied().collect();
    distinct.sort_by(|a, b| {
        let o = a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    });
    distinct.dedup();
    values
        .iter()
        .map(|v| match v {
            Some(x) if distinct.first() == Some(x) => Mark::Best,
            Some(x) if distinct.get(1) == Some(x) => Mark::Second,
            _ => Mark::None,
        })
        .collect()
}

fn render_cell(v: Option<f64>, mark: Mark, decimals: usize) -> String {
    match v {
        None => "-".to_string(),
        Some(x) => {
            let s = format!("{x:.decimals$}");
            match mark {
                Mark::Best => format!("**{s}**"),
                Mark::Second => format!("_{s}_"),
                Mark::None => s,
            }
        }
    }
}

/// Aligned text table (one block per split, best in `**bold**`, second best
/// in `_underscores_`) and CSV for a set of evaluations.
pub fn build_report(evaluations: &[Evaluation]) -> Result<Report, MetricsError> {
    if evaluations.is_empty() {
        return Err(MetricsError::EmptyEvaluationSet);
    }
    let rows: Vec<ReportRow> = evaluations.iter().map(ReportRow::from).collect();
    let mut by_split: BTreeMap<Split, Vec<&ReportRow>> = BTreeMap::new();
    for r in &rows {
        by_split.entry(r.split).or_default().push(r);
    }

    let headers = [
        "Model", "Mode", "k", "Acc", "F1", "RMSE", "BLEU", "ROUGE-2", "EmbedSim", "n", "Excl",
    ];
    let mut text = String::new();
    for (split, group) in &by_split {
        let col = |f: fn(&ReportRow) -> Option<f64>| group.iter().map(|r| f(r)).collect::<Vec<_>>();
        let columns: Vec<(Vec<Option<f64>>, bool, usize)> = vec![
            (col(|r| Some(r.acc)), true, 3),
            (col(|r| Some(r.f1)), true, 3),
            (col(|r| Some(r.rmse)), false, 3),
            (col(|r| r.bleu), true, 2),
            (col(|r| r.rouge2), true, 3),
            (col(|r| r.embedsim), true, 3),
        ];
        let marks: Vec<Vec<Mark>> = columns
            .iter()
            .map(|(v, hib, _)| mark_column(v, *hib))
            .collect();
        let mut table: Vec<Vec<String>> = vec![headers.iter().map(|h| h.to_string()).collect()];
        for (i, r) in group.iter().enumerate() {
            let mut line = vec![r.model.clone(), r.mode.clone(), r.k.to_string()];
            for (c, (values, _, dec)) in columns.iter().enumerate() {
                line.push(render_cell(values[i], marks[c][i], *dec));
            }
            line.push(r.n.to_string());
            line.push(r.excluded.to_string());
            table.push(line);
        }
        let widths: Vec<usize> = (0..headers.len())
            .map(|c| table.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let _ = writeln!(text, "split: {}", split.as_str());
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| {
                    if c < 2 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(text, "{}", cells.join("  ").trim_end());
        }
        text.push('\n');
    }
    let _ = writeln!(text, "F1: {MACRO_F1_CONVENTION}.");
    let _ = writeln!(text, "BLEU: {BLEU_SIGNATURE}");

    Ok(Report {
        csv: rows_to_csv(&rows)?,
        rows,
        text,
    })
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MetricsError::Csv(csv::Error::from(e.into_error())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, MetricsError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::ParsePath;

    fn judged(label: Label, score: f64) -> Judgment {
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

    #[test]
    fn macro_f1_hand_example() {
        use Label::*;
        let preds = [judged(Correct, 1.0), judged(Correct, 1.0), judged(Incorrect, 0.0)];
        let golds = [
            Gold { label: Correct, score: 1.0 },
            Gold { label: Incorrect, score: 0.0 },
            Gold { label: Incorrect, score: 0.0 },
        ];
        let r = scoring_metrics(&preds, &golds).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_swap() {
        let preds = [judged(Label::Incorrect, 0.0), judged(Label::Correct, 1.0)];
        let golds = [
            Gold { label: Label::Incorrect, score: 1.0 },
            Gold { label: Label::Correct, score: 0.0 },
        ];
        assert_eq!(scoring_metrics(&preds, &golds).unwrap().rmse, 1.0);
    }

    #[test]
    fn failed_are_excluded() {
        let preds = [judged(Label::Correct, 1.0), Judgment::failed("x", "bad")];
        let golds = [Gold { label: Label::Correct, score: 1.0 }; 2];
        let r = scoring_metrics(&preds, &golds).unwrap();
        assert_eq!((r.n_evaluated, r.n_excluded), (1, 1));
        assert!(matches!(
            scoring_metrics(&preds[1..], &golds[1..]),
            Err(MetricsError::EmptyEvaluationSet)
        ));
        assert!(matches!(
            scoring_metrics(&preds, &golds[..1]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rouge2_examples() {
        let r = rouge2("a b c d", "a b c e");
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge2("a", "a b").f1, 0.0);
        assert_eq!(rouge2("a b c d", "a b c d").f1, 1.0);
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        assert!((bleu(&["the cat sat on the mat"], &["the cat sat on the mat"]).unwrap() - 100.0).abs() < 1e-9);
        let cand: Vec<String> = (0..24).map(|i| format!("x{i}")).collect();
        let refs: Vec<String> = (0..24).map(|i| format!("y{i}")).collect();
        let b = bleu(&[cand.join(" ")], &[refs.join(" ")]).unwrap();
        assert!(b > 0.0 && b < 1.0, "{b}");
        assert!(matches!(bleu(&["a"], &[""]), Err(MetricsError::AllEmptyReferences)));
    }

    #[test]
    fn marks() {
        let m = mark_column(&[Some(0.5), Some(0.7), Some(0.6), None], true);
        assert_eq!(m, [Mark::None, Mark::Best, Mark::Second, Mark::None]);
        let m = mark_column(&[Some(0.5), Some(0.7)], false);
        assert_eq!(m, [Mark::Best, Mark::Second]);
    }
}
