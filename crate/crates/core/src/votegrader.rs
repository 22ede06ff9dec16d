//! Similarity-based majority vote over retrieved neighbors, and the constant
//! majority-class baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnswerRecord, Label};
use crate::retrieval::RetrievedExample;

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("cannot vote over an empty neighbor set")]
    EmptyNeighborSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub label: Label,
    pub score: f64,
    pub support: BTreeMap<Label, usize>,
    pub neighbor_ids: Vec<String>,
}

/// Modal gold label and mean gold score of `neighbors`.
///
/// Neighbors are taken in the order given, which callers keep as rank order.
/// When several labels share the top count, the one carried by the
/// earliest-ranked neighbor wins.
pub fn vote_classify(neighbors: &[RetrievedExample]) -> Result<VoteResult, VoteError> {
    if neighbors.is_empty() {
        return Err(VoteError::EmptyNeighborSet);
    }
    let mut support = BTreeMap::new();
    for n in neighbors {
        *support.entry(n.record.gold_label).or_insert(0usize) += 1;
    }
    let top = support.values().copied().max().unwrap_or(0);
    let label = neighbors
        .iter()
        .map(|n| n.record.gold_label)
        .find(|l| support[l] == top)
        .expect("some label reaches the maximum count");
    let score =
        neighbors.iter().map(|n| n.record.gold_score).sum::<f64>() / neighbors.len() as f64;
    Ok(VoteResult {
        label,
        score,
        support,
        neighbor_ids: neighbors.iter().map(|n| n.record.id.clone()).collect(),
    })
}

/// Constant predictor fitted on a training split: the modal label, and the
/// mean score of the records carrying that label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub label: Label,
    pub score: f64,
}

impl MajorityBaseline {
    /// `None` for an empty training set. Count ties go to the label that
    /// appears first in `train`.
    pub fn fit(train: &[AnswerRecord]) -> Option<MajorityBaseline> {
        let mut counts: BTreeMap<Label, (usize, f64)> = BTreeMap::new();
        for r in train {
            let slot = counts.entry(r.gold_label).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += r.gold_score;
        }
        let top = counts.values().map(|c| c.0).max()?;
        let label = train
            .iter()
            .map(|r| r.gold_label)
            .find(|l| counts[l].0 == top)?;
        let (n, sum) = counts[&label];
        Some(MajorityBaseline {
            label,
            score: sum / n as f64,
        })
    }
}
