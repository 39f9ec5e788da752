//! Measurements against ground truth: text-role confusion, cluster
//! confusion with optimal matching, association accuracy and description
//! similarity.

mod hungarian;
mod report;
mod similarity;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Label;
use crate::llm::LlmError;
use crate::textrole::TextRole;

pub use hungarian::{assignment_weight, max_weight_assignment};
pub use report::{render_text, EvalReport, ReportMetadata};
pub use similarity::{cosine_similarity, description_similarities, SimilarityReport, SimilarityScore, TextEmbedder};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and ground truth cover different units: {0}")]
    KeyMismatch(String),
    #[error("no ground truth for {0}")]
    MissingGroundTruth(String),
    #[error("cannot compute cosine similarity of a zero vector")]
    ZeroVector,
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("embedding failed: {0}")]
    Embedding(LlmError),
    #[error("empty text for {0}")]
    EmptyText(String),
}

/// Counts with reference classes as rows and predictions as columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Text-role confusion in the order Sound, Dialogue, Caption. Undefined
/// (0/0) precision or recall is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfusion {
    pub matrix: ConfusionMatrix,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
}

impl TextConfusion {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        let names: Vec<String> = TextRole::ALL.iter().map(|r| r.label().to_string()).collect();
        let matrix = ConfusionMatrix {
            rows: names.clone(),
            columns: names,
            counts: counts.iter().map(|r| r.to_vec()).collect(),
        };
        let precision: Vec<Option<f64>> = (0..3).map(|c| ratio(matrix.counts[c][c], matrix.column_sum(c))).collect();
        let recall: Vec<Option<f64>> = (0..3).map(|c| ratio(matrix.counts[c][c], matrix.row_sum(c))).collect();
        TextConfusion {
            macro_precision: mean(precision.iter().copied()),
            macro_recall: mean(recall.iter().copied()),
            matrix,
            precision,
            recall,
        }
    }

    pub fn precision_of(&self, role: TextRole) -> Option<f64> {
        self.precision[role_index(role)]
    }

    pub fn recall_of(&self, role: TextRole) -> Option<f64> {
        self.recall[role_index(role)]
    }
}

fn role_index(role: TextRole) -> usize {
    TextRole::ALL.iter().position(|r| *r == role).expect("role listed")
}

fn check_same_keys<A, B>(pred: &BTreeMap<String, A>, gt: &BTreeMap<String, B>) -> Result<(), EvalError> {
    if let Some(k) = pred.keys().find(|k| !gt.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(format!("{k} has a prediction but no reference")));
    }
    if let Some(k) = gt.keys().find(|k| !pred.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(format!("{k} has a reference but no prediction")));
    }
    Ok(())
}

pub fn text_type_confusion(
    pred: &BTreeMap<String, TextRole>,
    gt: &BTreeMap<String, TextRole>,
) -> Result<TextConfusion, EvalError> {
    check_same_keys(pred, gt)?;
    let mut counts = [[0u64; 3]; 3];
    for (k, r) in gt {
        counts[role_index(*r)][role_index(pred[k])] += 1;
    }
    Ok(TextConfusion::from_counts(counts))
}

/// Cluster confusion against reference identities.
///
/// `matrix` rows are identities (sorted); the first columns are the
/// clusters matched to each identity, in row order, so matched counts sit
/// on the diagonal. An identity left without a cluster gets an empty `-`
/// column; clusters left without an identity follow. `noise` counts each
/// identity's instances that fell into the noise group (the "Misc" row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfusion {
    pub matrix: ConfusionMatrix,
    pub noise: Vec<u64>,
    /// Matched (identity row, column) pairs.
    pub matched: Vec<(usize, usize)>,
    /// Matched-diagonal total over all evaluated instances, noise included.
    pub accuracy: Option<f64>,
}

impl ClusterConfusion {
    /// Build from counts already aligned to the diagonal, as printed in a
    /// published confusion table.
    pub fn from_aligned(rows: Vec<String>, columns: Vec<String>, counts: Vec<Vec<u64>>, noise: Vec<u64>) -> Self {
        let matched: Vec<(usize, usize)> = (0..rows.len().min(columns.len())).map(|i| (i, i)).collect();
        let matrix = ConfusionMatrix { rows, columns, counts };
        let diag: u64 = matched.iter().map(|&(i, j)| matrix.counts[i][j]).sum();
        let total = matrix.total() + noise.iter().sum::<u64>();
        ClusterConfusion { accuracy: ratio(diag, total), matrix, noise, matched }
    }

    pub fn diagonal_sum(&self) -> u64 {
        self.matched.iter().map(|&(i, j)| self.matrix.counts[i][j]).sum()
    }
}

pub fn cluster_confusion(
    labels: &BTreeMap<String, Label>,
    reference: &BTreeMap<String, String>,
) -> Result<ClusterConfusion, EvalError> {
    if let Some(k) = labels.keys().find(|k| !reference.contains_key(*k)) {
        return Err(EvalError::MissingGroundTruth(k.clone()));
    }
    let identities: Vec<&String> = labels.keys().map(|k| &reference[k]).collect::<BTreeSet<_>>().into_iter().collect();
    let row_of: BTreeMap<&String, usize> = identities.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let clusters: BTreeSet<u32> = labels
        .values()
        .filter_map(|l| match l {
            Label::Cluster(k) => Some(*k),
            Label::Noise => None,
        })
        .collect();
    let mut columns: BTreeMap<u32, Vec<u64>> = clusters.iter().map(|k| (*k, vec![0; identities.len()])).collect();
    let mut noise = vec![0u64; identities.len()];
    for (inst, label) in labels {
        let r = row_of[&reference[inst]];
        match label {
            Label::Cluster(k) => columns.get_mut(k).expect("cluster listed")[r] += 1,
            Label::Noise => noise[r] += 1,
        }
    }
    // Order columns by content so the result does not depend on how the
    // clusters happen to be numbered.
    let mut cols: Vec<(u32, Vec<u64>)> = columns.into_iter().collect();
    cols.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let weights: Vec<Vec<i64>> = (0..identities.len())
        .map(|i| cols.iter().map(|(_, c)| c[i] as i64).collect())
        .collect();
    let assignment = max_weight_assignment(&weights);

    let mut order: Vec<Option<usize>> = Vec::new();
    for a in &assignment {
        order.push(*a);
    }
    let used: BTreeSet<usize> = assignment.iter().flatten().copied().collect();
    order.extend((0..cols.len()).filter(|j| !used.contains(j)).map(Some));

    let rows: Vec<String> = identities.iter().map(|s| s.to_string()).collect();
    let mut col_names = Vec::new();
    let mut counts = vec![Vec::new(); rows.len()];
    let mut matched = Vec::new();
    for (pos, slot) in order.iter().enumerate() {
        match slot {
            Some(j) => {
                col_names.push(format!("c{}", cols[*j].0));
                for (i, row) in counts.iter_mut().enumerate() {
                    row.push(cols[*j].1[i]);
                }
                if pos < rows.len() {
                    matched.push((pos, col_names.len() - 1));
                }
            }
            None => {
                col_names.push("-".into());
                counts.iter_mut().for_each(|row| row.push(0));
            }
        }
    }
    let matrix = ConfusionMatrix { rows, columns: col_names, counts };
    let diag: u64 = matched.iter().map(|&(i, j)| matrix.counts[i][j]).sum();
    let total = matrix.total() + noise.iter().sum::<u64>();
    Ok(ClusterConfusion { accuracy: ratio(diag, total), matrix, noise, matched })
}

/// Fraction of balloons attributed to the same character in both maps.
pub fn association_accuracy(
    pred: &BTreeMap<String, String>,
    gt: &BTreeMap<String, String>,
) -> Result<f64, EvalError> {
    check_same_keys(pred, gt)?;
    if gt.is_empty() {
        return Err(EvalError::KeyMismatch("no balloons to compare".into()));
    }
    let same = gt.iter().filter(|(k, v)| pred[*k] == **v).count();
    Ok(same as f64 / gt.len() as f64)
}
