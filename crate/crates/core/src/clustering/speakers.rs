use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::annotations::BookAnnotation;
use crate::script::SpeakerId;

/// Final cluster labels and the speaker id of each label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Character instance id → label, for every clustered instance.
    pub labels: BTreeMap<String, Label>,
    /// Label → speaker id.
    pub speaker_ids: BTreeMap<Label, SpeakerId>,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.speaker_ids.keys().filter(|l| **l != Label::Noise).count()
    }

    /// Speaker of every character in the book. Excluded and unlabelled
    /// characters speak as [`SpeakerId::Unknown`].
    pub fn speakers(&self, book: &BookAnnotation) -> BTreeMap<String, SpeakerId> {
        book.characters()
            .map(|(_, c)| {
                let speaker = self
                    .labels
                    .get(&c.id)
                    .and_then(|l| self.speaker_ids.get(l))
                    .cloned()
                    .unwrap_or(SpeakerId::Unknown);
                (c.id.clone(), speaker)
            })
            .collect()
    }
}

/// Renumber clusters by first appearance in reading order (page, panel,
/// body box left to right) so the earliest cluster becomes `c0`.
pub fn assign_speaker_ids(labels: &BTreeMap<String, Label>, book: &BookAnnotation) -> ClusterAssignment {
    let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
    for c in book.characters_in_reading_order() {
        if let Some(Label::Cluster(k)) = labels.get(&c.id) {
            let next = remap.len() as u32;
            remap.entry(*k).or_insert(next);
        }
    }
    // Labels for instances absent from the book keep a stable order after
    // the ones that appear.
    for l in labels.values() {
        if let Label::Cluster(k) = l {
            let next = remap.len() as u32;
            remap.entry(*k).or_insert(next);
        }
    }
    let labels: BTreeMap<String, Label> = labels
        .iter()
        .map(|(id, l)| {
            let l = match l {
                Label::Cluster(k) => Label::Cluster(remap[k]),
                Label::Noise => Label::Noise,
            };
            (id.clone(), l)
        })
        .collect();
    let mut speaker_ids: BTreeMap<Label, SpeakerId> =
        remap.values().map(|&k| (Label::Cluster(k), SpeakerId::Cluster(k))).collect();
    if labels.values().any(|l| *l == Label::Noise) {
        speaker_ids.insert(Label::Noise, SpeakerId::Unknown);
    }
    ClusterAssignment { labels, speaker_ids }
}
