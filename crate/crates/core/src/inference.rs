//! Decision rule and multi-crop voting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{DecisionProfile, DecisionTemplateSet};
use crate::similarity::{score, MeasureKind};

/// Fused prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Lowest index attaining the maximum score.
    pub class_index: usize,
    /// Similarity of the sample to each class template.
    pub scores: Vec<f64>,
    pub measure: MeasureKind,
}

/// All crops of one sample, ordered by crop id.
#[derive(Debug, Clone, PartialEq)]
pub struct CropGroup {
    sample_id: String,
    crop_ids: Vec<u32>,
    profiles: Vec<DecisionProfile>,
}

impl CropGroup {
    /// Group with crop ids `0..profiles.len()`.
    pub fn new(sample_id: impl Into<String>, profiles: Vec<DecisionProfile>) -> Result<Self> {
        let ids = (0..profiles.len() as u32).collect();
        Self::with_crop_ids(sample_id, ids, profiles)
    }

    pub fn with_crop_ids(
        sample_id: impl Into<String>,
        crop_ids: Vec<u32>,
        profiles: Vec<DecisionProfile>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if profiles.is_empty() {
            return Err(Error::validation(format!("sample {sample_id:?} has no crops")));
        }
        if crop_ids.len() != profiles.len() {
            return Err(Error::shape(format!(
                "sample {sample_id:?}: {} crop ids for {} profiles",
                crop_ids.len(),
                profiles.len()
            )));
        }
        if crop_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "sample {sample_id:?}: crop ids must be strictly increasing"
            )));
        }
        let shape = profiles[0].matrix().shape();
        if let Some(i) = profiles.iter().position(|p| p.matrix().shape() != shape) {
            return Err(Error::shape(format!(
                "sample {sample_id:?}: crop {} has a different shape from crop {}",
                crop_ids[i], crop_ids[0]
            )));
        }
        Ok(Self { sample_id, crop_ids, profiles })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn crop_ids(&self) -> &[u32] {
        &self.crop_ids
    }

    pub fn profiles(&self) -> &[DecisionProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profile of the crop with the given id.
    pub fn crop(&self, crop_id: u32) -> Option<&DecisionProfile> {
        self.crop_ids
            .binary_search(&crop_id)
            .ok()
            .map(|i| &self.profiles[i])
    }
}

/// How a multi-crop sample is reduced to a single prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropSelection {
    /// Majority vote over all crops.
    #[default]
    Vote,
    /// Only crop 0, the center crop.
    First,
}

fn check_profile(profile: &DecisionProfile, templates: &DecisionTemplateSet) -> Result<()> {
    let want = (templates.model_count(), templates.class_count());
    if profile.matrix().shape() != want {
        return Err(Error::shape(format!(
            "profile is {}x{} but templates expect {}x{}",
            profile.model_count(),
            profile.class_count(),
            want.0,
            want.1
        )));
    }
    Ok(())
}

/// Pick the class whose template is most similar to the profile.
pub fn predict(
    profile: &DecisionProfile,
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
) -> Result<Prediction> {
    check_profile(profile, templates)?;
    let scores = templates
        .templates()
        .iter()
        .map(|dt| score(measure, dt, profile.matrix()))
        .collect::<Result<Vec<_>>>()?;
    let class_index = crate::fusion::argmax(&scores);
    Ok(Prediction { class_index, scores, measure })
}

/// Predict every profile, preserving order. Work is spread over the rayon pool.
pub fn predict_batch(
    profiles: &[DecisionProfile],
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
) -> Result<Vec<Prediction>> {
    for (i, p) in profiles.iter().enumerate() {
        check_profile(p, templates).map_err(|e| Error::shape(format!("sample {i}: {e}")))?;
    }
    profiles
        .par_iter()
        .map(|p| predict(p, templates, measure))
        .collect()
}

/// One crop's vote: its predicted label and the confidence used for tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropVote {
    pub label: usize,
    pub confidence: f64,
}

/// Confidence of a crop for vote tie-breaking: the largest softmax entry
/// anywhere in its profile.
///
/// Tied labels are compared on the mean of this value over the crops that
/// voted for them. Other readings of "average prediction probability" (e.g.
/// the tied class's own probability averaged over all crops) would only need
/// this function and [`resolve_votes`] swapped.
pub fn crop_confidence(profile: &DecisionProfile) -> f64 {
    profile.max_probability()
}

/// Majority vote with mean-confidence tie-break, then lowest label.
///
/// Returns `None` for an empty vote list.
pub fn resolve_votes(votes: &[CropVote]) -> Option<usize> {
    let labels = votes.iter().map(|v| v.label).max()? + 1;
    let mut counts = vec![0usize; labels];
    let mut conf_sums = vec![0.0f64; labels];
    for v in votes {
        counts[v.label] += 1;
        conf_sums[v.label] += v.confidence;
    }
    let top = *counts.iter().max()?;
    let mut best: Option<(usize, f64)> = None;
    for (label, (&n, &sum)) in counts.iter().zip(&conf_sums).enumerate() {
        if n != top {
            continue;
        }
        let mean = sum / n as f64;
        match best {
            Some((_, b)) if mean <= b => {}
            _ => best = Some((label, mean)),
        }
    }
    best.map(|(label, _)| label)
}

/// Predict each crop, then combine by majority vote.
///
/// The returned scores are those of the first crop (in crop-id order) that
/// voted for the winning label.
pub fn vote_crops(
    group: &CropGroup,
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
) -> Result<Prediction> {
    if group.is_empty() {
        return Err(Error::validation(format!("sample {:?} has no crops", group.sample_id())));
    }
    let preds = group
        .profiles()
        .iter()
        .map(|p| predict(p, templates, measure))
        .collect::<Result<Vec<_>>>()?;
    let votes: Vec<CropVote> = preds
        .iter()
        .zip(group.profiles())
        .map(|(pred, profile)| CropVote {
            label: pred.class_index,
            confidence: crop_confidence(profile),
        })
        .collect();
    let winner = resolve_votes(&votes).expect("non-empty vote list");
    let first = preds
        .into_iter()
        .find(|p| p.class_index == winner)
        .expect("winning label has at least one vote");
    Ok(first)
}

/// Reduce a crop group to one prediction according to `selection`.
pub fn predict_group(
    group: &CropGroup,
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
    selection: CropSelection,
) -> Result<Prediction> {
    match selection {
        CropSelection::Vote => vote_crops(group, templates, measure),
        CropSelection::First => {
            let center = group.crop(0).ok_or_else(|| {
                Error::validation(format!("sample {:?} has no crop 0", group.sample_id()))
            })?;
            predict(center, templates, measure)
        }
    }
}

/// [`predict_group`] over many samples, order preserved.
pub fn predict_groups(
    groups: &[&CropGroup],
    templates: &DecisionTemplateSet,
    measure: MeasureKind,
    selection: CropSelection,
) -> Result<Vec<Prediction>> {
    groups
        .par_iter()
        .map(|g| predict_group(g, templates, measure, selection))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Prediction of base model `model` alone on a crop group: per-crop argmax of
/// its decision vector, combined with the same vote rule as fused predictions.
pub fn base_model_label(group: &CropGroup, model: usize, selection: CropSelection) -> Result<usize> {
    let vote_of = |profile: &DecisionProfile| -> Result<CropVote> {
        if model >= profile.model_count() {
            return Err(Error::shape(format!(
                "model {model} out of range for {} models",
                profile.model_count()
            )));
        }
        let row = profile.matrix().row(model);
        let label = crate::fusion::argmax(row);
        Ok(CropVote { label, confidence: row[label] })
    };
    match selection {
        CropSelection::First => {
            let center = group.crop(0).ok_or_else(|| {
                Error::validation(format!("sample {:?} has no crop 0", group.sample_id()))
            })?;
            Ok(vote_of(center)?.label)
        }
        CropSelection::Vote => {
            let votes = group.profiles().iter().map(vote_of).collect::<Result<Vec<_>>>()?;
            Ok(resolve_votes(&votes).expect("crop group is non-empty"))
        }
    }
}
