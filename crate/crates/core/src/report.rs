//! Per-image classification outcome with the concepts behind it.

use serde::{Deserialize, Serialize};

use crate::concepts::{extract_local, local_candidates, ConceptScore, GlobalExplanation};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::segmentation::SegmentMask;
use crate::surrogate::{argmax, SurrogateModel, TARGET_INDEX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Tp,
    Tn,
    Fp,
    Fn,
}

impl Outcome {
    pub fn from_decision(is_target: bool, predicted_target: bool) -> Self {
        match (is_target, predicted_target) {
            (true, true) => Outcome::Tp,
            (false, false) => Outcome::Tn,
            (false, true) => Outcome::Fp,
            (true, false) => Outcome::Fn,
        }
    }

    pub fn is_error(self) -> bool {
        matches!(self, Outcome::Fp | Outcome::Fn)
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Tp => "TP",
            Outcome::Tn => "TN",
            Outcome::Fp => "FP",
            Outcome::Fn => "FN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCluster {
    pub segment_index: usize,
    /// Position among the kept global clusters (0 = most populous).
    pub cluster_rank: usize,
    pub cluster_id: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationReport {
    pub image_id: String,
    pub class_label: String,
    pub target_class: String,
    pub outcome: Outcome,
    pub logits: Vec<f64>,
    pub top: Vec<ConceptScore>,
    pub nearest: Vec<NearestCluster>,
}

impl MisclassificationReport {
    /// Mean distance from the local concepts to their nearest global cluster.
    pub fn mean_nearest_distance(&self) -> Option<f64> {
        if self.nearest.is_empty() {
            return None;
        }
        Some(self.nearest.iter().map(|n| n.distance).sum::<f64>() / self.nearest.len() as f64)
    }
}

pub fn misclassification_report(
    model: &SurrogateModel,
    image: &Image,
    mask: &SegmentMask,
    p: usize,
    global: Option<&GlobalExplanation>,
) -> Result<MisclassificationReport> {
    let class_label = image
        .class_label
        .clone()
        .ok_or_else(|| Error::invalid(format!("image {} has no ground-truth label", image.id)))?;
    let logits = model.predict_logits(image)?;
    let outcome = Outcome::from_decision(class_label == model.target_class, argmax(&logits) == TARGET_INDEX);
    let local = extract_local(model, image, mask, p)?;
    let mut nearest = Vec::new();
    if let Some(g) = global {
        for cand in local_candidates(model, image, &local, mask)? {
            if let Some((rank, distance)) = g.nearest_cluster(&cand.embedding) {
                nearest.push(NearestCluster {
                    segment_index: cand.segment_index,
                    cluster_rank: rank,
                    cluster_id: g.clusters[rank].cluster_id,
                    distance,
                });
            }
        }
    }
    Ok(MisclassificationReport {
        image_id: image.id.clone(),
        class_label,
        target_class: model.target_class.clone(),
        outcome,
        logits,
        top: local.top,
        nearest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_table() {
        assert_eq!(Outcome::from_decision(true, true), Outcome::Tp);
        assert_eq!(Outcome::from_decision(false, false), Outcome::Tn);
        assert_eq!(Outcome::from_decision(false, true), Outcome::Fp);
        assert_eq!(Outcome::from_decision(true, false), Outcome::Fn);
        assert!(Outcome::Fn.is_error() && !Outcome::Tp.is_error());
        assert_eq!(serde_json::to_string(&Outcome::Fp).unwrap(), "\"FP\"");
    }
}
