//! Concept scoring and extraction.
//!
//! A concept's importance is the surrogate's raw target logit on its
//! zero-masked superpixel image. Local concepts are the top-`p` superpixels
//! of one image; global concepts are the most populous k-means clusters of
//! local-concept embeddings across many images.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kmeans::{euclidean, kmeans, KMeansParams};
use crate::segmentation::{slic_segment, superpixel_image, SegmentMask, SlicParams};
use crate::surrogate::{Classifier, Embedder, TARGET_INDEX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScore {
    pub segment_index: usize,
    pub score: f64,
    pub parent_id: String,
}

/// Descending by score, then ascending segment index.
pub fn compare_scores(a: &ConceptScore, b: &ConceptScore) -> Ordering {
    b.score.total_cmp(&a.score).then(a.segment_index.cmp(&b.segment_index))
}

pub fn rank_descending(scores: &[ConceptScore]) -> Vec<ConceptScore> {
    let mut out = scores.to_vec();
    out.sort_by(compare_scores);
    out
}

/// Target-class logit of every zero-masked segment, ordered by segment index.
pub fn score_concepts(model: &(impl Classifier + ?Sized), image: &Image, mask: &SegmentMask) -> Result<Vec<ConceptScore>> {
    if !mask.matches(image) {
        return Err(Error::invalid("mask and image sizes differ"));
    }
    (0..mask.count())
        .into_par_iter()
        .map(|j| {
            let sp = superpixel_image(image, mask, j);
            let logits = model.logits(&sp.image)?;
            let score = logits[TARGET_INDEX];
            if !score.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite score for segment {j}")));
            }
            Ok(ConceptScore {
                segment_index: j,
                score,
                parent_id: image.id.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub image_id: String,
    #[serde(skip)]
    pub mask: Option<SegmentMask>,
    pub all_scores: Vec<ConceptScore>,
    pub top: Vec<ConceptScore>,
}

impl LocalExplanation {
    pub fn from_scores(image_id: &str, mask: Option<SegmentMask>, all_scores: Vec<ConceptScore>, p: usize) -> Self {
        let ranked = rank_descending(&all_scores);
        let top = ranked.into_iter().take(p).collect();
        LocalExplanation {
            image_id: image_id.to_string(),
            mask,
            all_scores,
            top,
        }
    }

    pub fn top_indices(&self) -> Vec<usize> {
        self.top.iter().map(|c| c.segment_index).collect()
    }
}

/// Scores all segments and keeps the `p` highest (clipped to the segment count).
pub fn extract_local(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    p: usize,
) -> Result<LocalExplanation> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    let scores = score_concepts(model, image, mask)?;
    Ok(LocalExplanation::from_scores(&image.id, Some(mask.clone()), scores, p))
}

/// A local concept fed to global clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image_id: String,
    pub segment_index: usize,
    pub score: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub image_id: String,
    pub segment_index: usize,
    pub score: f64,
    /// Euclidean distance to the cluster centroid.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptCluster {
    /// Index in the raw k-means output.
    pub cluster_id: usize,
    pub centroid: Vec<f64>,
    pub population: usize,
    pub mean_cost: f64,
    /// Members by ascending cost.
    pub members: Vec<ClusterMember>,
    pub representatives: Vec<ClusterMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub target_class: String,
    pub candidate_count: usize,
    pub total_clusters: usize,
    /// The `g` most populous clusters.
    pub clusters: Vec<ConceptCluster>,
}

impl GlobalExplanation {
    /// Closest kept cluster to an embedding: `(rank in clusters, distance)`.
    pub fn nearest_cluster(&self, embedding: &[f64]) -> Option<(usize, f64)> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclidean(embedding, &c.centroid)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub p: usize,
    pub clusters: usize,
    pub g: usize,
    pub r: usize,
    pub seed: u64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        GlobalParams {
            p: 3,
            clusters: 5,
            g: 3,
            r: 3,
            seed: 0,
        }
    }
}

/// Clusters candidate embeddings and keeps the `g` most populous clusters.
///
/// Ties in population go to the lower mean cost, then the lower cluster id.
/// Within a cluster, members are ordered by cost (ties by candidate order)
/// and the first `r` are the representatives.
pub fn cluster_candidates(target_class: &str, candidates: &[Candidate], params: &GlobalParams) -> Result<GlobalExplanation> {
    if params.clusters > candidates.len() {
        return Err(Error::invalid(format!(
            "{} clusters requested but only {} candidate concepts",
            params.clusters,
            candidates.len()
        )));
    }
    if params.g > params.clusters {
        return Err(Error::invalid(format!(
            "g = {} exceeds the cluster count {}",
            params.g, params.clusters
        )));
    }
    let points: Vec<Vec<f64>> = candidates.iter().map(|c| c.embedding.clone()).collect();
    let km = kmeans(&points, &KMeansParams::new(params.clusters, params.seed))?;
    let mut clusters: Vec<ConceptCluster> = (0..params.clusters)
        .map(|cid| {
            let mut members: Vec<(usize, ClusterMember)> = candidates
                .iter()
                .enumerate()
                .filter(|(i, _)| km.assignments[*i] == cid)
                .map(|(i, c)| {
                    (
                        i,
                        ClusterMember {
                            image_id: c.image_id.clone(),
                            segment_index: c.segment_index,
                            score: c.score,
                            cost: euclidean(&c.embedding, &km.centroids[cid]),
                        },
                    )
                })
                .collect();
            members.sort_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)));
            let members: Vec<ClusterMember> = members.into_iter().map(|(_, m)| m).collect();
            let mean_cost = if members.is_empty() {
                0.0
            } else {
                members.iter().map(|m| m.cost).sum::<f64>() / members.len() as f64
            };
            ConceptCluster {
                cluster_id: cid,
                centroid: km.centroids[cid].clone(),
                population: members.len(),
                mean_cost,
                representatives: members.iter().take(params.r).cloned().collect(),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.population
            .cmp(&a.population)
            .then(a.mean_cost.total_cmp(&b.mean_cost))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    clusters.truncate(params.g);
    Ok(GlobalExplanation {
        target_class: target_class.to_string(),
        candidate_count: candidates.len(),
        total_clusters: params.clusters,
        clusters,
    })
}

/// Top-`p` local concepts of one image as clustering candidates.
pub fn local_candidates(model: &(impl Embedder + ?Sized), image: &Image, local: &LocalExplanation, mask: &SegmentMask) -> Result<Vec<Candidate>> {
    local
        .top
        .iter()
        .map(|c| {
            let sp = superpixel_image(image, mask, c.segment_index);
            Ok(Candidate {
                image_id: image.id.clone(),
                segment_index: c.segment_index,
                score: c.score,
                embedding: model.embed(&sp.image)?,
            })
        })
        .collect()
}

/// Segments every image, extracts its local concepts, embeds them and clusters.
pub fn extract_global(
    model: &(impl Embedder + ?Sized),
    target_class: &str,
    images: &[Image],
    slic: &SlicParams,
    params: &GlobalParams,
) -> Result<(GlobalExplanation, Vec<LocalExplanation>)> {
    if images.is_empty() {
        return Err(Error::invalid("global extraction needs at least one image"));
    }
    let per_image: Vec<(LocalExplanation, Vec<Candidate>)> = images
        .par_iter()
        .map(|img| {
            let mask = slic_segment(img, slic)?;
            let local = extract_local(model, img, &mask, params.p)?;
            let cands = local_candidates(model, img, &local, &mask)?;
            Ok((local, cands))
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<Candidate> = per_image.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let global = cluster_candidates(target_class, &candidates, params)?;
    Ok((global, per_image.into_iter().map(|(l, _)| l).collect()))
}

/// `ceil(max(SSC, SDC))` for one class.
pub fn select_p_for_class(ssc: f64, sdc: f64) -> Result<usize> {
    if !ssc.is_finite() || !sdc.is_finite() || ssc < 0.0 || sdc < 0.0 {
        return Err(Error::invalid("SSC and SDC must be finite and non-negative"));
    }
    Ok(ssc.max(sdc).ceil() as usize)
}

/// `ceil(max(mean SSC, mean SDC))` across classes.
pub fn select_p(ssc_per_class: &BTreeMap<String, f64>, sdc_per_class: &BTreeMap<String, f64>) -> Result<usize> {
    if ssc_per_class.is_empty() || sdc_per_class.is_empty() {
        return Err(Error::invalid("per-class SSC/SDC maps must be non-empty"));
    }
    if !ssc_per_class.keys().eq(sdc_per_class.keys()) {
        return Err(Error::invalid("SSC and SDC maps must cover the same classes"));
    }
    let mean = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len() as f64;
    select_p_for_class(mean(ssc_per_class), mean(sdc_per_class))
}

/// Min-max normalization; a constant input maps to 0.5 everywhere.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

/// Blue (0) to red (1).
pub fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [v, 0.25 * (1.0 - (2.0 * v - 1.0).abs()), 1.0 - v]
}

pub const HEATMAP_OPACITY: f64 = 0.6;

/// RGB8 heatmap: each segment filled with the colour of its normalized score
/// over the grayscale image at 60% opacity.
pub fn score_map_rgb(image: &Image, mask: &SegmentMask, scores: &[ConceptScore]) -> Result<Vec<u8>> {
    if !mask.matches(image) {
        return Err(Error::invalid("mask and image sizes differ"));
    }
    let mut per_segment = vec![f64::NAN; mask.count()];
    for s in scores {
        if s.segment_index >= mask.count() {
            return Err(Error::invalid(format!("score for unknown segment {}", s.segment_index)));
        }
        per_segment[s.segment_index] = s.score;
    }
    if per_segment.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("every segment needs a score"));
    }
    let norm = normalize_scores(&per_segment);
    let gray = image.gray();
    let mut out = Vec::with_capacity(gray.len() * 3);
    for (i, &g) in gray.iter().enumerate() {
        let c = heat_color(norm[mask.labels()[i] as usize]);
        for ch in c {
            let v = (1.0 - HEATMAP_OPACITY) * g as f64 + HEATMAP_OPACITY * ch;
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

pub fn render_score_map(image: &Image, mask: &SegmentMask, scores: &[ConceptScore], out_path: &Path) -> Result<()> {
    let rgb = score_map_rgb(image, mask, scores)?;
    image::save_buffer_with_format(
        out_path,
        &rgb,
        image.width() as u32,
        image.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Image {
        path: out_path.to_path_buf(),
        message: e.to_string(),
    })
}
