//! Explanation quality metrics.
//!
//! Perturbations are always "zero the pixels of a segment". Insertion grows
//! an image from the all-zero canvas, deletion erases it from the intact
//! image. Correctness means the argmax of the logits equals the target.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::concepts::ConceptScore;
use crate::error::{Error, Result, ZeroVariance};
use crate::image::Image;
use crate::segmentation::SegmentMask;
use crate::surrogate::{argmax, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Insertion,
    Deletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Curve {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid("a curve needs matching xs/ys with at least 2 points"));
        }
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve xs must increase strictly from 0 to 1"));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("curve ys must be finite"));
        }
        Ok(Curve { xs, ys })
    }

    /// `k + 1` evenly spaced xs on `[0, 1]`.
    fn from_steps(k: usize, ys: Vec<f64>) -> Self {
        let xs = (0..=k).map(|j| j as f64 / k as f64).collect();
        Curve { xs, ys }
    }

    /// Linear interpolation at `x` in `[0, 1]`.
    pub fn value_at(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&v| v < x);
        if i == 0 {
            return self.ys[0];
        }
        if i >= self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.ys[i - 1] + t * (self.ys[i] - self.ys[i - 1])
    }

    /// The curve sampled on `points` evenly spaced xs.
    pub fn resample(&self, points: usize) -> Curve {
        let k = points.max(2) - 1;
        let ys = (0..=k).map(|j| self.value_at(j as f64 / k as f64)).collect();
        Curve::from_steps(k, ys)
    }
}

/// Pointwise mean of curves after resampling onto a shared 101-point grid.
pub fn mean_curve(curves: &[Curve]) -> Result<Curve> {
    if curves.is_empty() {
        return Err(Error::invalid("no curves to average"));
    }
    let grids: Vec<Curve> = curves.iter().map(|c| c.resample(101)).collect();
    let ys = (0..101)
        .map(|j| grids.iter().map(|g| g.ys[j]).sum::<f64>() / grids.len() as f64)
        .collect();
    Ok(Curve::from_steps(100, ys))
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &Curve) -> f64 {
    curve
        .xs
        .windows(2)
        .zip(curve.ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

fn check_shape(model: &(impl Classifier + ?Sized), image: &Image, mask: &SegmentMask) -> Result<()> {
    let (h, w, c) = model.input_shape();
    if (image.height(), image.width(), image.channels()) != (h, w, c) {
        return Err(Error::invalid(format!(
            "model expects {h}x{w}x{c}, image {} is {}x{}x{}",
            image.id,
            image.height(),
            image.width(),
            image.channels()
        )));
    }
    if !mask.matches(image) {
        return Err(Error::invalid(format!("mask does not match image {}", image.id)));
    }
    Ok(())
}

fn check_target(model: &(impl Classifier + ?Sized), target: usize) -> Result<()> {
    if target >= model.class_count() {
        return Err(Error::invalid(format!(
            "target index {target} out of range for {} classes",
            model.class_count()
        )));
    }
    Ok(())
}

/// Segment order of a descending ranking, validated to cover every segment once.
pub fn ranking_order(ranked: &[ConceptScore], segments: usize) -> Result<Vec<usize>> {
    let order: Vec<usize> = ranked.iter().map(|c| c.segment_index).collect();
    check_order(&order, segments)?;
    if ranked.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(Error::invalid("ranking must be sorted by descending score"));
    }
    Ok(order)
}

fn check_order(order: &[usize], segments: usize) -> Result<()> {
    let mut seen = vec![false; segments];
    for &s in order {
        if s >= segments || std::mem::replace(&mut seen[s], true) {
            return Err(Error::invalid(format!("ranking repeats or exceeds segment {s}")));
        }
    }
    if order.len() != segments {
        return Err(Error::invalid(format!(
            "ranking covers {} of {segments} segments",
            order.len()
        )));
    }
    Ok(())
}

/// The image after `j` steps of insertion or deletion along `order`.
pub fn perturbed(image: &Image, mask: &SegmentMask, order: &[usize], j: usize, mode: CurveMode) -> Image {
    let mut selected = vec![mode == CurveMode::Deletion; mask.count()];
    for &s in &order[..j] {
        selected[s] = mode == CurveMode::Insertion;
    }
    image.masked(&mask.union_pixels(&selected))
}

fn step_images(image: &Image, mask: &SegmentMask, order: &[usize], mode: CurveMode) -> Vec<Image> {
    (0..=order.len()).map(|j| perturbed(image, mask, order, j, mode)).collect()
}

/// Target-class probability curve along an arbitrary complete segment order.
pub fn perturbation_curve(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    order: &[usize],
    mode: CurveMode,
    target: usize,
) -> Result<Curve> {
    check_shape(model, image, mask)?;
    check_target(model, target)?;
    check_order(order, mask.count())?;
    let logits = model.logits_batch(&step_images(image, mask, order, mode))?;
    let ys = logits.iter().map(|l| crate::cnn::softmax(l)[target]).collect();
    Ok(Curve::from_steps(order.len(), ys))
}

pub fn insertion_deletion_curve(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    ranked: &[ConceptScore],
    mode: CurveMode,
    target: usize,
) -> Result<Curve> {
    let order = ranking_order(ranked, mask.count())?;
    perturbation_curve(model, image, mask, &order, mode, target)
}

/// An image with its segmentation, concept ranking and ground-truth label.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub image: Image,
    pub mask: SegmentMask,
    /// Segment indices by descending importance.
    pub order: Vec<usize>,
    pub label: usize,
}

impl EvalSample {
    pub fn new(image: Image, mask: SegmentMask, ranked: &[ConceptScore], label: usize) -> Result<Self> {
        let order = ranking_order(ranked, mask.count())?;
        Ok(EvalSample {
            image,
            mask,
            order,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub curve: Curve,
    pub auc: f64,
}

/// Accuracy over the dataset as a function of the perturbed concept fraction.
///
/// The grid has `max k + 1` points; an image with `k_i` segments is evaluated
/// at step `round(x * k_i)`.
pub fn accuracy_curve(model: &(impl Classifier + ?Sized), samples: &[EvalSample], mode: CurveMode) -> Result<AccuracyCurve> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy curve needs at least one image"));
    }
    for s in samples {
        check_shape(model, &s.image, &s.mask)?;
        check_order(&s.order, s.mask.count())?;
        check_target(model, s.label)?;
    }
    let grid = samples.iter().map(|s| s.mask.count()).max().unwrap();
    let correct: Vec<Vec<bool>> = samples
        .par_iter()
        .map(|s| {
            let k = s.order.len();
            let steps: Vec<usize> = (0..=grid)
                .map(|g| ((g as f64 / grid as f64) * k as f64).round() as usize)
                .collect();
            let mut cache: BTreeMap<usize, bool> = BTreeMap::new();
            steps
                .iter()
                .map(|&j| {
                    if let Some(&c) = cache.get(&j) {
                        return Ok(c);
                    }
                    let img = perturbed(&s.image, &s.mask, &s.order, j, mode);
                    let c = argmax(&model.logits(&img)?) == s.label;
                    cache.insert(j, c);
                    Ok(c)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let ys = (0..=grid)
        .map(|g| correct.iter().filter(|c| c[g]).count() as f64 / samples.len() as f64)
        .collect();
    let curve = Curve::from_steps(grid, ys);
    Ok(AccuracyCurve { auc: auc(&curve), curve })
}

/// Accuracy-curve AUC for several models on the same ranked dataset.
pub fn global_accuracy_auc(
    models: &[(&str, &dyn Classifier)],
    samples: &[EvalSample],
    mode: CurveMode,
) -> Result<BTreeMap<String, AccuracyCurve>> {
    models
        .iter()
        .map(|(name, m)| Ok((name.to_string(), accuracy_curve(*m, samples, mode)?)))
        .collect()
}

/// Pearson correlation; a constant input yields `UndefinedCorrelation`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("correlation needs two equal-length vectors of length >= 2"));
    }
    let flat = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = lo.abs().max(hi.abs()).max(1.0);
        hi - lo <= 1e-12 * scale
    };
    match (flat(xs), flat(ys)) {
        (true, true) => return Err(Error::UndefinedCorrelation(ZeroVariance::Both)),
        (true, false) => return Err(Error::UndefinedCorrelation(ZeroVariance::Predictions)),
        (false, true) => return Err(Error::UndefinedCorrelation(ZeroVariance::Scores)),
        _ => {}
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-image seed so parallel and serial evaluation draw the same subsets.
pub fn derive_seed(global: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(image_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn check_scores(scores: &[f64], mask: &SegmentMask) -> Result<()> {
    if scores.len() != mask.count() {
        return Err(Error::invalid(format!(
            "{} scores for {} segments",
            scores.len(),
            mask.count()
        )));
    }
    Ok(())
}

/// Per-segment scores indexed by segment.
pub fn scores_by_segment(scores: &[ConceptScore], segments: usize) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; segments];
    for s in scores {
        if s.segment_index >= segments {
            return Err(Error::invalid(format!("score for unknown segment {}", s.segment_index)));
        }
        out[s.segment_index] = s.score;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("every segment needs a score"));
    }
    Ok(out)
}

/// Drop in target logit and summed score for each removed subset.
fn removal_correlation(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    scores: &[f64],
    subsets: &[Vec<usize>],
    target: usize,
) -> Result<f64> {
    let full = model.logits(image)?[target];
    let images: Vec<Image> = subsets
        .iter()
        .map(|sub| {
            let mut keep = vec![true; mask.count()];
            sub.iter().for_each(|&s| keep[s] = false);
            image.masked(&mask.union_pixels(&keep))
        })
        .collect();
    let drops: Vec<f64> = model.logits_batch(&images)?.iter().map(|l| full - l[target]).collect();
    let sums: Vec<f64> = subsets.iter().map(|sub| sub.iter().map(|&s| scores[s]).sum()).collect();
    pearson(&drops, &sums)
}

fn check_common(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    scores: &[f64],
    samples: usize,
    target: usize,
) -> Result<()> {
    check_shape(model, image, mask)?;
    check_target(model, target)?;
    check_scores(scores, mask)?;
    if samples < 2 {
        return Err(Error::invalid("at least 2 samples are needed for a correlation"));
    }
    Ok(())
}

/// Correlation between prediction drops from removing random size-`n` subsets
/// and the subsets' summed scores.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_n(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    scores: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
    target: usize,
) -> Result<f64> {
    check_common(model, image, mask, scores, samples, target)?;
    let k = mask.count();
    if n == 0 || n > k {
        return Err(Error::invalid(format!("n = {n} outside 1..={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<usize>> = (0..samples).map(|_| index::sample(&mut rng, k, n).into_vec()).collect();
    removal_correlation(model, image, mask, scores, &subsets, target)
}

/// Subset sizes of the sensitivity sweep: 3, 6, ... up to `min(50, k)`.
pub fn sensitivity_sizes(k: usize) -> Vec<usize> {
    (3..=k.min(50)).step_by(3).collect()
}

/// Like `sensitivity_n` with the subset size drawn uniformly from `1..=k`.
pub fn faithfulness(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    scores: &[f64],
    samples: usize,
    seed: u64,
    target: usize,
) -> Result<f64> {
    check_common(model, image, mask, scores, samples, target)?;
    let k = mask.count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<usize>> = (0..samples)
        .map(|_| {
            let n = rng.random_range(1..=k);
            index::sample(&mut rng, k, n).into_vec()
        })
        .collect();
    removal_correlation(model, image, mask, scores, &subsets, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum ConceptSetSize {
    Found(usize),
    /// Never reached; carries the `k + 1` sentinel.
    Never(usize),
    /// The intact image is already misclassified.
    Undefined,
}

impl ConceptSetSize {
    pub fn value(self) -> Option<usize> {
        match self {
            ConceptSetSize::Found(v) | ConceptSetSize::Never(v) => Some(v),
            ConceptSetSize::Undefined => None,
        }
    }
}

fn is_correct(model: &(impl Classifier + ?Sized), image: &Image, target: usize) -> Result<bool> {
    Ok(argmax(&model.logits(image)?) == target)
}

/// Smallest prefix of the ranking whose insertion alone is classified as the target.
pub fn ssc(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    ranked: &[ConceptScore],
    target: usize,
) -> Result<ConceptSetSize> {
    check_shape(model, image, mask)?;
    check_target(model, target)?;
    let order = ranking_order(ranked, mask.count())?;
    for j in 0..=order.len() {
        if is_correct(model, &perturbed(image, mask, &order, j, CurveMode::Insertion), target)? {
            return Ok(ConceptSetSize::Found(j));
        }
    }
    Ok(ConceptSetSize::Never(order.len() + 1))
}

/// Smallest prefix of the ranking whose deletion flips the prediction away from the target.
pub fn sdc(
    model: &(impl Classifier + ?Sized),
    image: &Image,
    mask: &SegmentMask,
    ranked: &[ConceptScore],
    target: usize,
) -> Result<ConceptSetSize> {
    check_shape(model, image, mask)?;
    check_target(model, target)?;
    let order = ranking_order(ranked, mask.count())?;
    if !is_correct(model, image, target)? {
        return Ok(ConceptSetSize::Undefined);
    }
    for j in 1..=order.len() {
        if !is_correct(model, &perturbed(image, mask, &order, j, CurveMode::Deletion), target)? {
            return Ok(ConceptSetSize::Found(j));
        }
    }
    Ok(ConceptSetSize::Never(order.len() + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeSummary {
    /// Mean over images where a set was found; `None` if there were none.
    pub mean: Option<f64>,
    pub counted: usize,
    pub sentinel: usize,
    pub undefined: usize,
    pub sentinel_rate: f64,
}

pub fn summarize_set_sizes(values: &[ConceptSetSize]) -> SetSizeSummary {
    let found: Vec<usize> = values
        .iter()
        .filter_map(|v| match v {
            ConceptSetSize::Found(j) => Some(*j),
            _ => None,
        })
        .collect();
    let sentinel = values.iter().filter(|v| matches!(v, ConceptSetSize::Never(_))).count();
    let undefined = values.iter().filter(|v| matches!(v, ConceptSetSize::Undefined)).count();
    let defined = values.len() - undefined;
    SetSizeSummary {
        mean: (!found.is_empty()).then(|| found.iter().sum::<usize>() as f64 / found.len() as f64),
        counted: found.len(),
        sentinel,
        undefined,
        sentinel_rate: if defined == 0 { 0.0 } else { sentinel as f64 / defined as f64 },
    }
}

/// Accuracy with each image reduced to its top-`size` concepts, over intact accuracy.
pub fn completeness(model: &(impl Classifier + ?Sized), samples: &[EvalSample], size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("completeness needs at least one image"));
    }
    for s in samples {
        check_shape(model, &s.image, &s.mask)?;
        check_order(&s.order, s.mask.count())?;
    }
    let outcomes: Vec<(bool, bool)> = samples
        .par_iter()
        .map(|s| {
            let j = size.min(s.order.len());
            let reduced = perturbed(&s.image, &s.mask, &s.order, j, CurveMode::Insertion);
            let intact = argmax(&model.logits(&s.image)?) == s.label;
            let kept = argmax(&model.logits(&reduced)?) == s.label;
            Ok((intact, kept))
        })
        .collect::<Result<_>>()?;
    let intact = outcomes.iter().filter(|o| o.0).count();
    if intact == 0 {
        return Err(Error::UndefinedRatio("intact accuracy is zero".into()));
    }
    let kept = outcomes.iter().filter(|o| o.1).count();
    Ok(kept as f64 / intact as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub treatments: Vec<String>,
    /// Mean within-block rank per treatment; rank 1 is the smallest value.
    pub mean_ranks: Vec<f64>,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject_h0: bool,
}

impl RankingResult {
    pub fn rank_map(&self) -> BTreeMap<String, f64> {
        self.treatments.iter().cloned().zip(self.mean_ranks.iter().cloned()).collect()
    }
}

/// Ascending ranks within one row; ties share their mean rank.
pub fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman test over a blocks × treatments matrix.
pub fn friedman_test(treatments: &[String], matrix: &[Vec<f64>], alpha: f64) -> Result<RankingResult> {
    let t = treatments.len();
    let n = matrix.len();
    if t < 2 || n < 2 {
        return Err(Error::invalid("the Friedman test needs at least 2 treatments and 2 blocks"));
    }
    if matrix.iter().any(|r| r.len() != t || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid(format!("every block needs {t} finite values")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    let mut sums = vec![0.0; t];
    for row in matrix {
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let (nf, tf) = (n as f64, t as f64);
    let statistic =
        12.0 * nf / (tf * (tf + 1.0)) * mean_ranks.iter().map(|r| r * r).sum::<f64>() - 3.0 * nf * (tf + 1.0);
    let statistic = if statistic.abs() < 1e-9 { 0.0 } else { statistic };
    let dist = ChiSquared::new(tf - 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Ok(RankingResult {
        treatments: treatments.to_vec(),
        mean_ranks,
        statistic,
        degrees_of_freedom: t - 1,
        p_value,
        alpha,
        reject_h0: p_value < alpha,
    })
}

/// Segment scores from a per-pixel attribution map: sum of absolute values.
pub fn pixelmap_to_concept_scores(pixel_map: &[f64], mask: &SegmentMask, parent_id: &str) -> Result<Vec<ConceptScore>> {
    if pixel_map.len() != mask.height() * mask.width() {
        return Err(Error::invalid(format!(
            "pixel map has {} values, mask is {}x{}",
            pixel_map.len(),
            mask.height(),
            mask.width()
        )));
    }
    let mut sums = vec![0.0; mask.count()];
    for (&l, v) in mask.labels().iter().zip(pixel_map) {
        sums[l as usize] += v.abs();
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(segment_index, score)| ConceptScore {
            segment_index,
            score,
            parent_id: parent_id.to_string(),
        })
        .collect())
}
