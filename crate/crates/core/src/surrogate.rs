//! Binary surrogate classifiers: head replacement, fine-tuning on the
//! auxiliary dataset, and inference.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{cross_entropy, CheckpointMeta, Gradients, LinearHead, Sgd, SmallCnn};
use crate::dataset::{AuxiliaryDataset, Part, ValidationScenario};
use crate::error::{Error, Result};
use crate::image::Image;

/// Output index of the target class in a binary surrogate.
pub const TARGET_INDEX: usize = 1;

/// Anything that maps an image to pre-softmax class scores.
pub trait Classifier: Sync {
    fn class_count(&self) -> usize;

    /// `(height, width, channels)` the model accepts.
    fn input_shape(&self) -> (usize, usize, usize);

    fn logits(&self, image: &Image) -> Result<Vec<f64>>;

    fn logits_batch(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        images.par_iter().map(|i| self.logits(i)).collect()
    }
}

/// A classifier that also exposes its penultimate, globally pooled features.
pub trait Embedder: Classifier {
    fn embedding_width(&self) -> usize;

    fn embed(&self, image: &Image) -> Result<Vec<f64>>;
}

impl Classifier for SmallCnn {
    fn class_count(&self) -> usize {
        self.architecture().classes
    }

    fn input_shape(&self) -> (usize, usize, usize) {
        let a = self.architecture();
        (a.input_size, a.input_size, a.in_channels)
    }

    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        SmallCnn::logits(self, image)
    }
}

impl Embedder for SmallCnn {
    fn embedding_width(&self) -> usize {
        self.architecture().embedding_width()
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        SmallCnn::embed(self, image)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub network: SmallCnn,
    pub target_class: String,
    pub head_seed: u64,
}

impl Classifier for SurrogateModel {
    fn class_count(&self) -> usize {
        2
    }

    fn input_shape(&self) -> (usize, usize, usize) {
        self.network.input_shape()
    }

    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        self.network.logits(image)
    }
}

impl Embedder for SurrogateModel {
    fn embedding_width(&self) -> usize {
        self.network.architecture().embedding_width()
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        self.network.embed(image)
    }
}

/// Copies the backbone of `base` and attaches a fresh 2-way head seeded by `head_seed`.
pub fn adapt_to_binary(base: &SmallCnn, target_class: &str, head_seed: u64) -> Result<SurrogateModel> {
    let head = LinearHead::init(base.architecture().embedding_width(), 2, head_seed);
    Ok(SurrogateModel {
        network: base.with_head(head)?,
        target_class: target_class.to_string(),
        head_seed,
    })
}

impl SurrogateModel {
    pub fn predict_logits(&self, image: &Image) -> Result<Vec<f64>> {
        self.network.logits(image)
    }

    pub fn predict_logits_batch(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        self.logits_batch(images)
    }

    pub fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        self.network.embed(image)
    }

    /// Raw target-class logit.
    pub fn target_score(&self, image: &Image) -> Result<f64> {
        Ok(self.network.logits(image)?[TARGET_INDEX])
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            target_class: Some(self.target_class.clone()),
            class_names: vec![format!("not_{}", self.target_class), self.target_class.clone()],
            head_seed: Some(self.head_seed),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.network.save(&self.meta(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SurrogateModel> {
        let path = path.as_ref();
        let (network, meta) = SmallCnn::load(path)?;
        let target_class = meta.target_class.ok_or_else(|| Error::Format {
            format: "checkpoint",
            expected: crate::cnn::CHECKPOINT_VERSION,
            message: format!("{} is not a binary surrogate checkpoint", path.display()),
        })?;
        if network.architecture().classes != 2 {
            return Err(Error::invalid("surrogate checkpoint must have a 2-way head"));
        }
        Ok(SurrogateModel {
            network,
            target_class,
            head_seed: meta.head_seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            epochs: 50,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn weight(&self, part: Part) -> f64 {
        match part {
            Part::Original => 1.0,
            Part::Superpixel => self.lambda1,
            Part::OutOfDistribution => self.lambda2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("lambda weights must be non-negative"));
        }
        Ok(())
    }
}

/// Mean loss of each objective term and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub original: f64,
    /// `None` when the term's weight is zero and it was not visited.
    pub superpixel: Option<f64>,
    pub ood: Option<f64>,
    pub total: f64,
}

impl ObjectiveTerms {
    fn combine(cfg: &TrainingConfig, original: f64, superpixel: Option<f64>, ood: Option<f64>) -> Self {
        let total = original
            + superpixel.map_or(0.0, |l| cfg.lambda1 * l)
            + ood.map_or(0.0, |l| cfg.lambda2 * l);
        ObjectiveTerms {
            original,
            superpixel,
            ood,
            total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Term means over the losses seen while training this epoch.
    pub terms: ObjectiveTerms,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainingConfig,
    /// Full-dataset objective before the first update.
    pub initial: ObjectiveTerms,
    pub epochs: Vec<EpochLog>,
    /// Full-dataset objective after the last update.
    pub last: ObjectiveTerms,
}

struct Sample<'a> {
    part: Part,
    image: &'a Image,
    /// `weight(part) * |D| / |part|`, so a uniform mini-batch mean is unbiased for the objective.
    scale: f64,
}

fn training_samples<'a>(data: &'a AuxiliaryDataset, cfg: &TrainingConfig) -> Result<Vec<Sample<'a>>> {
    let parts = [Part::Original, Part::Superpixel, Part::OutOfDistribution];
    for part in parts {
        if cfg.weight(part) > 0.0 && data.part_len(part) == 0 {
            return Err(Error::invalid(format!("{part:?} part is empty but carries a non-zero weight")));
        }
    }
    let total: usize = parts
        .iter()
        .filter(|p| cfg.weight(**p) > 0.0)
        .map(|p| data.part_len(*p))
        .sum();
    Ok(data
        .samples()
        .filter(|(part, _)| cfg.weight(*part) > 0.0)
        .map(|(part, image)| Sample {
            part,
            image,
            scale: cfg.weight(part) * total as f64 / data.part_len(part) as f64,
        })
        .collect())
}

fn term_means(cfg: &TrainingConfig, sums: &[(f64, usize); 3]) -> ObjectiveTerms {
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    let original = mean(sums[0]).unwrap_or(0.0);
    let sp = if cfg.lambda1 > 0.0 { mean(sums[1]) } else { None };
    let ood = if cfg.lambda2 > 0.0 { mean(sums[2]) } else { None };
    ObjectiveTerms::combine(cfg, original, sp, ood)
}

fn part_slot(part: Part) -> usize {
    match part {
        Part::Original => 0,
        Part::Superpixel => 1,
        Part::OutOfDistribution => 2,
    }
}

/// Objective terms of `model` over the whole dataset, without updating it.
pub fn evaluate_objective(network: &SmallCnn, data: &AuxiliaryDataset, cfg: &TrainingConfig) -> Result<ObjectiveTerms> {
    let samples = training_samples(data, cfg)?;
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| network.logits(s.image).map(|l| cross_entropy(&l, s.part.label()).0))
        .collect::<Result<_>>()?;
    let mut sums = [(0.0, 0usize); 3];
    for (s, l) in samples.iter().zip(&losses) {
        let slot = &mut sums[part_slot(s.part)];
        slot.0 += l;
        slot.1 += 1;
    }
    Ok(term_means(cfg, &sums))
}

struct WeightedSample<'a> {
    image: &'a Image,
    label: usize,
    scale: f64,
    slot: usize,
}

/// Shuffled mini-batch SGD. The order generator is seeded once from
/// `cfg.seed`; `on_epoch` receives per-slot `(loss sum, count)` of the epoch.
fn sgd_epochs(
    network: &mut SmallCnn,
    samples: &[WeightedSample],
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, &[(f64, usize); 3], &SmallCnn) -> Result<()>,
) -> Result<()> {
    let mut optimizer = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [(0.0, 0usize); 3];
        for batch in order.chunks(cfg.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    network.sample_gradient(s.image, s.label, s.scale * inv)
                })
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros(network);
            for (&i, (loss, g)) in batch.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                let slot = &mut sums[samples[i].slot];
                slot.0 += loss;
                slot.1 += 1;
                grads.add_assign(g);
            }
            optimizer.step(network, &grads);
        }
        on_epoch(epoch, &sums, network)?;
    }
    Ok(())
}

/// Plain supervised training on labelled images with unit sample weights.
/// The lambda fields of `cfg` are ignored. Returns the mean training loss of
/// every epoch.
pub fn train_supervised(network: &SmallCnn, data: &[(&Image, usize)], cfg: &TrainingConfig) -> Result<(SmallCnn, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    let classes = network.architecture().classes;
    if let Some((img, l)) = data.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::invalid(format!("label {l} of {} exceeds {classes} classes", img.id)));
    }
    let items: Vec<WeightedSample> = data
        .iter()
        .map(|(image, label)| WeightedSample {
            image,
            label: *label,
            scale: 1.0,
            slot: 0,
        })
        .collect();
    let mut net = network.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    sgd_epochs(&mut net, &items, cfg, |epoch, sums, _| {
        let mean = sums[0].0 / sums[0].1 as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.5}");
        losses.push(mean);
        Ok(())
    })?;
    Ok((net, losses))
}

/// Fine-tunes the surrogate on the weighted three-term objective
/// `E_orig[L] + lambda1 E_superpixel[L] + lambda2 E_ood[L]` with cross-entropy `L`.
///
/// Each epoch shuffles the samples of the parts with non-zero weight using a
/// generator seeded once from `cfg.seed`, then walks consecutive mini-batches.
/// A sample of part `p` contributes `lambda_p * |D| / |p|` times its loss to the
/// batch mean. Per-sample gradients are computed in parallel and summed in
/// batch order, so results do not depend on the thread count.
pub fn fine_tune(
    model: &SurrogateModel,
    data: &AuxiliaryDataset,
    cfg: &TrainingConfig,
    validation: Option<&ValidationScenario>,
) -> Result<(SurrogateModel, TrainingLog)> {
    cfg.validate()?;
    let samples = training_samples(data, cfg)?;
    let mut network = model.network.clone();
    let initial = evaluate_objective(&network, data, cfg)?;
    if !initial.total.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let items: Vec<WeightedSample> = samples
        .iter()
        .map(|s| WeightedSample {
            image: s.image,
            label: s.part.label(),
            scale: s.scale,
            slot: part_slot(s.part),
        })
        .collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    sgd_epochs(&mut network, &items, cfg, |epoch, sums, network| {
        let terms = term_means(cfg, sums);
        if !terms.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let validation_accuracy = match validation {
            Some(v) => Some(evaluate_network(network, v)?.accuracy),
            None => None,
        };
        log::debug!("epoch {epoch}: total {:.5} val {:?}", terms.total, validation_accuracy);
        epochs.push(EpochLog {
            epoch,
            terms,
            validation_accuracy,
        });
        Ok(())
    })?;
    let last = evaluate_objective(&network, data, cfg)?;
    if !last.total.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    let trained = SurrogateModel {
        network,
        target_class: model.target_class.clone(),
        head_seed: model.head_seed,
    };
    Ok((
        trained,
        TrainingLog {
            config: cfg.clone(),
            initial,
            epochs,
            last,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub loss: f64,
    pub accuracy: f64,
    pub total: usize,
}

fn evaluate_network(network: &(impl Classifier + ?Sized), scenario: &ValidationScenario) -> Result<AccuracyReport> {
    if scenario.is_empty() {
        return Err(Error::invalid("validation scenario is empty"));
    }
    let pairs: Vec<(&Image, usize)> = scenario.labelled().collect();
    let results: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|(img, label)| {
            let logits = network.logits(img)?;
            let (loss, _) = cross_entropy(&logits, *label);
            Ok((loss, argmax(&logits) == *label))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    Ok(AccuracyReport {
        loss: results.iter().map(|r| r.0).sum::<f64>() / n,
        accuracy: results.iter().filter(|r| r.1).count() as f64 / n,
        total: results.len(),
    })
}

/// Mean cross-entropy and argmax accuracy on a validation scenario.
pub fn evaluate_validation(model: &(impl Classifier + ?Sized), scenario: &ValidationScenario) -> Result<AccuracyReport> {
    evaluate_network(model, scenario)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
