//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucbs_core::cnn::{cross_entropy, Architecture, SmallCnn};
use ucbs_core::concepts::{extract_local, rank_descending, ConceptScore};
use ucbs_core::dataset::{build_auxiliary_dataset, make_validation_scenarios};
use ucbs_core::kmeans::{kmeans, KMeansParams};
use ucbs_core::metrics::{
    auc, completeness, faithfulness, friedman_test, insertion_deletion_curve, perturbation_curve,
    pixelmap_to_concept_scores, sdc, sensitivity_n, ssc, ConceptSetSize, Curve, CurveMode, EvalSample,
};
use ucbs_core::segmentation::extract_superpixel_images;
use ucbs_core::surrogate::{adapt_to_binary, evaluate_validation, fine_tune, train_supervised};
use ucbs_core::synth::{generate, SynthConfig, SyntheticSample};
use ucbs_core::{slic_segment, Classifier, Image, SegmentMask, SlicParams, TrainingConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- fixtures

/// Smooth colour blobs over a gradient with a little noise.
fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, id: &str) -> Image {
    let blobs: Vec<(f32, f32, f32, [f32; 3])> = (0..rng.random_range(1..5))
        .map(|_| {
            (
                rng.random_range(0.0..h as f32),
                rng.random_range(0.0..w as f32),
                rng.random_range(4.0..(h.min(w) as f32 / 2.0)),
                [rng.random(), rng.random(), rng.random()],
            )
        })
        .collect();
    let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let mut px = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let mut c = base.map(|b| b * (0.6 + 0.4 * x as f32 / w as f32));
            for (by, bx, r, col) in &blobs {
                if (y as f32 - by).powi(2) + (x as f32 - bx).powi(2) < r * r {
                    c = *col;
                }
            }
            for v in c {
                px.push((v + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(h, w, 3, px, id).unwrap()
}

/// Logits `(bias, sum of weights of segments with any non-zero pixel)`.
struct Additive {
    mask: SegmentMask,
    weights: Vec<f64>,
    bias: f64,
}

impl Classifier for Additive {
    fn class_count(&self) -> usize {
        2
    }
    fn input_shape(&self) -> (usize, usize, usize) {
        (self.mask.height(), self.mask.width(), 1)
    }
    fn logits(&self, image: &Image) -> ucbs_core::Result<Vec<f64>> {
        let mut present = vec![false; self.mask.count()];
        for (i, &l) in self.mask.labels().iter().enumerate() {
            present[l as usize] |= image.pixels()[i] != 0.0;
        }
        let s = present.iter().zip(&self.weights).filter(|(p, _)| **p).map(|(_, w)| w).sum();
        Ok(vec![self.bias, s])
    }
}

/// `k` vertical 8x8 stripes of constant intensity.
fn stripes(k: usize) -> (Image, SegmentMask) {
    let (h, w) = (8, 8 * k);
    let labels = (0..h * w).map(|i| ((i % w) / 8) as u32).collect();
    let img = Image::new(h, w, 1, vec![0.5; h * w], format!("stripes{k}")).unwrap();
    (img, SegmentMask::from_labels(h, w, labels).unwrap())
}

fn ranked(scores: &[f64]) -> Vec<ConceptScore> {
    let all: Vec<ConceptScore> = scores
        .iter()
        .enumerate()
        .map(|(segment_index, &score)| ConceptScore {
            segment_index,
            score,
            parent_id: "p".into(),
        })
        .collect();
    rank_descending(&all)
}

fn small_arch(classes: usize) -> Architecture {
    Architecture {
        input_size: 32,
        in_channels: 3,
        widths: vec![4, 8, 8, 8],
        first_block_bias: false,
        classes,
    }
}

fn images(v: &[SyntheticSample]) -> Vec<Image> {
    v.iter().map(|s| s.image.clone()).collect()
}

// ---------------------------------------------------------------- criteria

fn partition_and_reconstruction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut segments = 0;
    for i in 0..200 {
        let (h, w) = (rng.random_range(32..=128), rng.random_range(32..=128));
        let k = [4, 16, 50][rng.random_range(0..3)];
        let img = random_image(&mut rng, h, w, &format!("r{i}"));
        let mask = ok(slic_segment(&img, &SlicParams::with_k(k)))?;
        ensure!(mask.labels().len() == h * w, "image {i}: label count");
        ensure!(mask.labels().iter().all(|&l| (l as usize) < mask.count()), "image {i}: label out of range");
        ensure!(mask.segment_sizes().iter().all(|&s| s > 0), "image {i}: empty segment");
        let sps = ok(extract_superpixel_images(&img, &mask))?;
        let mut cover = vec![0u32; h * w];
        let mut sum = vec![0f32; h * w * 3];
        for sp in &sps {
            for (p, &m) in sp.mask.iter().enumerate() {
                cover[p] += m as u32;
            }
            for (s, v) in sum.iter_mut().zip(sp.image.pixels()) {
                *s += v;
            }
        }
        ensure!(cover.iter().all(|&c| c == 1), "image {i}: a pixel is not covered exactly once");
        ensure!(
            sum.iter().zip(img.pixels()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "image {i} ({h}x{w}, k={k}): reconstruction differs"
        );
        segments += mask.count();
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(30), "took {t:.1?}");
    Ok(format!("200 images, {segments} segments, {t:.1?}"))
}

fn auxiliary_cardinality() -> Outcome {
    let split = ok(generate(&SynthConfig {
        size: 48,
        classes: 3,
        train_per_class: 30,
        val_per_class: 1,
        seed: 21,
    }))?;
    let target = images(&split.train[0]);
    let others: Vec<Image> = split.train[1..].iter().flat_map(|c| images(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..20 {
        let m = rng.random_range(1..=target.len());
        let k = rng.random_range(2..=40);
        let n_ood = rng.random_range(1..=others.len());
        let slic = SlicParams::with_k(k);
        let d = ok(build_auxiliary_dataset("c0", &target, &others, m, &slic, n_ood, trial))?;
        let brute: usize = d
            .provenance
            .segmented_ids
            .iter()
            .map(|id| {
                let img = target.iter().find(|i| &i.id == id).unwrap();
                slic_segment(img, &slic).unwrap().count()
            })
            .sum();
        ensure!(d.provenance.segmented_ids.len() == m, "trial {trial}: {} segmented, m = {m}", d.provenance.segmented_ids.len());
        ensure!(
            d.superpixels.len() == brute && d.provenance.superpixel_count == brute,
            "trial {trial} (m={m}, k={k}): {} superpixels, brute force {brute}",
            d.superpixels.len()
        );
    }
    Ok("20 configurations exact".into())
}

struct SmallSetup {
    data: ucbs_core::dataset::AuxiliaryDataset,
    surrogate: ucbs_core::SurrogateModel,
}

fn small_setup() -> Result<SmallSetup, String> {
    let split = ok(generate(&SynthConfig {
        size: 32,
        classes: 2,
        train_per_class: 30,
        val_per_class: 2,
        seed: 31,
    }))?;
    let target = split.class_names[0].clone();
    let data = ok(build_auxiliary_dataset(
        &target,
        &images(&split.train[0]),
        &images(&split.train[1]),
        8,
        &SlicParams::with_k(8),
        20,
        32,
    ))?;
    let base = ok(SmallCnn::new(small_arch(3), 33))?;
    let surrogate = ok(adapt_to_binary(&base, &target, 34))?;
    Ok(SmallSetup { data, surrogate })
}

fn loss_decomposition() -> Outcome {
    let s = small_setup()?;
    let (l1, l2) = (0.7, 1.3);
    let cfg = TrainingConfig {
        lambda1: l1,
        lambda2: l2,
        epochs: 4,
        batch_size: 8,
        seed: 35,
        ..Default::default()
    };
    let (_, log) = ok(fine_tune(&s.surrogate, &s.data, &cfg, None))?;
    let mut worst: f64 = 0.0;
    for (i, t) in log.epochs.iter().map(|e| &e.terms).chain([&log.initial, &log.last]).enumerate() {
        let (sp, ood) = (t.superpixel.ok_or("missing term")?, t.ood.ok_or("missing term")?);
        let err = (t.total - (t.original + l1 * sp + l2 * ood)).abs();
        ensure!(err <= 1e-6, "entry {i}: total off by {err:e}");
        worst = worst.max(err);
    }
    let zero = TrainingConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        ..cfg
    };
    let (tuned, zlog) = ok(fine_tune(&s.surrogate, &s.data, &zero, None))?;
    let originals: Vec<(&Image, usize)> = s.data.originals.iter().map(|i| (i, 1)).collect();
    let (plain, losses) = ok(train_supervised(&s.surrogate.network, &originals, &zero))?;
    ensure!(losses.len() == zlog.epochs.len(), "epoch counts differ");
    let mut zero_err: f64 = 0.0;
    for (e, l) in zlog.epochs.iter().zip(&losses) {
        let d = (e.terms.total - l).abs();
        ensure!(d <= 1e-6, "epoch {}: {} vs plain {l}", e.epoch, e.terms.total);
        zero_err = zero_err.max(d);
    }
    ensure!(tuned.network.backbone_checksum() == plain.backbone_checksum(), "zero-weight run weights differ");
    Ok(format!("max decomposition error {worst:.1e}, zero-weight loss diff {zero_err:.1e}"))
}

fn head_gradient_check() -> Outcome {
    let s = small_setup()?;
    let net = &s.surrogate.network;
    let img = &s.data.superpixels[0].image;
    let (_, grads) = ok(net.sample_gradient(img, 1, 1.0))?;
    let emb = ok(net.embed(img))?;
    let nw = net.head().weight.len();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let idx = rng.random_range(0..nw + net.head().bias.len());
        let loss_at = |delta: f64| {
            let mut head = net.head().clone();
            if idx < nw {
                head.weight[idx] += delta;
            } else {
                head.bias[idx - nw] += delta;
            }
            cross_entropy(&head.forward(&emb), 1).0
        };
        let eps = 1e-6;
        let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
        let analytic = if idx < nw { grads.head_weight[idx] } else { grads.head_bias[idx - nw] };
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = diff / scale.max(1e-8);
        // both sides below 1e-9 are treated as agreeing zeros
        ensure!(rel < 1e-4 || diff < 1e-9, "parameter {idx}: analytic {analytic} numeric {numeric}");
        if scale > 1e-6 {
            worst = worst.max(rel);
        }
    }
    Ok(format!("50 perturbations, max relative error {worst:.1e}"))
}

fn masked_region_zeros() -> Outcome {
    let s = small_setup()?;
    let net = &s.surrogate.network;
    ensure!(!net.architecture().first_block_bias, "first block must be bias-free");
    ensure!(s.data.superpixels.len() >= 50, "only {} superpixel images", s.data.superpixels.len());
    let mut checked = 0usize;
    for sp in s.data.superpixels.iter().take(50) {
        let img = &sp.image;
        let n = img.width();
        let (channels, side, act) = ok(net.first_block_output(img))?;
        let zero_at = |y: isize, x: isize| {
            y < 0 || x < 0 || y >= n as isize || x >= n as isize || img.pixel(y as usize * n + x as usize).iter().all(|v| *v == 0.0)
        };
        for py in 0..side as isize {
            for px in 0..side as isize {
                // 2x2 pool over 3x3 convolutions spans a 4x4 input window
                let dead = (2 * py - 1..=2 * py + 2).all(|y| (2 * px - 1..=2 * px + 2).all(|x| zero_at(y, x)));
                if dead {
                    checked += 1;
                    for ch in 0..channels {
                        let v = act[ch * side * side + py as usize * side + px as usize];
                        ensure!(v == 0.0, "{}: activation {v} at ({py},{px}) channel {ch}", img.id);
                    }
                }
            }
        }
    }
    ensure!(checked > 0, "no fully zero receptive fields found");
    Ok(format!("50 superpixel images, {checked} zero windows exact"))
}

/// Midpoint-rule integral of the piecewise-linear interpolant.
fn fine_grid_area(c: &Curve, steps: usize) -> f64 {
    (0..steps)
        .map(|i| {
            let x = (i as f64 + 0.5) / steps as f64;
            let j = c.xs.iter().rposition(|&v| v <= x).unwrap().min(c.xs.len() - 2);
            let t = (x - c.xs[j]) / (c.xs[j + 1] - c.xs[j]);
            c.ys[j] + t * (c.ys[j + 1] - c.ys[j])
        })
        .sum::<f64>()
        / steps as f64
}

fn prefix_scan(model: &Additive, img: &Image, mask: &SegmentMask, order: &[usize]) -> (ConceptSetSize, ConceptSetSize) {
    let k = order.len();
    let correct = |keep: &[bool]| {
        let l = model.logits(&img.masked(&mask.union_pixels(keep))).unwrap();
        l[1] > l[0]
    };
    let with = |j: usize, inside: bool| -> Vec<bool> { (0..k).map(|s| order[..j].contains(&s) == inside).collect() };
    let sufficient = (0..=k)
        .find(|&j| correct(&with(j, true)))
        .map_or(ConceptSetSize::Never(k + 1), ConceptSetSize::Found);
    let destroying = if !correct(&vec![true; k]) {
        ConceptSetSize::Undefined
    } else {
        (1..=k)
            .find(|&j| !correct(&with(j, false)))
            .map_or(ConceptSetSize::Never(k + 1), ConceptSetSize::Found)
    };
    (sufficient, destroying)
}

fn plain_lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Vec<usize> {
    let mut assign = vec![usize::MAX; points.len()];
    loop {
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                let d: Vec<f64> = centroids.iter().map(|c| p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()).collect();
                (0..d.len()).fold(0, |b, i| if d[i] < d[b] { i } else { b })
            })
            .collect();
        if next == assign {
            return assign;
        }
        assign = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                *centroid = (0..centroid.len())
                    .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                    .collect();
            }
        }
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    // trapezoid AUC
    for i in 0..20 {
        let mut xs: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).chain([0.0, 1.0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys = xs.iter().map(|_| rng.random::<f64>()).collect();
        let c = ok(Curve::new(xs, ys))?;
        let d = (auc(&c) - fine_grid_area(&c, 2_000_000)).abs();
        ensure!(d <= 1e-9, "curve {i}: AUC off by {d:e}");
    }
    // SSC / SDC
    for i in 0..50 {
        let k = rng.random_range(1..=12);
        let (img, mask) = stripes(k);
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = Additive {
            mask: mask.clone(),
            weights: weights.clone(),
            bias: rng.random_range(-1.0..1.5),
        };
        let scores: Vec<f64> = weights.iter().map(|w| w + rng.random_range(-0.3..0.3)).collect();
        let r = ranked(&scores);
        let order: Vec<usize> = r.iter().map(|c| c.segment_index).collect();
        let got = (ok(ssc(&model, &img, &mask, &r, 1))?, ok(sdc(&model, &img, &mask, &r, 1))?);
        let expect = prefix_scan(&model, &img, &mask, &order);
        ensure!(got == expect, "instance {i}: {got:?} vs scan {expect:?}");
    }
    // pixel map accumulation
    let (h, w) = (12, 10);
    let labels: Vec<u32> = (0..h * w).map(|i| ((i / w) / 6 * 2 + (i % w) / 5) as u32).collect();
    let mask = ok(SegmentMask::from_labels(h, w, labels))?;
    let map: Vec<f64> = (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
    for c in ok(pixelmap_to_concept_scores(&map, &mask, "m"))? {
        let naive: f64 = (0..h * w).filter(|&p| mask.labels()[p] as usize == c.segment_index).map(|p| map[p].abs()).sum();
        ensure!((c.score - naive).abs() <= 1e-9, "segment {}: {} vs {naive}", c.segment_index, c.score);
    }
    // k-means
    for trial in 0..30 {
        let n = rng.random_range(3..=12);
        let k = rng.random_range(1..=3.min(n));
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i % k) as f64 * 10.0 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let params = KMeansParams {
            tolerance: 0.0,
            ..KMeansParams::new(k, trial)
        };
        let r = ok(kmeans(&points, &params))?;
        ensure!(r.assignments == plain_lloyd(&points, r.initial_centroids.clone()), "k-means trial {trial} differs");
    }
    // Friedman
    let names = |t: usize| -> Vec<String> { (0..t).map(|i| format!("t{i}")).collect() };
    let monotone = vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6], vec![0.2, 0.7, 0.9]];
    let f = ok(friedman_test(&names(3), &monotone, 0.05))?;
    ensure!((f.statistic - 6.0).abs() <= 1e-9, "monotone statistic {}", f.statistic);
    for i in 0..100 {
        let t = rng.random_range(2..7);
        let n = rng.random_range(2..9);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..t).map(|_| rng.random_range(0..4) as f64).collect()).collect();
        let r = ok(friedman_test(&names(t), &m, 0.05))?;
        let sum: f64 = r.mean_ranks.iter().sum();
        ensure!((sum - (t * (t + 1)) as f64 / 2.0).abs() <= 1e-9, "matrix {i}: rank sum {sum}");
    }
    Ok("AUC, SSC/SDC (50), pixel map, k-means (30), Friedman 6.0 + 100 rank sums".into())
}

fn linear_model_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (img, mask) = stripes(12);
    let weights: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = Additive {
        mask: mask.clone(),
        weights: weights.clone(),
        bias: 0.0,
    };
    let mut lowest: f64 = 1.0;
    for n in 1..12 {
        let r = ok(sensitivity_n(&model, &img, &mask, &weights, n, 50, n as u64, 1))?;
        ensure!(r >= 0.999, "sensitivity-{n} = {r}");
        lowest = lowest.min(r);
    }
    let f = ok(faithfulness(&model, &img, &mask, &weights, 100, 7, 1))?;
    ensure!(f >= 0.999, "faithfulness = {f}");
    let best = auc(&ok(insertion_deletion_curve(&model, &img, &mask, &ranked(&weights), CurveMode::Insertion, 1))?);
    let mut order: Vec<usize> = (0..12).collect();
    let mut beaten = 0;
    for _ in 0..100 {
        order.shuffle(&mut rng);
        let a = auc(&ok(perturbation_curve(&model, &img, &mask, &order, CurveMode::Insertion, 1))?);
        ensure!(best >= a, "random order AUC {a} beats true order {best}");
        beaten += (best > a) as usize;
    }
    Ok(format!("min sensitivity-n {lowest:.6}, faithfulness {f:.6}, true-order AUC {best:.4} >= 100 random ({beaten} strictly)"))
}

struct Desk {
    split: ucbs_core::synth::SyntheticSplit,
    base: SmallCnn,
    data: ucbs_core::dataset::AuxiliaryDataset,
    scenarios: [ucbs_core::dataset::ValidationScenario; 3],
    slic: SlicParams,
}

const DESK_EPOCHS: usize = 8;

fn desk_setup() -> Result<Desk, String> {
    let split = ok(generate(&SynthConfig::default()))?;
    let (t0, t1) = (images(&split.train[0]), images(&split.train[1]));
    let labelled: Vec<(&Image, usize)> = t0.iter().map(|i| (i, 0)).chain(t1.iter().map(|i| (i, 1))).collect();
    let base_cfg = TrainingConfig {
        epochs: 4,
        ..Default::default()
    };
    let (base, _) = ok(train_supervised(&ok(SmallCnn::new(Architecture::desk(2), 1))?, &labelled, &base_cfg))?;
    let slic = SlicParams::with_k(16);
    let target = split.class_names[0].clone();
    let data = ok(build_auxiliary_dataset(&target, &t0, &t1, 20, &slic, 200, 3))?;
    // 100 other-class validation images exist, so the large scenario uses all of them
    let scenarios = ok(make_validation_scenarios(&images(&split.val[0]), &images(&split.val[1]), 100, 5))?;
    Ok(Desk {
        split,
        base,
        data,
        scenarios,
        slic,
    })
}

fn desk_surrogate(d: &Desk, lambda1: f64) -> Result<ucbs_core::SurrogateModel, String> {
    let s = ok(adapt_to_binary(&d.base, &d.data.target_class, 11))?;
    let cfg = TrainingConfig {
        lambda1,
        lambda2: 1.0,
        epochs: DESK_EPOCHS,
        ..Default::default()
    };
    Ok(ok(fine_tune(&s, &d.data, &cfg, None))?.0)
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn desk_end_to_end(d: &Desk, model: &ucbs_core::SurrogateModel, setup: Duration) -> Outcome {
    let start = Instant::now();
    let val_equal = ok(evaluate_validation(model, &d.scenarios[1]))?.accuracy;
    ensure!(val_equal >= 0.95, "val_equal accuracy {val_equal}");
    let tests = &d.split.val[0];
    let mut hits = 0;
    let mut samples = Vec::new();
    for s in tests {
        let mask = ok(slic_segment(&s.image, &d.slic))?;
        let local = ok(extract_local(model, &s.image, &mask, mask.count()))?;
        if iou(&mask.segment_pixels(local.top[0].segment_index), &s.object_mask) >= 0.3 {
            hits += 1;
        }
        samples.push(ok(EvalSample::new(s.image.clone(), mask, &local.top, 1))?);
    }
    let hit_rate = hits as f64 / tests.len() as f64;
    ensure!(hit_rate >= 0.7, "top-1 IoU >= 0.3 on {hits}/{} images", tests.len());
    let full = ok(completeness(model, &samples, usize::MAX))?;
    ensure!(full == 1.0, "completeness(all) = {full}");
    let (c1, c3) = (ok(completeness(model, &samples, 1))?, ok(completeness(model, &samples, 3))?);
    ensure!(c3 >= c1, "completeness(3) = {c3} < completeness(1) = {c1}");
    let total = setup + start.elapsed();
    ensure!(total <= Duration::from_secs(600), "took {total:.1?}");
    Ok(format!(
        "val_equal {val_equal:.3}, IoU hits {hits}/{}, completeness all {full} / 3 {c3:.3} / 1 {c1:.3}, {DESK_EPOCHS} epochs, {total:.1?}",
        tests.len()
    ))
}

fn superpixels_do_not_hurt(d: &Desk, with: &ucbs_core::SurrogateModel) -> Outcome {
    let without = desk_surrogate(d, 0.0)?;
    let mut parts = Vec::new();
    for s in &d.scenarios {
        let a = ok(evaluate_validation(with, s))?.accuracy;
        let b = ok(evaluate_validation(&without, s))?.accuracy;
        ensure!(a >= b - 0.02, "{}: {a:.3} with superpixels vs {b:.3} without", s.kind.name());
        parts.push(format!("{} {a:.3} vs {b:.3}", s.kind.name()));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------- CLI determinism

fn ucbs(cwd: &Path, args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ucbs"))
        .current_dir(cwd)
        .args(args)
        .env("UCBS_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "ucbs {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(())
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the whole command chain twice in sibling directories, with relative
/// paths and different thread counts, and compares every artifact.
fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let target = "c0_disk";
    let manifest = format!("build-data/aux_{target}.json");
    let val_dir = format!("synth/{target}/val");
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("synth", vec!["synth", "--train-per-class", "24", "--val-per-class", "12", "--seed", "3"]),
        ("build-data", vec!["build-data", "--data", "synth", "--target-class", target, "--m", "4", "--k", "8", "--n-ood", "10", "--seed", "3"]),
        (
            "train",
            vec![
                "train", "--data", "synth", "--manifest", &manifest, "--base-epochs", "1", "--epochs", "2", "--batch-size", "8", "--n-neg", "12",
                "--seed", "3",
            ],
        ),
        ("explain-local", vec!["explain-local", "--checkpoint", "train/surrogate.ckpt", "--images-dir", &val_dir, "--k", "8"]),
        (
            "explain-global",
            vec!["explain-global", "--checkpoint", "train/surrogate.ckpt", "--images-dir", &val_dir, "--k", "8", "--seed", "3"],
        ),
        (
            "evaluate",
            vec!["evaluate", "--checkpoint", "train/surrogate.ckpt", "--images-dir", &val_dir, "--k", "8", "--samples", "10", "--seed", "3"],
        ),
        ("rank", vec!["rank", "--matrix", "matrix.csv"]),
        (
            "report",
            vec![
                "report", "--mode", "misclassification", "--checkpoint", "train/surrogate.ckpt", "--data", "synth", "--global",
                "explain-global/global.json", "--k", "8",
            ],
        ),
    ];
    let runs = [(tmp.path().join("a"), "1"), (tmp.path().join("b"), "2")];
    for (dir, _) in &runs {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("matrix.csv"), "block,a,b,c\nx,0.9,0.7,0.8\ny,0.8,0.6,0.7\nz,0.95,0.5,0.9\nw,0.7,0.72,0.6\n")
            .map_err(|e| e.to_string())?;
    }
    let mut json_files = 0;
    let mut all_files = 0;
    for (name, args) in &commands {
        for (dir, threads) in &runs {
            let mut full = args.clone();
            full.extend(["--out", name]);
            ucbs(dir, &full, threads)?;
        }
        let a = files_under(&runs[0].0.join(name));
        let b = files_under(&runs[1].0.join(name));
        ensure!(a.keys().eq(b.keys()), "{name}: different file sets");
        for (p, bytes) in &a {
            ensure!(&b[p] == bytes, "{name}: {} differs between runs", p.display());
            json_files += (p.extension().is_some_and(|e| e == "json")) as usize;
        }
        ensure!(a.contains_key(Path::new("run.json")), "{name}: no run.json");
        all_files += a.len();
    }
    Ok(format!("8 commands, {json_files} JSON of {all_files} files byte-identical across reruns"))
}

// ---------------------------------------------------------------- driver

fn report(results: &mut Vec<bool>, n: usize, name: &str, outcome: Outcome) {
    match outcome {
        Ok(detail) => {
            println!("PASS {n:>2} {name}: {detail}");
            results.push(true);
        }
        Err(why) => {
            println!("FAIL {n:>2} {name}: {why}");
            results.push(false);
        }
    }
}

fn main() {
    let mut results = Vec::new();
    report(&mut results, 1, "segmentation partition and reconstruction", partition_and_reconstruction());
    report(&mut results, 2, "auxiliary dataset cardinality", auxiliary_cardinality());
    report(&mut results, 3, "objective decomposition", loss_decomposition());
    report(&mut results, 4, "head gradient check", head_gradient_check());
    report(&mut results, 5, "masked-region zero activations", masked_region_zeros());
    report(&mut results, 6, "metric oracles", metric_oracles());
    report(&mut results, 7, "additive-model sanity", linear_model_sanity());

    let start = Instant::now();
    let desk = desk_setup().and_then(|d| desk_surrogate(&d, 1.0).map(|m| (d, m)));
    let setup = start.elapsed();
    match &desk {
        Ok((d, m)) => {
            report(&mut results, 8, "desk-scale end to end", desk_end_to_end(d, m, setup));
            report(&mut results, 9, "superpixel samples keep accuracy", superpixels_do_not_hurt(d, m));
        }
        Err(e) => {
            report(&mut results, 8, "desk-scale end to end", Err(e.clone()));
            report(&mut results, 9, "superpixel samples keep accuracy", Err(e.clone()));
        }
    }
    report(&mut results, 10, "CLI determinism", cli_determinism());

    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
