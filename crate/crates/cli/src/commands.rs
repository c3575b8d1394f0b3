use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use ucbs_core::cnn::{Architecture, CheckpointMeta, SmallCnn};
use ucbs_core::concepts::{extract_global, extract_local, rank_descending, render_score_map, score_concepts, GlobalParams};
use ucbs_core::dataset::{
    build_auxiliary_dataset, list_classes, load_manifest, load_other_classes, load_split, make_validation_scenarios,
    save_manifest,
};
use ucbs_core::metrics::{
    accuracy_curve, completeness, derive_seed, faithfulness, friedman_test, insertion_deletion_curve, scores_by_segment,
    sdc, sensitivity_n, sensitivity_sizes, ssc, summarize_set_sizes, ConceptSetSize, CurveMode, EvalSample,
};
use ucbs_core::report::{misclassification_report, MisclassificationReport, Outcome};
use ucbs_core::segmentation::{save_mask_with_sidecar, slic_segment, superpixel_image};
use ucbs_core::surrogate::{adapt_to_binary, evaluate_validation, fine_tune, train_supervised};
use ucbs_core::synth::{generate, write_split, SynthConfig};
use ucbs_core::{Error, Image, SurrogateModel, TrainingConfig, TARGET_INDEX};

use crate::args::*;
use crate::error::CliError;
use crate::html;
use crate::inputs::{collect_paths, load_all, prepare, slic_params};
use crate::run::OutputDir;

pub const METRIC_REPORT_SCHEMA: &str = "ucbs.metric-report";
pub const METRIC_REPORT_VERSION: u32 = 1;

type Res<T> = Result<T, CliError>;

pub fn synth(a: &SynthArgs, out: &mut OutputDir) -> Res<()> {
    let cfg = SynthConfig {
        size: a.size,
        classes: a.classes,
        train_per_class: a.train_per_class,
        val_per_class: a.val_per_class,
        seed: a.seed,
    };
    let split = generate(&cfg)?;
    write_split(&split, out.root())?;
    out.write_json(
        "dataset.json",
        &json!({
            "classes": split.class_names,
            "size": a.size,
            "train_per_class": a.train_per_class,
            "val_per_class": a.val_per_class,
        }),
    )?;
    Ok(())
}

fn load_train_split(data: &Path, target: &str, shape: (usize, usize, usize)) -> Res<(Vec<Image>, Vec<Image>)> {
    let prep = |v: Vec<Image>| -> Res<Vec<Image>> { v.into_iter().map(|i| prepare(i, shape)).collect() };
    let targets = prep(load_split(data, target, "train")?)?;
    let others = prep(load_other_classes(data, target, "train")?)?;
    Ok((targets, others))
}

pub fn build_data(a: &BuildDataArgs, out: &mut OutputDir) -> Res<()> {
    let (targets, others) = {
        let t = load_split(&a.data, &a.target_class, "train")?;
        let o = load_other_classes(&a.data, &a.target_class, "train")?;
        (t, o)
    };
    if targets.is_empty() {
        return Err(CliError::usage(format!("no training images for class {}", a.target_class)));
    }
    let slic = slic_params(&a.slic, a.seed);
    let dataset = build_auxiliary_dataset(&a.target_class, &targets, &others, a.m, &slic, a.n_ood, a.seed)?;
    let rel = format!("aux_{}.json", a.target_class);
    let path = out.path(&rel)?;
    save_manifest(&dataset, &path)?;
    out.record(path);
    let masks = out.root().join(format!("aux_{}_masks", a.target_class));
    if masks.is_dir() {
        for entry in std::fs::read_dir(&masks).map_err(|e| CliError::io(&masks, e))? {
            out.record(entry.map_err(|e| CliError::io(&masks, e))?.path());
        }
    }
    Ok(())
}

pub fn train(a: &TrainArgs, out: &mut OutputDir) -> Res<()> {
    let classes = list_classes(&a.data)?;
    let loaded = match &a.manifest {
        Some(p) => {
            let m = load_manifest(p)?;
            for w in &m.warnings {
                log::warn!("{w}");
            }
            Some(m.dataset)
        }
        None => None,
    };
    let target = match (&a.target_class, &loaded) {
        (Some(t), Some(d)) if *t != d.target_class => {
            return Err(CliError::usage(format!(
                "--target-class {t} disagrees with the manifest's {}",
                d.target_class
            )))
        }
        (Some(t), _) => t.clone(),
        (None, Some(d)) => d.target_class.clone(),
        (None, None) => return Err(CliError::usage("--target-class is required without --manifest")),
    };
    if !classes.contains(&target) {
        return Err(CliError::usage(format!("class {target} not found under {}", a.data.display())));
    }

    let mut base_log = None;
    let base = match &a.base {
        Some(p) => SmallCnn::load(p)?.0,
        None => {
            let arch = Architecture {
                input_size: a.input_size,
                ..Architecture::desk(classes.len())
            };
            let net = SmallCnn::new(arch, a.seed)?;
            let shape = (a.input_size, a.input_size, 3);
            let mut data = Vec::new();
            for (ci, c) in classes.iter().enumerate() {
                for img in load_split(&a.data, c, "train")? {
                    data.push((prepare(img, shape)?, ci));
                }
            }
            let pairs: Vec<(&Image, usize)> = data.iter().map(|(i, l)| (i, *l)).collect();
            let cfg = TrainingConfig {
                epochs: a.base_epochs,
                learning_rate: a.lr,
                momentum: a.momentum,
                batch_size: a.batch_size,
                seed: a.seed,
                ..TrainingConfig::default()
            };
            let (trained, losses) = train_supervised(&net, &pairs, &cfg)?;
            let meta = CheckpointMeta {
                target_class: None,
                class_names: classes.clone(),
                head_seed: None,
            };
            let p = out.path("base.ckpt")?;
            trained.save(&meta, &p)?;
            out.record(p);
            base_log = Some(json!({ "classes": classes, "epochs": a.base_epochs, "losses": losses }));
            trained
        }
    };
    let shape = {
        let arch = base.architecture();
        (arch.input_size, arch.input_size, arch.in_channels)
    };
    let surrogate = adapt_to_binary(&base, &target, derive_seed(a.seed, "head"))?;

    let dataset = match loaded {
        Some(d) => d,
        None => {
            let (targets, others) = load_train_split(&a.data, &target, shape)?;
            build_auxiliary_dataset(&target, &targets, &others, a.m, &slic_params(&a.slic, a.seed), a.n_ood, a.seed)?
        }
    };

    let prep = |v: Vec<Image>| -> Res<Vec<Image>> { v.into_iter().map(|i| prepare(i, shape)).collect() };
    let target_val = prep(load_split(&a.data, &target, "val")?)?;
    let other_val = prep(load_other_classes(&a.data, &target, "val")?)?;
    let n_neg = a.n_neg.min(other_val.len());
    if n_neg < a.n_neg {
        log::warn!("only {} other-class validation images; n_neg reduced from {}", other_val.len(), a.n_neg);
    }
    let scenarios = make_validation_scenarios(&target_val, &other_val, n_neg, a.seed)?;

    let cfg = TrainingConfig {
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        epochs: a.epochs,
        learning_rate: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let (trained, log) = fine_tune(&surrogate, &dataset, &cfg, Some(&scenarios[1]))?;
    let p = out.path("surrogate.ckpt")?;
    trained.save(&p)?;
    out.record(p);
    out.write_json(
        "training_log.json",
        &json!({
            "target_class": target,
            "dataset": dataset.provenance,
            "base": base_log,
            "fine_tune": log,
            "backbone_checksum": trained.network.backbone_checksum(),
            "head_checksum": trained.network.head_checksum(),
        }),
    )?;
    let mut val = BTreeMap::new();
    for s in &scenarios {
        val.insert(
            s.kind.name(),
            json!({
                "positives": s.positives.len(),
                "negatives": s.negatives.len(),
                "result": evaluate_validation(&trained, s)?,
            }),
        );
    }
    out.write_json("validation.json", &json!({ "target_class": target, "n_neg": n_neg, "scenarios": val }))?;
    Ok(())
}

fn write_mask(out: &mut OutputDir, mask: &ucbs_core::SegmentMask, slic: &ucbs_core::SlicParams, id: &str) -> Res<()> {
    let dir = out.path("masks/x")?.parent().unwrap().to_path_buf();
    let png = save_mask_with_sidecar(mask, slic, &dir, id)?;
    out.record(png.clone());
    out.record(png.with_extension("json"));
    Ok(())
}

pub fn explain_local(a: &ExplainLocalArgs, out: &mut OutputDir) -> Res<()> {
    let model = SurrogateModel::load(&a.checkpoint)?;
    let paths = collect_paths(&a.image, a.images_dir.as_deref())?;
    let images = load_all(&paths, &model)?;
    let slic = slic_params(&a.slic, 0);
    let results: Vec<_> = images
        .par_iter()
        .map(|img| {
            let mask = slic_segment(img, &slic)?;
            let local = extract_local(&model, img, &mask, a.p)?;
            let logits = model.predict_logits(img)?;
            Ok((mask, local, logits))
        })
        .collect::<Result<_, Error>>()?;
    for (img, (mask, local, logits)) in images.iter().zip(results) {
        out.write_json(
            &format!("{}.json", img.id),
            &json!({
                "image_id": img.id,
                "target_class": model.target_class,
                "segment_count": mask.count(),
                "logits": logits,
                "top": local.top,
                "all_scores": local.all_scores,
            }),
        )?;
        let heat = out.path(&format!("{}_heatmap.png", img.id))?;
        render_score_map(img, &mask, &local.all_scores, &heat)?;
        out.record(heat);
        write_mask(out, &mask, &slic, &img.id)?;
    }
    Ok(())
}

pub fn explain_global(a: &ExplainGlobalArgs, out: &mut OutputDir) -> Res<()> {
    let model = SurrogateModel::load(&a.checkpoint)?;
    let paths = collect_paths(&[], Some(&a.images_dir))?;
    let images = load_all(&paths, &model)?;
    let slic = slic_params(&a.slic, a.seed);
    let params = GlobalParams {
        p: a.p,
        clusters: a.clusters,
        g: a.g,
        r: a.r,
        seed: a.seed,
    };
    let (global, locals) = extract_global(&model, &model.target_class, &images, &slic, &params)?;
    out.write_json("global.json", &global)?;
    out.write_json("local.json", &locals)?;
    let by_id: BTreeMap<&str, (&Image, &ucbs_core::SegmentMask)> = images
        .iter()
        .zip(&locals)
        .map(|(img, l)| (img.id.as_str(), (img, l.mask.as_ref().expect("extract_local keeps the mask"))))
        .collect();
    for (rank, cluster) in global.clusters.iter().enumerate() {
        for (j, rep) in cluster.representatives.iter().enumerate() {
            let (img, mask) = by_id[rep.image_id.as_str()];
            let sp = superpixel_image(img, mask, rep.segment_index);
            let p = out.path(&format!("concepts/cluster{rank}_rep{j}_{}_{}.png", rep.image_id, rep.segment_index))?;
            sp.image.save_png(&p)?;
            out.record(p);
        }
    }
    Ok(())
}

/// Resolves `1,3,all` style sizes; `all` maps to `usize::MAX`.
fn completeness_sizes(raw: &[String]) -> Res<Vec<(String, usize)>> {
    raw.iter()
        .map(|s| {
            let s = s.trim();
            if s.eq_ignore_ascii_case("all") {
                Ok(("all".to_string(), usize::MAX))
            } else {
                s.parse::<usize>()
                    .map(|n| (n.to_string(), n))
                    .map_err(|_| CliError::usage(format!("invalid completeness size {s:?}")))
            }
        })
        .collect()
}

#[derive(Serialize)]
struct PerImage {
    image_id: String,
    segments: usize,
    insertion_auc: Option<f64>,
    deletion_auc: Option<f64>,
    sensitivity_n_mean: Option<f64>,
    faithfulness: Option<f64>,
    ssc: Option<ConceptSetSize>,
    sdc: Option<ConceptSetSize>,
}

/// `None` for correlations that are undefined on this image.
fn defined(r: ucbs_core::Result<f64>) -> ucbs_core::Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut s, mut n, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                s += v;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    ((n > 0).then(|| s / n as f64), undefined)
}

pub fn evaluate(a: &EvaluateArgs, out: &mut OutputDir) -> Res<()> {
    let model = SurrogateModel::load(&a.checkpoint)?;
    let paths = collect_paths(&[], Some(&a.images_dir))?;
    let images = load_all(&paths, &model)?;
    let slic = slic_params(&a.slic, a.seed);
    let sizes = completeness_sizes(&a.completeness_sizes)?;
    let want = |m: MetricName| a.metrics.contains(&m);
    let t = TARGET_INDEX;

    let samples: Vec<EvalSample> = images
        .par_iter()
        .map(|img| {
            let mask = slic_segment(img, &slic)?;
            let scores = score_concepts(&model, img, &mask)?;
            EvalSample::new(img.clone(), mask, &rank_descending(&scores), t)
        })
        .collect::<Result<_, Error>>()?;

    let per_image: Vec<(PerImage, Vec<(usize, Option<f64>)>)> = samples
        .par_iter()
        .map(|s| {
            let img = &s.image;
            let scores = score_concepts(&model, img, &s.mask)?;
            let ranked = rank_descending(&scores);
            let by_seg = scores_by_segment(&scores, s.mask.count())?;
            let seed = derive_seed(a.seed, &img.id);
            let auc_of = |mode| -> ucbs_core::Result<f64> {
                Ok(ucbs_core::metrics::auc(&insertion_deletion_curve(&model, img, &s.mask, &ranked, mode, t)?))
            };
            let mut sens = Vec::new();
            if want(MetricName::Sensn) {
                for n in sensitivity_sizes(s.mask.count()) {
                    sens.push((n, defined(sensitivity_n(&model, img, &s.mask, &by_seg, n, a.samples, seed ^ n as u64, t))?));
                }
            }
            let row = PerImage {
                image_id: img.id.clone(),
                segments: s.mask.count(),
                insertion_auc: want(MetricName::Insertion).then(|| auc_of(CurveMode::Insertion)).transpose()?,
                deletion_auc: want(MetricName::Deletion).then(|| auc_of(CurveMode::Deletion)).transpose()?,
                sensitivity_n_mean: mean_defined(sens.iter().map(|x| x.1)).0,
                faithfulness: if want(MetricName::Faith) {
                    defined(faithfulness(&model, img, &s.mask, &by_seg, a.samples, seed, t))?
                } else {
                    None
                },
                ssc: want(MetricName::Ssc).then(|| ssc(&model, img, &s.mask, &ranked, t)).transpose()?,
                sdc: want(MetricName::Sdc).then(|| sdc(&model, img, &s.mask, &ranked, t)).transpose()?,
            };
            Ok((row, sens))
        })
        .collect::<Result<_, Error>>()?;

    let mut metrics = serde_json::Map::new();
    for (name, mode) in [(MetricName::Insertion, CurveMode::Insertion), (MetricName::Deletion, CurveMode::Deletion)] {
        if want(name) {
            let acc = accuracy_curve(&model, &samples, mode)?;
            let (mean, _) = mean_defined(per_image.iter().map(|r| match mode {
                CurveMode::Insertion => r.0.insertion_auc,
                CurveMode::Deletion => r.0.deletion_auc,
            }));
            metrics.insert(
                serde_json::to_value(name).map_err(Error::from)?.as_str().unwrap().to_string(),
                json!({ "accuracy_auc": acc.auc, "accuracy_curve": acc.curve, "mean_probability_auc": mean }),
            );
        }
    }
    if want(MetricName::Sensn) {
        let mut by_n: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
        for (_, sens) in &per_image {
            for (n, v) in sens {
                by_n.entry(*n).or_default().push(*v);
            }
        }
        let curve: Vec<Value> = by_n
            .iter()
            .map(|(n, vs)| {
                let (mean, undefined) = mean_defined(vs.iter().copied());
                json!({ "n": n, "mean": mean, "images": vs.len(), "undefined": undefined })
            })
            .collect();
        let (mean, undefined) = mean_defined(per_image.iter().map(|r| r.0.sensitivity_n_mean));
        metrics.insert("sensn".into(), json!({ "mean": mean, "undefined_images": undefined, "by_n": curve }));
    }
    if want(MetricName::Faith) {
        let (mean, undefined) = mean_defined(per_image.iter().map(|r| r.0.faithfulness));
        metrics.insert("faith".into(), json!({ "mean": mean, "undefined_images": undefined }));
    }
    for (name, key) in [(MetricName::Ssc, "ssc"), (MetricName::Sdc, "sdc")] {
        if want(name) {
            let values: Vec<ConceptSetSize> = per_image
                .iter()
                .filter_map(|r| if key == "ssc" { r.0.ssc } else { r.0.sdc })
                .collect();
            metrics.insert(key.into(), serde_json::to_value(summarize_set_sizes(&values)).map_err(Error::from)?);
        }
    }
    if want(MetricName::Completeness) {
        let mut c = serde_json::Map::new();
        for (label, size) in &sizes {
            let v = match completeness(&model, &samples, *size) {
                Ok(v) => json!(v),
                Err(Error::UndefinedRatio(msg)) => json!({ "undefined": msg }),
                Err(e) => return Err(e.into()),
            };
            c.insert(label.clone(), v);
        }
        metrics.insert("completeness".into(), Value::Object(c));
    }

    out.write_json(
        "report.json",
        &json!({
            "schema": METRIC_REPORT_SCHEMA,
            "version": METRIC_REPORT_VERSION,
            "target_class": model.target_class,
            "images": samples.len(),
            "metrics": metrics,
        }),
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Csv {
        path: out.root().join("per_image.csv"),
        message: e.to_string(),
    };
    w.write_record(["image_id", "segments", "insertion_auc", "deletion_auc", "sensitivity_n_mean", "faithfulness", "ssc", "sdc"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let size = |v: Option<ConceptSetSize>| match v {
        Some(ConceptSetSize::Found(n)) => n.to_string(),
        Some(ConceptSetSize::Never(n)) => format!("never({n})"),
        Some(ConceptSetSize::Undefined) => "undefined".into(),
        None => String::new(),
    };
    for (r, _) in &per_image {
        w.write_record([
            r.image_id.clone(),
            r.segments.to_string(),
            opt(r.insertion_auc),
            opt(r.deletion_auc),
            opt(r.sensitivity_n_mean),
            opt(r.faithfulness),
            size(r.ssc),
            size(r.sdc),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv {
        path: out.root().join("per_image.csv"),
        message: e.to_string(),
    })?;
    out.write_bytes("per_image.csv", &bytes)?;
    Ok(())
}

/// Reads `block,<treatment>...` rows.
pub fn read_matrix(path: &Path) -> Res<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let csv_err = |message: String| CliError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, std::io::Error::new(io.kind(), io.to_string())),
        _ => csv_err(e.to_string()),
    })?;
    let header = r.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() < 3 {
        return Err(csv_err("need a block column and at least two treatments".into()));
    }
    let treatments: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let (mut blocks, mut rows) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        blocks.push(rec.get(0).unwrap_or_default().trim().to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| csv_err(format!("row {}: {v:?} is not a number", i + 1)))
            })
            .collect::<Res<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((treatments, blocks, rows))
}

pub fn rank(a: &RankArgs, out: &mut OutputDir) -> Res<()> {
    let (treatments, blocks, rows) = read_matrix(&a.matrix)?;
    let result = friedman_test(&treatments, &rows, a.alpha)?;
    out.write_json(
        "ranking.json",
        &json!({
            "blocks": blocks,
            "result": result,
            "mean_rank": result.rank_map(),
        }),
    )?;
    Ok(())
}

/// Median of a non-empty slice.
fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn report(a: &ReportArgs, out: &mut OutputDir) -> Res<()> {
    let ReportMode::Misclassification = a.mode;
    let model = SurrogateModel::load(&a.checkpoint)?;
    let global = match &a.global {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(serde_json::from_str::<ucbs_core::concepts::GlobalExplanation>(&text).map_err(Error::from)?)
        }
        None => None,
    };
    let shape = ucbs_core::Classifier::input_shape(&model);
    let mut images = Vec::new();
    for class in list_classes(&a.data)? {
        let mut imgs = load_split(&a.data, &class, &a.split)?;
        if let Some(n) = a.limit_per_class {
            imgs.truncate(n);
        }
        for img in imgs {
            images.push(prepare(img, shape)?);
        }
    }
    if images.is_empty() {
        return Err(CliError::usage(format!("no {} images under {}", a.split, a.data.display())));
    }
    let slic = slic_params(&a.slic, 0);
    let results: Vec<(ucbs_core::SegmentMask, MisclassificationReport)> = images
        .par_iter()
        .map(|img| {
            let mask = slic_segment(img, &slic)?;
            let r = misclassification_report(&model, img, &mask, a.p, global.as_ref())?;
            Ok((mask, r))
        })
        .collect::<Result<_, Error>>()?;

    let mut counts: BTreeMap<&str, usize> = ["TP", "TN", "FP", "FN"].iter().map(|k| (*k, 0)).collect();
    for (_, r) in &results {
        *counts.get_mut(r.outcome.label()).unwrap() += 1;
    }
    let mut tp: Vec<f64> = results
        .iter()
        .filter(|(_, r)| r.outcome == Outcome::Tp)
        .filter_map(|(_, r)| r.mean_nearest_distance())
        .collect();
    let tp_median = median(&mut tp);
    let fn_dist: Vec<f64> = results
        .iter()
        .filter(|(_, r)| r.outcome == Outcome::Fn)
        .filter_map(|(_, r)| r.mean_nearest_distance())
        .collect();
    let fn_above = tp_median
        .filter(|_| !fn_dist.is_empty())
        .map(|m| fn_dist.iter().filter(|d| **d > m).count() as f64 / fn_dist.len() as f64);

    let mut cards = Vec::new();
    for (img, (mask, r)) in images.iter().zip(&results) {
        let file = format!("heatmaps/{}_{}.png", r.class_label, r.image_id);
        let path = out.path(&file)?;
        let scores = ucbs_core::concepts::score_concepts(&model, img, mask)?;
        render_score_map(img, mask, &scores, &path)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.record(path);
        if r.outcome.is_error() {
            cards.push(html::Card {
                report: r,
                png: bytes,
            });
        }
    }
    let summary = json!({
        "counts": counts,
        "tp_median_distance": tp_median,
        "fn_with_distance": fn_dist.len(),
        "fn_above_tp_median": fn_above,
    });
    let reports: Vec<&MisclassificationReport> = results.iter().map(|(_, r)| r).collect();
    out.write_json(
        "report.json",
        &json!({
            "mode": a.mode,
            "target_class": model.target_class,
            "split": a.split,
            "summary": summary,
            "images": reports,
        }),
    )?;
    let page = html::render(&model.target_class, &summary, &cards);
    out.write_bytes("index.html", page.as_bytes())?;
    Ok(())
}
