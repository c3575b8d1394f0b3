//! End-to-end run on the synthetic shapes dataset, printing timings and scores.
//!
//! `cargo run --release -p ucbs-core --example desk_pipeline -- [base_epochs] [epochs] [lr]`

use std::time::Instant;

use ucbs_core::cnn::{Architecture, SmallCnn};
use ucbs_core::concepts::extract_local;
use ucbs_core::dataset::{build_auxiliary_dataset, make_validation_scenarios};
use ucbs_core::metrics::{completeness, EvalSample};
use ucbs_core::surrogate::{adapt_to_binary, evaluate_validation, fine_tune, train_supervised};
use ucbs_core::synth::{generate, SynthConfig};
use ucbs_core::{slic_segment, Image, SlicParams, TrainingConfig};

fn main() -> ucbs_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (base_epochs, epochs, lr) = (arg(1, 4.0) as usize, arg(2, 5.0) as usize, arg(3, 0.01));
    let t = Instant::now();
    let split = generate(&SynthConfig::default())?;
    let target = split.class_names[0].clone();
    let imgs = |v: &[ucbs_core::synth::SyntheticSample]| -> Vec<Image> { v.iter().map(|s| s.image.clone()).collect() };
    let (tr0, tr1) = (imgs(&split.train[0]), imgs(&split.train[1]));
    let (va0, va1) = (imgs(&split.val[0]), imgs(&split.val[1]));
    println!("synth {:?}", t.elapsed());

    let base = SmallCnn::new(Architecture::desk(2), 1)?;
    let labelled: Vec<(&Image, usize)> = tr0.iter().map(|i| (i, 0)).chain(tr1.iter().map(|i| (i, 1))).collect();
    let cfg = TrainingConfig { epochs: base_epochs, learning_rate: lr, ..Default::default() };
    let (base, losses) = train_supervised(&base, &labelled, &cfg)?;
    println!("base {:?} losses {:?}", t.elapsed(), losses);

    let slic = SlicParams::with_k(16);
    let data = build_auxiliary_dataset(&target, &tr0, &tr1, 20, &slic, 200, 3)?;
    println!("aux {:?} sp {}", t.elapsed(), data.superpixels.len());
    let scen = make_validation_scenarios(&va0, &va1, 100, 5)?;
    for l1 in [1.0, 0.0] {
        let s = adapt_to_binary(&base, &target, 11)?;
        let tc = TrainingConfig { lambda1: l1, epochs, learning_rate: lr, ..Default::default() };
        let (m, log) = fine_tune(&s, &data, &tc, Some(&scen[1]))?;
        let accs: Vec<f64> = scen.iter().map(|v| evaluate_validation(&m, v).unwrap().accuracy).collect();
        println!("l1={l1} {:?} accs {accs:?} val {:?}", t.elapsed(), log.epochs.iter().map(|e| e.validation_accuracy.unwrap()).collect::<Vec<_>>());
        if l1 == 1.0 {
            let mut hits = 0;
            let mut samples = Vec::new();
            for s in &split.val[0] {
                let mask = slic_segment(&s.image, &slic)?;
                let local = extract_local(&m, &s.image, &mask, mask.count())?;
                let top = mask.segment_pixels(local.top[0].segment_index);
                let inter = top.iter().zip(&s.object_mask).filter(|(a, b)| **a && **b).count();
                let uni = top.iter().zip(&s.object_mask).filter(|(a, b)| **a || **b).count();
                if inter as f64 / uni as f64 >= 0.3 {
                    hits += 1;
                }
                samples.push(EvalSample::new(s.image.clone(), mask, &local.top, 1)?);
            }
            println!("iou hits {hits}/100 {:?}", t.elapsed());
            for size in [0, 1, 3, 100] {
                println!("completeness {size}: {:?}", completeness(&m, &samples, size));
            }
        }
    }
    Ok(())
}
