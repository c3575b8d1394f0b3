//! Synthetic shapes-on-noise images with known object masks.
//!
//! Each class pairs a shape with a hue band. Backgrounds are per-pixel colour
//! noise around a random gray level, so every class shares the same
//! background statistics and only the planted object carries the class.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Square,
    Triangle,
    Cross,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
        }
    }

    pub fn for_class(index: usize) -> Shape {
        [Shape::Disk, Shape::Square, Shape::Triangle, Shape::Cross][index % 4]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 64,
            classes: 2,
            train_per_class: 200,
            val_per_class: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: Image,
    pub object_mask: Vec<bool>,
    pub class_index: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub class_names: Vec<String>,
    /// `train[c]` holds the training samples of class `c`.
    pub train: Vec<Vec<SyntheticSample>>,
    pub val: Vec<Vec<SyntheticSample>>,
}

/// Hue centre of a class, spread around the colour wheel.
fn class_hue(class: usize, classes: usize) -> f64 {
    (class as f64 / classes.max(1) as f64) * 360.0
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn inside(shape: Shape, y: f64, x: f64, cy: f64, cx: f64, r: f64) -> bool {
    let (dy, dx) = (y - cy, x - cx);
    match shape {
        Shape::Disk => dy * dy + dx * dx <= r * r,
        Shape::Square => dy.abs() <= r * 0.85 && dx.abs() <= r * 0.85,
        Shape::Triangle => {
            // apex up, base at cy + r
            dy <= r * 0.8 && dy >= -r && dx.abs() <= (dy + r) * 0.6
        }
        Shape::Cross => {
            let arm = r * 0.4;
            (dy.abs() <= arm && dx.abs() <= r) || (dx.abs() <= arm && dy.abs() <= r)
        }
    }
}

/// Draws one sample of `class`.
pub fn generate_sample(
    rng: &mut impl Rng,
    size: usize,
    class: usize,
    classes: usize,
    id: String,
) -> SyntheticSample {
    let shape = Shape::for_class(class);
    let base: f64 = rng.random_range(0.25..0.55);
    let hue = class_hue(class, classes) + rng.random_range(-20.0..20.0);
    let color = hsv_to_rgb(hue, rng.random_range(0.75..1.0), rng.random_range(0.8..1.0));
    let s = size as f64;
    let r = rng.random_range(0.14 * s..0.2 * s);
    let margin = r + 1.0;
    let cy = rng.random_range(margin..s - margin);
    let cx = rng.random_range(margin..s - margin);

    // smooth background variation plus mild per-pixel grain
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let freq: f64 = rng.random_range(1.0..3.0) * std::f64::consts::TAU / s;
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (angle.cos() * freq, angle.sin() * freq, phase, rng.random_range(0.04..0.1))
        })
        .collect();
    let mut data = Vec::with_capacity(size * size * 3);
    let mut object_mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let hit = inside(shape, y as f64, x as f64, cy, cx, r);
            let field: f64 = waves
                .iter()
                .map(|(fy, fx, ph, amp)| amp * (fy * y as f64 + fx * x as f64 + ph).sin())
                .sum();
            object_mask.push(hit);
            for ch in 0..3 {
                let v = if hit {
                    color[ch] + rng.random_range(-0.04..0.04)
                } else {
                    base + field + rng.random_range(-0.06..0.06)
                };
                data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let image = Image::from_u8(size, size, 3, &data, id)
        .expect("generated pixels are valid")
        .with_class(format!("c{class}_{}", shape.name()));
    SyntheticSample {
        image,
        object_mask,
        class_index: class,
    }
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes)
        .map(|c| format!("c{c}_{}", Shape::for_class(c).name()))
        .collect()
}

/// Generates train and validation splits for every class.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticSplit> {
    if cfg.classes < 2 {
        return Err(Error::invalid("synthetic data needs at least 2 classes"));
    }
    if cfg.size < 16 {
        return Err(Error::invalid("synthetic image size must be at least 16"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names = class_names(cfg.classes);
    let split = |n: usize, tag: &str, rng: &mut ChaCha8Rng| -> Vec<Vec<SyntheticSample>> {
        (0..cfg.classes)
            .map(|c| {
                (0..n)
                    .map(|i| generate_sample(rng, cfg.size, c, cfg.classes, format!("{}_{tag}_{i:04}", names[c])))
                    .collect()
            })
            .collect()
    };
    let train = split(cfg.train_per_class, "train", &mut rng);
    let val = split(cfg.val_per_class, "val", &mut rng);
    Ok(SyntheticSplit {
        class_names: names,
        train,
        val,
    })
}

/// Writes `<root>/<class>/{train,val}/*.png` plus object masks under
/// `<root>/<class>/{train,val}_objects/*.png`.
pub fn write_split(split: &SyntheticSplit, root: &Path) -> Result<()> {
    for (c, name) in split.class_names.iter().enumerate() {
        for (tag, samples) in [("train", &split.train[c]), ("val", &split.val[c])] {
            let dir = root.join(name).join(tag);
            let obj_dir = root.join(name).join(format!("{tag}_objects"));
            for d in [&dir, &obj_dir] {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            for s in samples.iter() {
                s.image.save_png(dir.join(format!("{}.png", s.image.id)))?;
                let obj: Vec<u8> = s.object_mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
                let path = obj_dir.join(format!("{}.png", s.image.id));
                image::save_buffer_with_format(
                    &path,
                    &obj,
                    s.image.width() as u32,
                    s.image.height() as u32,
                    image::ExtendedColorType::L8,
                    image::ImageFormat::Png,
                )
                .map_err(|e| Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            }
        }
    }
    Ok(())
}
