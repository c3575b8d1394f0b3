//! Loading images and bringing them to a model's input shape.

use std::path::{Path, PathBuf};

use ucbs_core::image::list_image_files;
use ucbs_core::segmentation::SlicParams;
use ucbs_core::{Classifier, Image};

use crate::args::SlicArgs;
use crate::error::CliError;

/// Resizes to the model's square input and expands grayscale to RGB.
/// Ids, class labels and source paths are kept.
pub fn prepare(image: Image, shape: (usize, usize, usize)) -> Result<Image, CliError> {
    let (h, w, c) = shape;
    let resized = if image.height() != h || image.width() != w {
        log::debug!("resizing {} from {}x{} to {h}x{w}", image.id, image.height(), image.width());
        image.resize_bilinear(h, w)?
    } else {
        image
    };
    if resized.channels() == c {
        return Ok(resized);
    }
    let pixels: Vec<f32> = match (resized.channels(), c) {
        (1, 3) => resized.pixels().iter().flat_map(|&v| [v, v, v]).collect(),
        (3, 1) => resized.gray(),
        (from, to) => {
            return Err(CliError::usage(format!(
                "cannot convert {from}-channel image {} to {to} channels",
                resized.id
            )))
        }
    };
    let mut out = Image::new(h, w, c, pixels, resized.id.clone())?;
    out.class_label = resized.class_label.clone();
    out.source_path = resized.source_path.clone();
    Ok(out)
}

pub fn load_prepared(path: &Path, model: &(impl Classifier + ?Sized)) -> Result<Image, CliError> {
    prepare(Image::load(path)?, model.input_shape())
}

/// Files from explicit paths followed by a sorted directory listing.
pub fn collect_paths(explicit: &[PathBuf], dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let mut out = explicit.to_vec();
    if let Some(d) = dir {
        out.extend(list_image_files(d)?);
    }
    if out.is_empty() {
        return Err(CliError::usage("no input images"));
    }
    Ok(out)
}

/// Loads and prepares images; duplicate ids are rejected because they name output files.
pub fn load_all(paths: &[PathBuf], model: &(impl Classifier + ?Sized)) -> Result<Vec<Image>, CliError> {
    use rayon::prelude::*;
    let images: Vec<Image> = paths
        .par_iter()
        .map(|p| load_prepared(p, model))
        .collect::<Result<_, _>>()?;
    let mut ids: Vec<&str> = images.iter().map(|i| i.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::usage(format!("two input images share the id {}", w[0])));
    }
    Ok(images)
}

pub fn slic_params(args: &SlicArgs, seed: u64) -> SlicParams {
    SlicParams {
        k: args.k,
        compactness: args.compactness,
        iterations: args.iterations,
        seed,
    }
}
