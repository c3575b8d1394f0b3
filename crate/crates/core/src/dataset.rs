//! Auxiliary training data for one target class and validation scenarios.
//!
//! The auxiliary dataset is the union of three labelled parts:
//! the target-class originals (label 1), zero-masked superpixels of `m`
//! randomly chosen originals (label 1), and out-of-distribution images drawn
//! from the other classes (label 0).

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{list_image_files, Image};
use crate::segmentation::{save_mask_with_sidecar, slic_segment, superpixel_image, SegmentMask, SlicParams, SuperpixelImage};

pub const MANIFEST_SCHEMA: &str = "ucbs.aux-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Which term of the training objective a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Original,
    Superpixel,
    OutOfDistribution,
}

impl Part {
    pub fn label(self) -> usize {
        match self {
            Part::Original | Part::Superpixel => 1,
            Part::OutOfDistribution => 0,
        }
    }
}

/// A segmented original: index into `originals` plus its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSource {
    pub parent: usize,
    pub mask: SegmentMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub m: usize,
    pub n_ood: usize,
    pub segmentation: SlicParams,
    pub segmented_ids: Vec<String>,
    pub original_count: usize,
    pub superpixel_count: usize,
    pub ood_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryDataset {
    pub target_class: String,
    pub originals: Vec<Image>,
    pub segmented: Vec<SegmentedSource>,
    pub superpixels: Vec<SuperpixelImage>,
    pub ood: Vec<Image>,
    pub provenance: Provenance,
}

impl AuxiliaryDataset {
    pub fn part_len(&self, part: Part) -> usize {
        match part {
            Part::Original => self.originals.len(),
            Part::Superpixel => self.superpixels.len(),
            Part::OutOfDistribution => self.ood.len(),
        }
    }

    /// Every sample with its part, in part order.
    pub fn samples(&self) -> impl Iterator<Item = (Part, &Image)> {
        self.originals
            .iter()
            .map(|i| (Part::Original, i))
            .chain(self.superpixels.iter().map(|s| (Part::Superpixel, &s.image)))
            .chain(self.ood.iter().map(|i| (Part::OutOfDistribution, i)))
    }
}

/// Builds the auxiliary dataset for `target_class`.
///
/// `m` originals are chosen uniformly without replacement and segmented;
/// every realized segment becomes a superpixel sample. `n_ood` images are
/// drawn uniformly without replacement from the pooled other classes.
pub fn build_auxiliary_dataset(
    target_class: &str,
    target_images: &[Image],
    other_class_images: &[Image],
    m: usize,
    slic: &SlicParams,
    n_ood: usize,
    seed: u64,
) -> Result<AuxiliaryDataset> {
    if target_images.is_empty() || m == 0 || m > target_images.len() {
        return Err(Error::invalid(format!(
            "m = {m} must be in 1..={} (target images available)",
            target_images.len()
        )));
    }
    if n_ood == 0 || n_ood > other_class_images.len() {
        return Err(Error::invalid(format!(
            "n_ood = {n_ood} must be in 1..={} (other-class images available)",
            other_class_images.len()
        )));
    }
    if let Some(bad) = other_class_images
        .iter()
        .find(|i| i.class_label.as_deref() == Some(target_class))
    {
        return Err(Error::invalid(format!(
            "out-of-distribution pool contains target-class image {}",
            bad.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, target_images.len(), m).into_vec();
    chosen.sort_unstable();
    let mut ood_idx = index::sample(&mut rng, other_class_images.len(), n_ood).into_vec();
    ood_idx.sort_unstable();

    let segmented: Vec<SegmentedSource> = chosen
        .par_iter()
        .map(|&i| {
            slic_segment(&target_images[i], slic).map(|mask| SegmentedSource { parent: i, mask })
        })
        .collect::<Result<_>>()?;
    let superpixels = derive_superpixels(target_images, &segmented);
    let ood: Vec<Image> = ood_idx.iter().map(|&i| other_class_images[i].clone()).collect();

    let provenance = Provenance {
        seed,
        m,
        n_ood,
        segmentation: *slic,
        segmented_ids: chosen.iter().map(|&i| target_images[i].id.clone()).collect(),
        original_count: target_images.len(),
        superpixel_count: superpixels.len(),
        ood_count: ood.len(),
    };
    Ok(AuxiliaryDataset {
        target_class: target_class.to_string(),
        originals: target_images.to_vec(),
        segmented,
        superpixels,
        ood,
        provenance,
    })
}

fn derive_superpixels(originals: &[Image], segmented: &[SegmentedSource]) -> Vec<SuperpixelImage> {
    segmented
        .iter()
        .flat_map(|s| (0..s.mask.count()).map(move |j| superpixel_image(&originals[s.parent], &s.mask, j)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ValPure,
    ValEqual,
    ValN,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ValPure => "val_pure",
            ScenarioKind::ValEqual => "val_equal",
            ScenarioKind::ValN => "val_1000",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationScenario {
    pub kind: ScenarioKind,
    pub positives: Vec<Image>,
    pub negatives: Vec<Image>,
}

impl ValidationScenario {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(image, label)` pairs, positives first.
    pub fn labelled(&self) -> impl Iterator<Item = (&Image, usize)> {
        self.positives
            .iter()
            .map(|i| (i, 1))
            .chain(self.negatives.iter().map(|i| (i, 0)))
    }
}

/// The three validation scenarios: target only, balanced, and `n_neg` negatives.
pub fn make_validation_scenarios(
    target_val: &[Image],
    other_val: &[Image],
    n_neg: usize,
    seed: u64,
) -> Result<[ValidationScenario; 3]> {
    if target_val.is_empty() {
        return Err(Error::invalid("no target-class validation images"));
    }
    if n_neg == 0 {
        return Err(Error::invalid("the n-negatives scenario needs n_neg >= 1"));
    }
    let need = target_val.len().max(n_neg);
    if other_val.len() < need {
        return Err(Error::invalid(format!(
            "need at least {need} other-class validation images, have {}",
            other_val.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<Image> {
        let mut idx = index::sample(&mut rng, other_val.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| other_val[i].clone()).collect()
    };
    let equal = draw(target_val.len());
    let many = draw(n_neg);
    Ok([
        ValidationScenario {
            kind: ScenarioKind::ValPure,
            positives: target_val.to_vec(),
            negatives: Vec::new(),
        },
        ValidationScenario {
            kind: ScenarioKind::ValEqual,
            positives: target_val.to_vec(),
            negatives: equal,
        },
        ValidationScenario {
            kind: ScenarioKind::ValN,
            positives: target_val.to_vec(),
            negatives: many,
        },
    ])
}

/// Class directory names under `root`, sorted.
pub fn list_classes(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

/// Loads `<root>/<class>/<split>/*.png|jpg`, tagging each image with its class.
pub fn load_split(root: &Path, class: &str, split: &str) -> Result<Vec<Image>> {
    let files = list_image_files(root.join(class).join(split))?;
    files
        .par_iter()
        .map(|p| Image::load(p).map(|i| i.with_class(class)))
        .collect()
}

/// Images of every class other than `target` for one split, in class order.
pub fn load_other_classes(root: &Path, target: &str, split: &str) -> Result<Vec<Image>> {
    let mut out = Vec::new();
    for class in list_classes(root)?.into_iter().filter(|c| c != target) {
        out.extend(load_split(root, &class, split)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileEntry {
    path: String,
    sha256: String,
    class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskEntry {
    path: String,
    sha256: String,
    sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuperpixelEntry {
    parent: String,
    mask: String,
    segment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entries {
    originals: Vec<FileEntry>,
    masks: Vec<MaskEntry>,
    superpixels: Vec<SuperpixelEntry>,
    ood: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    schema: String,
    version: u32,
    target_class: String,
    provenance: Provenance,
    #[serde(flatten)]
    entries: Entries,
    checksum: String,
}

/// Non-fatal findings while loading a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestWarning {
    ChecksumMismatch { recorded: String, computed: String },
    FileHashMismatch { path: PathBuf },
    CountMismatch { part: Part, recorded: usize, found: usize },
}

impl std::fmt::Display for ManifestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifestWarning::ChecksumMismatch { recorded, computed } => {
                write!(f, "manifest checksum {recorded} does not match entries ({computed})")
            }
            ManifestWarning::FileHashMismatch { path } => {
                write!(f, "file {} changed since the manifest was written", path.display())
            }
            ManifestWarning::CountMismatch { part, recorded, found } => {
                write!(f, "{part:?}: provenance records {recorded} samples, manifest lists {found}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub dataset: AuxiliaryDataset,
    pub warnings: Vec<ManifestWarning>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn entries_checksum(entries: &Entries) -> String {
    let json = serde_json::to_vec(entries).expect("entries serialize");
    hex::encode(Sha256::digest(&json))
}

/// `path` relative to `base`, both made absolute first.
fn relative_path(path: &Path, base: &Path) -> String {
    let abs = |p: &Path| -> PathBuf {
        let p = if p.is_absolute() {
            p.to_path_buf()
        } else {
            std::env::current_dir().unwrap_or_default().join(p)
        };
        let mut out = PathBuf::new();
        for c in p.components() {
            match c {
                Component::CurDir => {}
                Component::ParentDir => {
                    out.pop();
                }
                other => out.push(other),
            }
        }
        out
    };
    let (p, b) = (abs(path), abs(base));
    let pc: Vec<_> = p.components().collect();
    let bc: Vec<_> = b.components().collect();
    let common = pc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    let mut rel = PathBuf::new();
    for _ in common..bc.len() {
        rel.push("..");
    }
    for c in &pc[common..] {
        rel.push(c);
    }
    rel.to_string_lossy().replace('\\', "/")
}

fn source_of(image: &Image) -> Result<&Path> {
    image.source_path.as_deref().ok_or_else(|| {
        Error::invalid(format!(
            "image {} has no source path; manifests reference files on disk",
            image.id
        ))
    })
}

/// Writes the manifest JSON and the segmentation masks it references.
///
/// Masks go to `<manifest stem>_masks/` next to the manifest as 16-bit PNGs
/// with JSON sidecars. Superpixel samples are stored as
/// `(parent path, mask path, segment index)` and re-derived on load.
pub fn save_manifest(dataset: &AuxiliaryDataset, path: &Path) -> Result<()> {
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mask_dir = base.join(format!("{stem}_masks"));
    std::fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;

    let file_entry = |img: &Image| -> Result<FileEntry> {
        let src = source_of(img)?;
        Ok(FileEntry {
            path: relative_path(src, base),
            sha256: sha256_file(src)?,
            class: img.class_label.clone(),
        })
    };
    let originals = dataset.originals.iter().map(file_entry).collect::<Result<Vec<_>>>()?;
    let ood = dataset.ood.iter().map(file_entry).collect::<Result<Vec<_>>>()?;

    let mut masks = Vec::new();
    let mut mask_rel = BTreeMap::new();
    for (n, s) in dataset.segmented.iter().enumerate() {
        let parent = &dataset.originals[s.parent];
        let mstem = format!("{n:04}_{}", parent.id);
        let png = save_mask_with_sidecar(&s.mask, &dataset.provenance.segmentation, &mask_dir, &mstem)?;
        let rel = relative_path(&png, base);
        mask_rel.insert(s.parent, rel.clone());
        masks.push(MaskEntry {
            path: rel,
            sha256: sha256_file(&png)?,
            sidecar: relative_path(&mask_dir.join(format!("{mstem}.json")), base),
        });
    }
    let mut superpixels = Vec::new();
    for sp in &dataset.superpixels {
        let parent = dataset
            .segmented
            .iter()
            .find(|s| dataset.originals[s.parent].id == sp.parent_id)
            .ok_or_else(|| Error::invalid(format!("superpixel parent {} was not segmented", sp.parent_id)))?;
        superpixels.push(SuperpixelEntry {
            parent: originals[parent.parent].path.clone(),
            mask: mask_rel[&parent.parent].clone(),
            segment: sp.segment_index,
        });
    }
    let entries = Entries {
        originals,
        masks,
        superpixels,
        ood,
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        version: MANIFEST_VERSION,
        target_class: dataset.target_class.clone(),
        provenance: dataset.provenance.clone(),
        checksum: entries_checksum(&entries),
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column).min(text.len())
}

/// Loads a manifest written by [`save_manifest`], re-reading images and
/// re-deriving superpixels from the stored masks.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format_err = |message: String| Error::Format {
        format: "aux-manifest",
        expected: MANIFEST_VERSION,
        message,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        format_err(format!(
            "malformed manifest at byte offset {}: {e}",
            byte_offset(&text, e.line(), e.column())
        ))
    })?;
    if value.get("schema").and_then(|s| s.as_str()) != Some(MANIFEST_SCHEMA) {
        return Err(format_err(format!("not a {MANIFEST_SCHEMA} document")));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            format: "aux-manifest",
            found: version,
            expected: MANIFEST_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| format_err(format!("invalid manifest: {e}")))?;

    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut warnings = Vec::new();
    let computed = entries_checksum(&manifest.entries);
    if computed != manifest.checksum {
        warnings.push(ManifestWarning::ChecksumMismatch {
            recorded: manifest.checksum.clone(),
            computed,
        });
    }

    let load_entry = |e: &FileEntry| -> Result<(Image, bool)> {
        let p = base.join(&e.path);
        let hash_ok = sha256_file(&p)? == e.sha256;
        let mut img = Image::load(&p)?;
        img.class_label = e.class.clone();
        Ok((img, hash_ok))
    };
    let mut originals = Vec::new();
    for e in &manifest.entries.originals {
        let (img, ok) = load_entry(e)?;
        if !ok {
            warnings.push(ManifestWarning::FileHashMismatch { path: base.join(&e.path) });
        }
        originals.push(img);
    }
    let mut ood = Vec::new();
    for e in &manifest.entries.ood {
        let (img, ok) = load_entry(e)?;
        if !ok {
            warnings.push(ManifestWarning::FileHashMismatch { path: base.join(&e.path) });
        }
        ood.push(img);
    }
    for m in &manifest.entries.masks {
        let p = base.join(&m.path);
        if sha256_file(&p)? != m.sha256 {
            warnings.push(ManifestWarning::FileHashMismatch { path: p });
        }
    }

    let mut segmented: Vec<SegmentedSource> = Vec::new();
    let mut mask_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut superpixels = Vec::new();
    for sp in &manifest.entries.superpixels {
        let slot = match mask_of.get(&sp.mask) {
            Some(&s) => s,
            None => {
                let parent = manifest
                    .entries
                    .originals
                    .iter()
                    .position(|o| o.path == sp.parent)
                    .ok_or_else(|| format_err(format!("superpixel parent {} is not an original", sp.parent)))?;
                let mask = SegmentMask::load_png(base.join(&sp.mask))?;
                if !mask.matches(&originals[parent]) {
                    return Err(format_err(format!("mask {} does not match its parent size", sp.mask)));
                }
                segmented.push(SegmentedSource { parent, mask });
                mask_of.insert(sp.mask.clone(), segmented.len() - 1);
                segmented.len() - 1
            }
        };
        let src = &segmented[slot];
        if sp.segment >= src.mask.count() {
            return Err(format_err(format!(
                "segment {} out of range for mask {} ({} segments)",
                sp.segment,
                sp.mask,
                src.mask.count()
            )));
        }
        superpixels.push(superpixel_image(&originals[src.parent], &src.mask, sp.segment));
    }

    let prov = &manifest.provenance;
    for (part, recorded, found) in [
        (Part::Original, prov.original_count, originals.len()),
        (Part::Superpixel, prov.superpixel_count, superpixels.len()),
        (Part::OutOfDistribution, prov.ood_count, ood.len()),
    ] {
        if recorded != found {
            warnings.push(ManifestWarning::CountMismatch { part, recorded, found });
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(LoadedManifest {
        dataset: AuxiliaryDataset {
            target_class: manifest.target_class,
            originals,
            segmented,
            superpixels,
            ood,
            provenance: manifest.provenance,
        },
        warnings,
    })
}
