//! SLIC superpixels and zero-masked per-segment images.
//!
//! [`slic_segment`] partitions an image into roughly `k` compact, 4-connected
//! regions. [`extract_superpixel_images`] turns each region into a full-size
//! image that keeps the region's pixels in place and zeroes everything else.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Per-pixel segment labels. Every label in `0..count` occurs at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMask {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SegmentMask {
    /// Builds a mask from raw labels. Labels must be dense: every value in
    /// `0..=max` has to occur.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::invalid(format!(
                "label buffer holds {} entries, expected {}",
                labels.len(),
                height * width
            )));
        }
        let count = *labels.iter().max().unwrap() as usize + 1;
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "segment label {missing} is empty (labels must be dense in 0..{count})"
            )));
        }
        Ok(SegmentMask {
            height,
            width,
            labels,
            count,
        })
    }

    /// Single segment covering the whole image.
    pub fn whole(height: usize, width: usize) -> Self {
        SegmentMask {
            height,
            width,
            labels: vec![0; height * width],
            count: 1,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn matches(&self, image: &Image) -> bool {
        self.height == image.height() && self.width == image.width()
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Pixel membership of one segment.
    pub fn segment_pixels(&self, segment: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l as usize == segment).collect()
    }

    /// Pixel membership of the union of segments flagged in `selected`.
    pub fn union_pixels(&self, selected: &[bool]) -> Vec<bool> {
        debug_assert_eq!(selected.len(), self.count);
        self.labels.iter().map(|&l| selected[l as usize]).collect()
    }

    /// Pixels where the 4-neighbourhood contains a different label.
    pub fn boundary_pixels(&self) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                let differs = (x + 1 < w && self.labels[y * w + x + 1] != l)
                    || (x > 0 && self.labels[y * w + x - 1] != l)
                    || (y + 1 < h && self.labels[(y + 1) * w + x] != l)
                    || (y > 0 && self.labels[(y - 1) * w + x] != l);
                out[y * w + x] = differs;
            }
        }
        out
    }

    /// True when every segment forms a single 4-connected region.
    pub fn is_four_connected(&self) -> bool {
        let (_, components) = connected_components(self.height, self.width, &self.labels);
        components == self.count
    }

    /// Nearest-neighbour resize; labels are re-densified afterwards.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Result<SegmentMask> {
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                labels.push(self.labels[sy.min(self.height - 1) * self.width + sx.min(self.width - 1)]);
            }
        }
        SegmentMask::from_labels(height, width, renumber_by_first_occurrence(&labels))
    }

    /// Writes labels as a 16-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.count > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!(
                "{} segments do not fit a 16-bit mask",
                self.count
            )));
        }
        let raw: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer size matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<SegmentMask> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let buf = img.to_luma16();
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        let labels = buf.as_raw().iter().map(|&v| v as u32).collect();
        SegmentMask::from_labels(h, w, labels)
    }
}

/// Zero-masked copy of an image retaining one segment at its original position.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelImage {
    pub image: Image,
    pub segment_index: usize,
    pub parent_id: String,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            k: 50,
            compactness: 10.0,
            iterations: 10,
            seed: 0,
        }
    }
}

impl SlicParams {
    pub fn with_k(k: usize) -> Self {
        SlicParams {
            k,
            ..Default::default()
        }
    }
}

/// Sidecar record written next to a mask PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    /// Realized segment count.
    pub k: usize,
    pub requested_k: usize,
    pub seed: u64,
    pub compactness: f64,
    pub iterations: usize,
}

impl MaskSidecar {
    pub fn new(mask: &SegmentMask, params: &SlicParams) -> Self {
        MaskSidecar {
            k: mask.count(),
            requested_k: params.k,
            seed: params.seed,
            compactness: params.compactness,
            iterations: params.iterations,
        }
    }
}

/// Writes `<stem>.png` and `<stem>.json` into `dir`.
pub fn save_mask_with_sidecar(
    mask: &SegmentMask,
    params: &SlicParams,
    dir: &Path,
    stem: &str,
) -> Result<std::path::PathBuf> {
    let png = dir.join(format!("{stem}.png"));
    mask.save_png(&png)?;
    let json = serde_json::to_string_pretty(&MaskSidecar::new(mask, params))?;
    let side = dir.join(format!("{stem}.json"));
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(png)
}

/// SLIC superpixel segmentation.
///
/// Cluster centres start on a regular grid (moved to the lowest-gradient
/// pixel of their 3x3 neighbourhood) and are refined with localized k-means
/// in Lab+xy space. Regions are then made 4-connected and the smallest are
/// merged into their longest-border neighbour: fragments under a quarter of
/// a grid cell while more than `ceil(k / 2)` regions exist, then anything
/// beyond `ceil(1.5 k)` regions. The algorithm has no random component, so
/// `seed` is carried for provenance only.
pub fn slic_segment(image: &Image, params: &SlicParams) -> Result<SegmentMask> {
    let (h, w) = (image.height(), image.width());
    let n = h * w;
    if params.k == 0 || params.k > n {
        return Err(Error::invalid(format!(
            "k = {} must be in 1..={} (pixel count)",
            params.k, n
        )));
    }
    if !(params.compactness > 0.0) || !params.compactness.is_finite() {
        return Err(Error::invalid("compactness must be positive"));
    }
    if params.iterations == 0 {
        return Err(Error::invalid("iterations must be positive"));
    }
    if image.pixels().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("image contains non-finite pixels".into()));
    }

    let lab = to_lab(image);
    let k = params.k;
    let ny = ((k as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let nx = ((k as f64 / ny as f64).round() as usize).clamp(1, w);
    let step = ((n as f64) / (ny * nx) as f64).sqrt();
    let cell_h = h as f64 / ny as f64;
    let cell_w = w as f64 / nx as f64;

    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(ny * nx);
    for gy in 0..ny {
        for gx in 0..nx {
            // continuous cell centre in pixel-centre coordinates
            let fy = (gy as f64 + 0.5) * cell_h - 0.5;
            let fx = (gx as f64 + 0.5) * cell_w - 0.5;
            let cy = (fy.round() as usize).min(h - 1);
            let cx = (fx.round() as usize).min(w - 1);
            let (y, x) = lowest_gradient(&lab, h, w, cy, cx);
            let p = lab[y * w + x];
            let (py, px) = if (y, x) == (cy, cx) { (fy, fx) } else { (y as f64, x as f64) };
            centers.push([p[0], p[1], p[2], py, px]);
        }
    }

    // initial assignment: grid cell of each pixel
    let mut labels: Vec<u32> = (0..n)
        .map(|i| {
            let gy = (((i / w) as f64 / cell_h) as usize).min(ny - 1);
            let gx = (((i % w) as f64 / cell_w) as usize).min(nx - 1);
            (gy * nx + gx) as u32
        })
        .collect();

    let spatial = (params.compactness / step).powi(2);
    let radius = (2.0 * step).ceil() as isize;
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cy, cx) = (c[3].round() as isize, c[4].round() as isize);
            let y_lo = (cy - radius).max(0) as usize;
            let y_hi = ((cy + radius) as usize).min(h - 1);
            let x_lo = (cx - radius).max(0) as usize;
            let x_hi = ((cx + radius) as usize).min(w - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let i = y * w + x;
                    let p = lab[i];
                    let dc = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                    let ds = (y as f64 - c[3]).powi(2) + (x as f64 - c[4]).powi(2);
                    let d = dc + ds * spatial;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let p = lab[i];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            s[3] += (i / w) as f64;
            s[4] += (i % w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                for d in 0..5 {
                    c[d] = s[d] / s[5];
                }
            }
        }
    }

    let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
    let min_count = (0.5 * k as f64).ceil() as usize;
    let max_count = (1.5 * k as f64).ceil() as usize;
    let merged = enforce_connectivity(h, w, &labels, min_size, min_count, max_count);
    SegmentMask::from_labels(h, w, renumber_by_first_occurrence(&merged))
}

/// One zero-masked image per segment, ordered by label.
pub fn extract_superpixel_images(image: &Image, mask: &SegmentMask) -> Result<Vec<SuperpixelImage>> {
    if !mask.matches(image) {
        return Err(Error::invalid(format!(
            "mask is {}x{} but image is {}x{}",
            mask.height(),
            mask.width(),
            image.height(),
            image.width()
        )));
    }
    Ok((0..mask.count())
        .map(|j| superpixel_image(image, mask, j))
        .collect())
}

/// The image with every pixel outside `segment` set to zero.
pub fn superpixel_image(image: &Image, mask: &SegmentMask, segment: usize) -> SuperpixelImage {
    let keep = mask.segment_pixels(segment);
    SuperpixelImage {
        image: image.masked(&keep),
        segment_index: segment,
        parent_id: image.id.clone(),
        mask: keep,
    }
}

fn lowest_gradient(lab: &[[f64; 3]], h: usize, w: usize, cy: usize, cx: usize) -> (usize, usize) {
    let grad = |y: usize, x: usize| -> f64 {
        if y == 0 || x == 0 || y + 1 >= h || x + 1 >= w {
            return f64::INFINITY;
        }
        let d = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
        d(lab[y * w + x + 1], lab[y * w + x - 1]) + d(lab[(y + 1) * w + x], lab[(y - 1) * w + x])
    };
    let mut best = (cy, cx);
    let mut best_g = grad(cy, cx);
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            let (y, x) = (cy as isize + dy, cx as isize + dx);
            if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
                continue;
            }
            let g = grad(y as usize, x as usize);
            if g < best_g {
                best_g = g;
                best = (y as usize, x as usize);
            }
        }
    }
    best
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE Lab (D65) of an sRGB triple in [0, 1].
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn to_lab(image: &Image) -> Vec<[f64; 3]> {
    (0..image.pixel_count())
        .map(|i| {
            let p = image.pixel(i);
            if p.len() == 3 {
                rgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64])
            } else {
                let v = p[0] as f64;
                rgb_to_lab([v, v, v])
            }
        })
        .collect()
}

/// Labels each 4-connected same-label region with a fresh id in raster order.
fn connected_components(h: usize, w: usize, labels: &[u32]) -> (Vec<u32>, usize) {
    let mut out = vec![u32::MAX; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if out[start] != u32::MAX {
            continue;
        }
        out[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbours(i, h, w) {
                if out[j] == u32::MAX && labels[j] == labels[start] {
                    out[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (out, next as usize)
}

fn neighbours(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (i / w, i % w);
    [
        (y > 0).then(|| i - w),
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

/// Region adjacency graph over 4-connected components.
struct Regions {
    /// Component id of every pixel.
    component: Vec<u32>,
    /// Final owner of every component after merges.
    owner: Vec<usize>,
    sizes: Vec<usize>,
    /// Shared border length (pixel-edge count) with each live neighbour.
    borders: Vec<BTreeMap<usize, usize>>,
    alive: BTreeSet<(usize, usize)>,
}

impl Regions {
    fn new(h: usize, w: usize, labels: &[u32]) -> Self {
        let (component, count) = connected_components(h, w, labels);
        let mut sizes = vec![0usize; count];
        let mut borders = vec![BTreeMap::new(); count];
        for i in 0..h * w {
            let a = component[i] as usize;
            sizes[a] += 1;
            for j in neighbours(i, h, w) {
                let b = component[j] as usize;
                if a != b {
                    *borders[a].entry(b).or_insert(0) += 1;
                }
            }
        }
        let alive = (0..count).map(|c| (sizes[c], c)).collect();
        Regions {
            component,
            owner: (0..count).collect(),
            sizes,
            borders,
            alive,
        }
    }

    fn count(&self) -> usize {
        self.alive.len()
    }

    fn smallest(&self) -> (usize, usize) {
        *self.alive.first().expect("at least one region")
    }

    /// Folds the smallest region into the neighbour with the longest shared
    /// border (lower id on ties).
    fn merge_smallest(&mut self) {
        let (size, a) = self.smallest();
        let Some((&b, _)) = self.borders[a]
            .iter()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
        else {
            return;
        };
        let edges = std::mem::take(&mut self.borders[a]);
        for (&n, &len) in &edges {
            self.borders[n].remove(&a);
            if n != b {
                *self.borders[n].entry(b).or_insert(0) += len;
                *self.borders[b].entry(n).or_insert(0) += len;
            }
        }
        self.alive.remove(&(size, a));
        self.alive.remove(&(self.sizes[b], b));
        self.sizes[b] += size;
        self.alive.insert((self.sizes[b], b));
        self.owner[a] = b;
    }

    fn labels(&self) -> Vec<u32> {
        let resolve = |mut c: usize| {
            while self.owner[c] != c {
                c = self.owner[c];
            }
            c as u32
        };
        let root: Vec<u32> = (0..self.owner.len()).map(resolve).collect();
        self.component.iter().map(|&c| root[c as usize]).collect()
    }
}

/// Splits clusters into 4-connected regions, then repeatedly folds the
/// smallest region into its longest-border neighbour: first while it is
/// below `min_size` (but never below `min_count` regions), then until at
/// most `max_count` remain.
fn enforce_connectivity(
    h: usize,
    w: usize,
    labels: &[u32],
    min_size: usize,
    min_count: usize,
    max_count: usize,
) -> Vec<u32> {
    let mut regions = Regions::new(h, w, labels);
    while regions.count() > min_count.max(1) && regions.smallest().0 < min_size {
        regions.merge_smallest();
    }
    while regions.count() > max_count.max(1) {
        regions.merge_smallest();
    }
    regions.labels()
}

fn renumber_by_first_occurrence(labels: &[u32]) -> Vec<u32> {
    let max = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut map = vec![u32::MAX; max + 1];
    let mut next = 0u32;
    labels
        .iter()
        .map(|&l| {
            let slot = &mut map[l as usize];
            if *slot == u32::MAX {
                *slot = next;
                next += 1;
            }
            *slot
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Image {
        let px = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Image::new(h, w, 1, px, "g").unwrap()
    }

    fn square_image() -> Image {
        let px: Vec<f32> = (0..64 * 64)
            .flat_map(|i| {
                let (y, x) = (i / 64, i % 64);
                let v = if (20..44).contains(&y) && (20..44).contains(&x) { 1.0 } else { 0.0 };
                [v, v, v]
            })
            .collect();
        Image::new(64, 64, 3, px, "sq").unwrap()
    }

    #[test]
    fn uniform_image_gives_four_equal_blocks() {
        let img = gray(32, 32, |_, _| 0.5);
        let mask = slic_segment(&img, &SlicParams::with_k(4)).unwrap();
        assert_eq!(mask.count(), 4);
        assert_eq!(mask.segment_sizes(), vec![256; 4]);
        assert!(mask.is_four_connected());
    }

    #[test]
    fn boundaries_follow_a_white_square() {
        let img = square_image();
        let mask = slic_segment(&img, &SlicParams::with_k(16)).unwrap();
        let boundary = mask.boundary_pixels();
        // exhaustive outline of the square: pixels with a 4-neighbour of the other colour
        let inside = |y: usize, x: usize| (20..44).contains(&y) && (20..44).contains(&x);
        let mut truth = Vec::new();
        for y in 0..64usize {
            for x in 0..64usize {
                let here = inside(y, x);
                let edge = [(0i32, 1i32), (0, -1), (1, 0), (-1, 0)].iter().any(|(dy, dx)| {
                    let (yy, xx) = (y as i32 + dy, x as i32 + dx);
                    (0..64).contains(&yy) && (0..64).contains(&xx) && inside(yy as usize, xx as usize) != here
                });
                if edge {
                    truth.push((y, x));
                }
            }
        }
        let hit = truth
            .iter()
            .filter(|&&(y, x)| {
                (y.saturating_sub(2)..=(y + 2).min(63))
                    .any(|yy| (x.saturating_sub(2)..=(x + 2).min(63)).any(|xx| boundary[yy * 64 + xx]))
            })
            .count();
        let recall = hit as f64 / truth.len() as f64;
        assert!(recall >= 0.9, "boundary recall {recall}");
    }

    #[test]
    fn realized_count_stays_in_range() {
        for k in [3, 8, 16, 50] {
            let img = square_image();
            let mask = slic_segment(&img, &SlicParams::with_k(k)).unwrap();
            let lo = (0.5 * k as f64).ceil() as usize;
            let hi = (1.5 * k as f64).ceil() as usize;
            assert!((lo..=hi).contains(&mask.count()), "k={k} realized {}", mask.count());
            assert!(mask.is_four_connected());
        }
    }

    #[test]
    fn count_is_capped_on_noise() {
        let mut state = 12345u64;
        let px: Vec<f32> = (0..48 * 48 * 3)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / (1u64 << 24) as f32
            })
            .collect();
        let img = Image::new(48, 48, 3, px, "n").unwrap();
        let mask = slic_segment(&img, &SlicParams::with_k(16)).unwrap();
        assert!(mask.count() <= 24);
        assert!(mask.is_four_connected());
    }

    #[test]
    fn errors() {
        let img = gray(8, 8, |_, _| 0.1);
        assert!(matches!(
            slic_segment(&img, &SlicParams::with_k(65)),
            Err(Error::InvalidArgument(_))
        ));
        let other = SegmentMask::whole(9, 8);
        assert!(extract_superpixel_images(&img, &other).is_err());
    }

    #[test]
    fn k_equal_to_pixel_count_is_accepted() {
        let img = gray(8, 8, |y, x| ((y * 8 + x) as f32) / 64.0);
        let mask = slic_segment(&img, &SlicParams::with_k(64)).unwrap();
        assert_eq!(mask.segment_sizes().iter().sum::<usize>(), 64);
    }

    #[test]
    fn single_segment_extract_is_identity() {
        let img = gray(10, 9, |y, x| ((y + x) % 5) as f32 / 5.0);
        let out = extract_superpixel_images(&img, &SegmentMask::whole(10, 9)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].image, img);
    }

    #[test]
    fn four_segment_constant_image_masks() {
        let img = gray(32, 32, |_, _| 0.7);
        let mask = slic_segment(&img, &SlicParams::with_k(4)).unwrap();
        let parts = extract_superpixel_images(&img, &mask).unwrap();
        assert_eq!(parts.len(), 4);
        for p in &parts {
            let brute = (0..32 * 32).filter(|&i| mask.labels()[i] as usize == p.segment_index).count();
            assert_eq!(p.mask.iter().filter(|m| **m).count(), brute);
            assert_eq!(brute, 32 * 32 / 4);
        }
    }

    #[test]
    fn mask_png_round_trip() {
        let img = square_image();
        let params = SlicParams::with_k(16);
        let mask = slic_segment(&img, &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = save_mask_with_sidecar(&mask, &params, dir.path(), "m").unwrap();
        assert_eq!(SegmentMask::load_png(&path).unwrap(), mask);
        let side: MaskSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(side.k, mask.count());
        assert_eq!(side.iterations, 10);
    }

    #[test]
    fn from_labels_rejects_gaps() {
        assert!(SegmentMask::from_labels(1, 3, vec![0, 2, 2]).is_err());
    }
}
