//! Dense image tensors and PNG/JPEG I/O.
//!
//! Pixels are stored row-major as `H x W x C` `f32` values in `[0, 1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted side length.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
    pub id: String,
    pub source_path: Option<PathBuf>,
    pub class_label: Option<String>,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<f32>,
        id: impl Into<String>,
    ) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::InvalidInput(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "pixel buffer holds {} values, expected {}",
                pixels.len(),
                height * width * channels
            )));
        }
        if let Some(pos) = pixels
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "pixel value {} at flat index {pos} is not a finite value in [0, 1]",
                pixels[pos]
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
            id: id.into(),
            source_path: None,
            class_label: None,
        })
    }

    /// All-zero image with the same geometry and metadata.
    pub fn zeros_like(&self) -> Self {
        Image {
            pixels: vec![0.0; self.pixels.len()],
            ..self.clone()
        }
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.class_label = Some(class.into());
        self
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Channel values of the pixel at flat index `i = y * W + x`.
    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.pixels[i * self.channels..(i + 1) * self.channels]
    }

    pub fn same_geometry(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Copy keeping pixels where `keep[i]` holds and zeroing the rest.
    pub fn masked(&self, keep: &[bool]) -> Image {
        debug_assert_eq!(keep.len(), self.pixel_count());
        let c = self.channels;
        let mut pixels = vec![0.0; self.pixels.len()];
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            pixels[i * c..(i + 1) * c].copy_from_slice(&self.pixels[i * c..(i + 1) * c]);
        }
        Image {
            pixels,
            ..self.clone()
        }
    }

    /// Luminance (Rec. 601) per pixel.
    pub fn gray(&self) -> Vec<f32> {
        if self.channels == 1 {
            return self.pixels.clone();
        }
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Bilinear resize using half-pixel centers. Returns a clone when the size already matches.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Image> {
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::invalid(format!(
                "resize target {height}x{width} below minimum side {MIN_SIDE}"
            )));
        }
        let c = self.channels;
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        let mut out = vec![0.0f32; height * width * c];
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                for ch in 0..c {
                    let at = |yy: usize, xx: usize| self.pixels[(yy * self.width + xx) * c + ch];
                    let top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
                    let bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
                    out[(y * width + x) * c + ch] = (top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0);
                }
            }
        }
        Ok(Image {
            height,
            width,
            channels: c,
            pixels: out,
            id: self.id.clone(),
            source_path: self.source_path.clone(),
            class_label: self.class_label.clone(),
        })
    }

    /// Load a PNG or JPEG. Grayscale files stay single-channel, everything else becomes RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        let img = match decoded.color() {
            image::ColorType::L8 | image::ColorType::L16 => {
                let buf = decoded.to_luma8();
                Image::from_u8(h, w, 1, buf.as_raw(), id)
            }
            _ => {
                let buf = decoded.to_rgb8();
                Image::from_u8(h, w, 3, buf.as_raw(), id)
            }
        };
        img.map(|i| i.with_source(path)).map_err(|e| match e {
            Error::InvalidInput(message) => Error::Image {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_u8(
        height: usize,
        width: usize,
        channels: usize,
        data: &[u8],
        id: impl Into<String>,
    ) -> Result<Image> {
        let pixels = data.iter().map(|&v| v as f32 / 255.0).collect();
        Image::new(height, width, channels, pixels, id)
    }

    /// Quantize to 8 bits per channel.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Sorted list of `.png`/`.jpg`/`.jpeg` files in a directory.
pub fn list_image_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            .unwrap_or(false);
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
