//! Compact convolutional backbone with manual back-propagation.
//!
//! Four blocks of `conv3x3 (same padding) -> relu -> maxpool 2x2`, a global
//! average pool producing the embedding, and a linear head. Convolutions run
//! as im2col + GEMM in `f32`; the head and loss run in `f64`.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UCBSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub in_channels: usize,
    pub widths: Vec<usize>,
    /// The first convolution carries no bias so zero inputs map to zero activations.
    pub first_block_bias: bool,
    pub classes: usize,
}

impl Architecture {
    pub fn desk(classes: usize) -> Self {
        Architecture {
            input_size: 64,
            in_channels: 3,
            widths: vec![8, 16, 16, 32],
            first_block_bias: false,
            classes,
        }
    }

    pub fn embedding_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.widths.len();
        if self.widths.is_empty() || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("architecture needs non-zero block widths"));
        }
        if self.input_size == 0 || self.input_size % div != 0 {
            return Err(Error::invalid(format!(
                "input size {} must be a positive multiple of {div}",
                self.input_size
            )));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::invalid("in_channels must be 1 or 3"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("a classifier needs at least 2 classes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out x (in * 9)` row-major.
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn init(inputs: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / inputs as f64).sqrt()).unwrap();
        LinearHead {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| normal.sample(&mut rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                self.bias[o]
                    + self.weight[o * self.inputs..(o + 1) * self.inputs]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Cross-entropy of `logits` against class `label`, with its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Head gradients for one sample: `(dW, db, d_input)`.
pub fn head_backward(head: &LinearHead, input: &[f64], dlogits: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; head.weight.len()];
    let mut dx = vec![0.0; head.inputs];
    for o in 0..head.outputs {
        for i in 0..head.inputs {
            dw[o * head.inputs + i] = dlogits[o] * input[i];
            dx[i] += dlogits[o] * head.weight[o * head.inputs + i];
        }
    }
    (dw, dlogits.to_vec(), dx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallCnn {
    arch: Architecture,
    pub(crate) convs: Vec<ConvLayer>,
    pub(crate) head: LinearHead,
    seed: u64,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    cols: Vec<Vec<f32>>,
    relu: Vec<Vec<f32>>,
    argmax: Vec<Vec<u32>>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradient buffers shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv_weight: Vec<Vec<f32>>,
    pub conv_bias: Vec<Option<Vec<f32>>>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &SmallCnn) -> Self {
        Gradients {
            conv_weight: model.convs.iter().map(|c| vec![0.0; c.weight.len()]).collect(),
            conv_bias: model
                .convs
                .iter()
                .map(|c| c.bias.as_ref().map(|b| vec![0.0; b.len()]))
                .collect(),
            head_weight: vec![0.0; model.head.weight.len()],
            head_bias: vec![0.0; model.head.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.conv_weight.iter_mut().zip(&other.conv_weight) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.conv_bias.iter_mut().zip(&other.conv_bias) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        self.head_weight.iter_mut().zip(&other.head_weight).for_each(|(x, y)| *x += y);
        self.head_bias.iter_mut().zip(&other.head_bias).for_each(|(x, y)| *x += y);
    }
}

/// Stochastic gradient descent with heavy-ball momentum: `v = mu v + g; p -= lr v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, model: &mut SmallCnn, grads: &Gradients) {
        let v = self.velocity.get_or_insert_with(|| Gradients::zeros(model));
        let (lr, mu) = (self.learning_rate, self.momentum);
        let (lr32, mu32) = (lr as f32, mu as f32);
        for (layer, (vw, gw)) in model.convs.iter_mut().zip(v.conv_weight.iter_mut().zip(&grads.conv_weight)) {
            for ((p, v), g) in layer.weight.iter_mut().zip(vw.iter_mut()).zip(gw) {
                *v = mu32 * *v + g;
                *p -= lr32 * *v;
            }
        }
        for (layer, (vb, gb)) in model.convs.iter_mut().zip(v.conv_bias.iter_mut().zip(&grads.conv_bias)) {
            if let (Some(b), Some(vb), Some(gb)) = (layer.bias.as_mut(), vb.as_mut(), gb.as_ref()) {
                for ((p, v), g) in b.iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = mu32 * *v + g;
                    *p -= lr32 * *v;
                }
            }
        }
        for ((p, v), g) in model.head.weight.iter_mut().zip(v.head_weight.iter_mut()).zip(&grads.head_weight) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
        for ((p, v), g) in model.head.bias.iter_mut().zip(v.head_bias.iter_mut()).zip(&grads.head_bias) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths match the (m, k, n) shapes asserted above and the strides index within them.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn im2col(x: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let hw = h * w;
    let mut col = vec![0.0f32; c * 9 * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let hw = h * w;
    let mut x = vec![0.0f32; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
    x
}

fn maxpool(a: &[f32], c: usize, h: usize, w: usize) -> (Vec<f32>, Vec<u32>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = vec![0.0f32; c * ph * pw];
    let mut idx = vec![0u32; c * ph * pw];
    for ci in 0..c {
        for y in 0..ph {
            for x in 0..pw {
                let mut best_i = ci * h * w + 2 * y * w + 2 * x;
                let mut best = a[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ci * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if a[i] > best {
                        best = a[i];
                        best_i = i;
                    }
                }
                out[ci * ph * pw + y * pw + x] = best;
                idx[ci * ph * pw + y * pw + x] = best_i as u32;
            }
        }
    }
    (out, idx)
}

impl SmallCnn {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::with_capacity(arch.widths.len());
        let mut in_c = arch.in_channels;
        for (b, &out_c) in arch.widths.iter().enumerate() {
            let fan_in = in_c * 9;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let weight = (0..out_c * fan_in).map(|_| normal.sample(&mut rng) as f32).collect();
            let bias = (b > 0 || arch.first_block_bias).then(|| vec![0.0f32; out_c]);
            convs.push(ConvLayer {
                in_channels: in_c,
                out_channels: out_c,
                weight,
                bias,
            });
            in_c = out_c;
        }
        let head = LinearHead::init(arch.embedding_width(), arch.classes, seed ^ 0x5eed_4ead);
        Ok(SmallCnn {
            arch,
            convs,
            head,
            seed,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    /// Replaces the classification head, keeping the backbone.
    pub fn with_head(&self, head: LinearHead) -> Result<Self> {
        if head.inputs != self.arch.embedding_width() {
            return Err(Error::invalid(format!(
                "head expects {} inputs, backbone emits {}",
                head.inputs,
                self.arch.embedding_width()
            )));
        }
        let mut out = self.clone();
        out.arch.classes = head.outputs;
        out.head = head;
        Ok(out)
    }

    pub fn check_input(&self, image: &Image) -> Result<()> {
        let s = self.arch.input_size;
        if image.height() != s || image.width() != s || image.channels() != self.arch.in_channels {
            return Err(Error::invalid(format!(
                "model expects {s}x{s}x{} input, got {}x{}x{}",
                self.arch.in_channels,
                image.height(),
                image.width(),
                image.channels()
            )));
        }
        Ok(())
    }

    fn to_chw(image: &Image) -> Vec<f32> {
        let (hw, c) = (image.pixel_count(), image.channels());
        let px = image.pixels();
        let mut out = vec![0.0; hw * c];
        for i in 0..hw {
            for ch in 0..c {
                out[ch * hw + i] = px[i * c + ch];
            }
        }
        out
    }

    /// Output of block `block` (after pooling) together with its spatial size.
    fn run_block(&self, block: usize, x: &[f32], size: usize, keep: Option<&mut ForwardCache>) -> Vec<f32> {
        let layer = &self.convs[block];
        let hw = size * size;
        let col = im2col(x, layer.in_channels, size, size);
        let mut z = vec![0.0f32; layer.out_channels * hw];
        if let Some(b) = &layer.bias {
            for (o, &bv) in b.iter().enumerate() {
                z[o * hw..(o + 1) * hw].fill(bv);
            }
        }
        let beta = if layer.bias.is_some() { 1.0 } else { 0.0 };
        gemm(layer.out_channels, layer.in_channels * 9, hw, &layer.weight, false, &col, false, beta, &mut z);
        z.iter_mut().for_each(|v| *v = v.max(0.0));
        let (pooled, idx) = maxpool(&z, layer.out_channels, size, size);
        if let Some(cache) = keep {
            cache.cols.push(col);
            cache.relu.push(z);
            cache.argmax.push(idx);
        }
        pooled
    }

    fn forward_impl(&self, image: &Image, mut keep: Option<&mut ForwardCache>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(image)?;
        let mut x = Self::to_chw(image);
        let mut size = self.arch.input_size;
        for b in 0..self.convs.len() {
            x = self.run_block(b, &x, size, keep.as_deref_mut());
            size /= 2;
        }
        let area = (size * size) as f64;
        let embedding: Vec<f64> = x
            .chunks_exact(size * size)
            .map(|plane| plane.iter().map(|&v| v as f64).sum::<f64>() / area)
            .collect();
        let logits = self.head.forward(&embedding);
        Ok((embedding, logits))
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        self.forward_impl(image, None).map(|(_, l)| l)
    }

    pub fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        self.forward_impl(image, None).map(|(e, _)| e)
    }

    /// `(embedding, logits)` in one pass.
    pub fn forward(&self, image: &Image) -> Result<(Vec<f64>, Vec<f64>)> {
        self.forward_impl(image, None)
    }

    pub fn forward_cached(&self, image: &Image) -> Result<ForwardCache> {
        let mut cache = ForwardCache {
            cols: Vec::new(),
            relu: Vec::new(),
            argmax: Vec::new(),
            embedding: Vec::new(),
            logits: Vec::new(),
        };
        let (e, l) = self.forward_impl(image, Some(&mut cache))?;
        cache.embedding = e;
        cache.logits = l;
        Ok(cache)
    }

    /// Pooled output of the first block as `(channels, side, values)`.
    pub fn first_block_output(&self, image: &Image) -> Result<(usize, usize, Vec<f32>)> {
        self.check_input(image)?;
        let x = Self::to_chw(image);
        let out = self.run_block(0, &x, self.arch.input_size, None);
        Ok((self.convs[0].out_channels, self.arch.input_size / 2, out))
    }

    /// Parameter gradients given `d loss / d logits` for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Gradients {
        let (dhw, dhb, de) = head_backward(&self.head, &cache.embedding, dlogits);
        let mut grads = Gradients::zeros(self);
        grads.head_weight = dhw;
        grads.head_bias = dhb;

        let blocks = self.convs.len();
        let mut size = self.arch.input_size >> blocks;
        let area = (size * size) as f32;
        // gradient w.r.t. the last pooled map
        let mut dpool: Vec<f32> = de
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g as f32 / area, size * size))
            .collect();
        for b in (0..blocks).rev() {
            let layer = &self.convs[b];
            size *= 2;
            let hw = size * size;
            let mut dz = vec![0.0f32; layer.out_channels * hw];
            for (g, &i) in dpool.iter().zip(&cache.argmax[b]) {
                dz[i as usize] += g;
            }
            for (d, &a) in dz.iter_mut().zip(&cache.relu[b]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let k = layer.in_channels * 9;
            gemm(layer.out_channels, hw, k, &dz, false, &cache.cols[b], true, 0.0, &mut grads.conv_weight[b]);
            if let Some(db) = grads.conv_bias[b].as_mut() {
                for (o, d) in db.iter_mut().enumerate() {
                    *d = dz[o * hw..(o + 1) * hw].iter().sum();
                }
            }
            if b > 0 {
                let mut dcol = vec![0.0f32; k * hw];
                gemm(k, layer.out_channels, hw, &layer.weight, true, &dz, false, 0.0, &mut dcol);
                dpool = col2im(&dcol, layer.in_channels, size, size);
            }
        }
        grads
    }

    /// Cross-entropy loss of one sample and its parameter gradient scaled by `scale`.
    pub fn sample_gradient(&self, image: &Image, label: usize, scale: f64) -> Result<(f64, Gradients)> {
        let cache = self.forward_cached(image)?;
        let (loss, mut dl) = cross_entropy(&cache.logits, label);
        dl.iter_mut().for_each(|g| *g *= scale);
        Ok((loss, self.backward(&cache, &dl)))
    }

    fn backbone_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.convs {
            c.weight.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            if let Some(b) = &c.bias {
                b.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
        out
    }

    fn head_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.head
            .weight
            .iter()
            .chain(&self.head.bias)
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out
    }

    /// SHA-256 of the convolutional parameters.
    pub fn backbone_checksum(&self) -> String {
        hex::encode(Sha256::digest(self.backbone_bytes()))
    }

    pub fn head_checksum(&self) -> String {
        hex::encode(Sha256::digest(self.head_bytes()))
    }

    pub fn write_checkpoint(&self, meta: &CheckpointMeta, out: &mut impl Write) -> std::io::Result<()> {
        let header = CheckpointHeader {
            architecture: self.arch.clone(),
            seed: self.seed,
            meta: meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        let backbone = self.backbone_bytes();
        let head = self.head_bytes();
        out.write_all(&(backbone.len() as u64).to_le_bytes())?;
        out.write_all(&backbone)?;
        out.write_all(&(head.len() as u64).to_le_bytes())?;
        out.write_all(&head)?;
        Ok(())
    }

    pub fn read_checkpoint(input: &mut impl Read) -> Result<(SmallCnn, CheckpointMeta)> {
        let fmt = |message: String| Error::Format {
            format: "checkpoint",
            expected: CHECKPOINT_VERSION,
            message,
        };
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| fmt(format!("read failed: {e}")))?;
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(fmt(format!("truncated while reading {what} at byte offset {pos}")));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(fmt("not a ucbs checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                format: "checkpoint",
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let hlen = u32::from_le_bytes(take(4, "header length")?.try_into().unwrap()) as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(take(hlen, "header")?).map_err(|e| fmt(format!("bad header: {e}")))?;
        let mut model = SmallCnn::new(header.architecture, header.seed)?;
        let blen = u64::from_le_bytes(take(8, "backbone length")?.try_into().unwrap()) as usize;
        let backbone = take(blen, "backbone")?;
        let mut floats = backbone.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let expected: usize = model
            .convs
            .iter()
            .map(|c| c.weight.len() + c.bias.as_ref().map_or(0, |b| b.len()))
            .sum();
        if blen != expected * 4 {
            return Err(fmt(format!("backbone holds {blen} bytes, expected {}", expected * 4)));
        }
        for c in model.convs.iter_mut() {
            c.weight.iter_mut().for_each(|v| *v = floats.next().unwrap());
            if let Some(b) = c.bias.as_mut() {
                b.iter_mut().for_each(|v| *v = floats.next().unwrap());
            }
        }
        let hlen = u64::from_le_bytes(take(8, "head length")?.try_into().unwrap()) as usize;
        let expected_head = (model.head.weight.len() + model.head.bias.len()) * 8;
        if hlen != expected_head {
            return Err(fmt(format!("head holds {hlen} bytes, expected {expected_head}")));
        }
        let head = take(hlen, "head")?;
        let mut doubles = head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        model.head.weight.iter_mut().for_each(|v| *v = doubles.next().unwrap());
        model.head.bias.iter_mut().for_each(|v| *v = doubles.next().unwrap());
        Ok((model, header.meta))
    }

    pub fn save(&self, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_checkpoint(meta, &mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(SmallCnn, CheckpointMeta)> {
        let path = path.as_ref();
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut f)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Set for binary surrogates; output index 1 is this class.
    pub target_class: Option<String>,
    pub class_names: Vec<String>,
    pub head_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    architecture: Architecture,
    seed: u64,
    meta: CheckpointMeta,
}
