//! Perturbation masks: per-segment Bernoulli fill, bilinear upsample and
//! random crop.
//!
//! Every mask is generated from its own ChaCha8 stream keyed by
//! `(master_seed, level_index, mask_index)`, so any mask can be rebuilt in
//! isolation and batches can be produced in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};
use crate::segmentation::SegmentationMap;

/// A family of indexable masks sharing one size.
pub trait MaskSource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// Writes mask `index` into `out` (length `width * height`).
    fn fill(&self, index: usize, out: &mut [f32]);

    fn mask(&self, index: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.width() * self.height()];
        self.fill(index, &mut out);
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one mask, derived from the run seed and the mask's coordinates.
pub fn mask_seed(master_seed: u64, level_index: usize, mask_index: usize) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ level_index as u64);
    splitmix64(b ^ (mask_index as u64).rotate_left(32))
}

pub(crate) fn mask_rng(master_seed: u64, level_index: usize, mask_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mask_seed(master_seed, level_index, mask_index))
}

/// `P(draw < threshold) = p` for a uniform 32-bit draw.
pub(crate) fn bernoulli_threshold(p: f64) -> u64 {
    (p * (1u64 << 32) as f64).round() as u64
}

#[inline]
pub(crate) fn bernoulli(rng: &mut ChaCha8Rng, threshold: u64) -> f32 {
    if u64::from(rng.gen::<u32>()) < threshold {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Source sample positions for bilinear resampling with half-pixel centers.
fn axis_taps(src_len: usize, dst_len: usize, offset: usize, count: usize) -> Vec<(usize, usize, f32)> {
    let scale = src_len as f64 / dst_len as f64;
    (offset..offset + count)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resampling of a `src_w x src_h` source (read through `value`)
/// to `up_w x up_h`, evaluating only the `out_w x out_h` window at
/// `(off_x, off_y)`. Each source row is interpolated horizontally once and
/// reused by every output row that samples it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn resample_window(
    src_w: usize,
    src_h: usize,
    up_w: usize,
    up_h: usize,
    off_x: usize,
    off_y: usize,
    out_w: usize,
    out_h: usize,
    value: impl Fn(usize, usize) -> f32,
    out: &mut [f32],
) {
    let xs = axis_taps(src_w, up_w, off_x, out_w);
    let ys = axis_taps(src_h, up_h, off_y, out_h);
    let fill_row = |y: usize, buf: &mut [f32]| {
        for (o, &(x0, x1, tx)) in buf.iter_mut().zip(&xs) {
            *o = lerp(value(x0, y), value(x1, y), tx);
        }
    };
    let (mut ya, mut top) = (usize::MAX, vec![0.0f32; out_w]);
    let (mut yb, mut bottom) = (usize::MAX, vec![0.0f32; out_w]);
    for (row, &(y0, y1, ty)) in out.chunks_exact_mut(out_w).zip(&ys) {
        if ya != y0 {
            if yb == y0 {
                std::mem::swap(&mut top, &mut bottom);
                std::mem::swap(&mut ya, &mut yb);
            } else {
                fill_row(y0, &mut top);
                ya = y0;
            }
        }
        if yb != y1 {
            fill_row(y1, &mut bottom);
            yb = y1;
        }
        for ((o, &t), &b) in row.iter_mut().zip(&top).zip(&bottom) {
            *o = lerp(t, b, ty).clamp(0.0, 1.0);
        }
    }
}

/// Bilinearly upsamples `grid` (`gw x gh`) to `up_w x up_h` and writes the
/// `out_w x out_h` window at `(off_x, off_y)` into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn upsample_crop(
    grid: &[f32],
    gw: usize,
    gh: usize,
    up_w: usize,
    up_h: usize,
    off_x: usize,
    off_y: usize,
    out_w: usize,
    out_h: usize,
    out: &mut [f32],
) {
    resample_window(gw, gh, up_w, up_h, off_x, off_y, out_w, out_h, |x, y| grid[y * gw + x], out);
}

/// Masks built from one segmentation level.
#[derive(Debug, Clone)]
pub struct SegmentMaskSampler<'a> {
    seg: &'a SegmentationMap,
    threshold: u64,
    seed: u64,
    level_index: usize,
    up_w: usize,
    up_h: usize,
}

impl<'a> SegmentMaskSampler<'a> {
    pub fn new(
        seg: &'a SegmentationMap,
        fill_probability: f64,
        resize_ratio: f64,
        seed: u64,
        level_index: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&fill_probability) {
            return Err(Error::invalid("fill probability must lie in [0, 1]"));
        }
        if !resize_ratio.is_finite() || resize_ratio < 0.0 {
            return Err(Error::invalid("resize ratio must be finite and non-negative"));
        }
        let scale = resize_ratio + 1.0;
        let up_w = ((scale * seg.width() as f64).floor() as usize).max(seg.width());
        let up_h = ((scale * seg.height() as f64).floor() as usize).max(seg.height());
        Ok(Self { seg, threshold: bernoulli_threshold(fill_probability), seed, level_index, up_w, up_h })
    }

    /// Size of the upsampled grid the crop is taken from.
    pub fn upsampled_dims(&self) -> (usize, usize) {
        (self.up_w, self.up_h)
    }
}

impl MaskSource for SegmentMaskSampler<'_> {
    fn width(&self) -> usize {
        self.seg.width()
    }

    fn height(&self) -> usize {
        self.seg.height()
    }

    fn fill(&self, index: usize, out: &mut [f32]) {
        let mut rng = mask_rng(self.seed, self.level_index, index);
        let on: Vec<f32> = (0..self.seg.n_actual()).map(|_| bernoulli(&mut rng, self.threshold)).collect();
        let (w, h) = (self.width(), self.height());
        // Offsets drawn from the range where the crop fits.
        let off_y = rng.gen_range(0..=self.up_h - h);
        let off_x = rng.gen_range(0..=self.up_w - w);
        // The binary segment image is read through the label map.
        let labels = self.seg.labels();
        let value = |x: usize, y: usize| on[labels[y * w + x] as usize];
        resample_window(w, h, self.up_w, self.up_h, off_x, off_y, w, h, value, out);
    }
}

/// N masks for one level, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBatch {
    pub level_index: usize,
    pub seed: u64,
    pub fill_probability: f64,
    pub resize_ratio: f64,
    pub width: usize,
    pub height: usize,
    pub masks: Vec<Vec<f32>>,
}

impl MaskBatch {
    pub(crate) fn collect(
        source: &impl MaskSource,
        n: usize,
        level_index: usize,
        seed: u64,
        fill_probability: f64,
        resize_ratio: f64,
    ) -> Self {
        let masks = (0..n).into_par_iter().map(|i| source.mask(i)).collect();
        Self {
            level_index,
            seed,
            fill_probability,
            resize_ratio,
            width: source.width(),
            height: source.height(),
            masks,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Mean of all values of all masks.
    pub fn grand_mean(&self) -> f64 {
        let total: f64 = self.masks.iter().flat_map(|m| m.iter()).map(|&v| v as f64).sum();
        total / (self.masks.len() * self.width * self.height) as f64
    }

    /// Per-pixel mean over the batch.
    pub fn pixel_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.width * self.height];
        for m in &self.masks {
            for (a, &v) in acc.iter_mut().zip(m) {
                *a += v as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= self.masks.len() as f64);
        acc
    }
}

/// Generates `n` masks for one segmentation level.
pub fn generate_masks(
    seg: &SegmentationMap,
    n: usize,
    p: f64,
    r: f64,
    seed: u64,
    level_index: usize,
) -> Result<MaskBatch> {
    let sampler = SegmentMaskSampler::new(seg, p, r, seed, level_index)?;
    Ok(MaskBatch::collect(&sampler, n, level_index, seed, p, r))
}

/// Per-pixel, per-channel product `img * mask`.
pub fn apply_mask(img: &ImageBuffer, mask: &[f32]) -> Result<ImageBuffer> {
    if mask.len() != img.pixel_count() {
        return Err(Error::invalid(format!(
            "mask has {} values, image has {} pixels",
            mask.len(),
            img.pixel_count()
        )));
    }
    let mut data = img.data().to_vec();
    for (px, &m) in data.chunks_exact_mut(CHANNELS).zip(mask) {
        px[0] *= m;
        px[1] *= m;
        px[2] *= m;
    }
    Ok(ImageBuffer::from_parts_unchecked(img.width(), img.height(), data))
}

/// Quantizes a mask to 8-bit grayscale for debug dumps.
pub fn mask_to_gray8(mask: &[f32]) -> Vec<u8> {
    mask.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::slic_segment;

    fn grid_seg(w: usize, h: usize, cell: usize) -> SegmentationMap {
        let cols = w.div_ceil(cell) as u32;
        let labels: Vec<u32> =
            (0..w * h).map(|i| ((i / w) / cell) as u32 * cols + ((i % w) / cell) as u32).collect();
        SegmentationMap::from_labels(w, h, &labels).unwrap()
    }

    #[test]
    fn extreme_probabilities() {
        let seg = grid_seg(20, 16, 4);
        let ones = generate_masks(&seg, 10, 1.0, 2.2, 1, 0).unwrap();
        assert!(ones.masks.iter().flatten().all(|&v| v == 1.0));
        let zeros = generate_masks(&seg, 10, 0.0, 2.2, 1, 0).unwrap();
        assert!(zeros.masks.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_ratio_gives_binary_segment_fills() {
        let seg = grid_seg(20, 16, 4);
        let batch = generate_masks(&seg, 20, 0.5, 0.0, 9, 2).unwrap();
        for m in &batch.masks {
            let mut per_segment = vec![None; seg.n_actual()];
            for (i, &v) in m.iter().enumerate() {
                assert!(v == 0.0 || v == 1.0);
                let slot = &mut per_segment[seg.labels()[i] as usize];
                assert!(slot.is_none() || *slot == Some(v));
                *slot = Some(v);
            }
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let seg = grid_seg(24, 24, 6);
        let a = generate_masks(&seg, 16, 0.5, 2.2, 42, 1).unwrap();
        let b = generate_masks(&seg, 16, 0.5, 2.2, 42, 1).unwrap();
        assert_eq!(a, b);
        let c = generate_masks(&seg, 16, 0.5, 2.2, 43, 1).unwrap();
        assert_ne!(a.masks, c.masks);
        let d = generate_masks(&seg, 16, 0.5, 2.2, 42, 2).unwrap();
        assert_ne!(a.masks, d.masks);
        // a single mask is reconstructable in isolation
        let s = SegmentMaskSampler::new(&seg, 0.5, 2.2, 42, 1).unwrap();
        assert_eq!(s.mask(7), a.masks[7]);
    }

    #[test]
    fn statistics_converge_to_p() {
        let region = crate::bbox::BBox::new(20.0, 12.0, 44.0, 40.0).unwrap();
        let scene = crate::synthetic::BlobScene { width: 64, height: 64, region, seed: 9 };
        let img = crate::synthetic::render_blob_scene(&scene).unwrap();
        let seg = slic_segment(&img, 150, 10.0, 10).unwrap();
        assert!(seg.n_actual() >= 100);
        let batch = generate_masks(&seg, 800, 0.5, 2.2, 5, 0).unwrap();
        let mean = batch.grand_mean();
        assert!((0.48..=0.52).contains(&mean), "grand mean {mean}");
        for m in batch.pixel_means() {
            assert!((m - 0.5).abs() <= 0.05, "pixel mean {m}");
        }
        assert!(batch.masks.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn upsampled_size_follows_ratio() {
        let seg = grid_seg(10, 20, 5);
        let s = SegmentMaskSampler::new(&seg, 0.5, 2.2, 0, 0).unwrap();
        assert_eq!(s.upsampled_dims(), (32, 64));
        assert!(SegmentMaskSampler::new(&seg, 1.5, 2.2, 0, 0).is_err());
        assert!(SegmentMaskSampler::new(&seg, 0.5, -1.0, 0, 0).is_err());
    }

    #[test]
    fn bilinear_half_pixel_upsample() {
        // 2x1 grid [0, 1] upsampled to 4 wide: centers map to -0.25, 0.25, 0.75, 1.25
        let mut out = vec![0.0; 4];
        upsample_crop(&[0.0, 1.0], 2, 1, 4, 1, 0, 0, 4, 1, &mut out);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn apply_mask_examples() {
        let img = ImageBuffer::filled(3, 2, [0.8, 0.8, 0.8]).unwrap();
        assert_eq!(apply_mask(&img, &[1.0; 6]).unwrap(), img);
        assert!(apply_mask(&img, &[0.0; 6]).unwrap().data().iter().all(|&v| v == 0.0));
        let half = apply_mask(&img, &[0.5; 6]).unwrap();
        assert!(half.data().iter().all(|&v| (v - 0.4).abs() < 1e-7));
        assert!(apply_mask(&img, &[1.0; 5]).is_err());
    }
}
