//! Grid-mask baseline: random coarse grids, upsampled and shifted, weighted
//! by the same detection similarity; no density map, no fusion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::TargetSpec;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::map::{minmax_normalize, SaliencyMap};
use crate::maskgen::{bernoulli, bernoulli_threshold, mask_rng, upsample_crop, MaskBatch, MaskSource};
use crate::saliency::{accumulate_masks, finalize_level, score_masks};

/// Level tag mixed into per-mask seeds so grid masks never collide with
/// segment masks drawn from the same master seed.
const GRID_LEVEL_TAG: usize = 0xD_215E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridMaskConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub fill_probability: f64,
    pub masks: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub jobs: usize,
}

impl Default for GridMaskConfig {
    fn default() -> Self {
        Self {
            grid_h: 16,
            grid_w: 16,
            fill_probability: 0.5,
            masks: 5000,
            seed: 0,
            batch_size: 32,
            jobs: 0,
        }
    }
}

impl GridMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::invalid("grid resolution must be at least 1x1"));
        }
        if !(0.0..=1.0).contains(&self.fill_probability) {
            return Err(Error::invalid("fill_probability must lie in [0, 1]"));
        }
        if self.masks == 0 {
            return Err(Error::invalid("at least one mask is required"));
        }
        Ok(())
    }

    pub fn detector_calls(&self) -> usize {
        self.masks
    }
}

/// Indexable grid masks for a `width x height` image.
#[derive(Debug, Clone)]
pub struct GridMaskSampler {
    cfg: GridMaskConfig,
    width: usize,
    height: usize,
    cell_w: usize,
    cell_h: usize,
}

impl GridMaskSampler {
    pub fn new(cfg: &GridMaskConfig, width: usize, height: usize) -> Result<Self> {
        cfg.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must have non-zero dimensions"));
        }
        Ok(Self {
            cfg: cfg.clone(),
            width,
            height,
            cell_w: width.div_ceil(cfg.grid_w),
            cell_h: height.div_ceil(cfg.grid_h),
        })
    }

    /// `((w_s + 1) * cell_w, (h_s + 1) * cell_h)`.
    pub fn upsampled_dims(&self) -> (usize, usize) {
        ((self.cfg.grid_w + 1) * self.cell_w, (self.cfg.grid_h + 1) * self.cell_h)
    }
}

impl MaskSource for GridMaskSampler {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn fill(&self, index: usize, out: &mut [f32]) {
        let mut rng = mask_rng(self.cfg.seed, GRID_LEVEL_TAG, index);
        let (gw, gh) = (self.cfg.grid_w, self.cfg.grid_h);
        let threshold = bernoulli_threshold(self.cfg.fill_probability);
        let grid: Vec<f32> = (0..gw * gh).map(|_| bernoulli(&mut rng, threshold)).collect();
        let off_y = rng.gen_range(0..self.cell_h);
        let off_x = rng.gen_range(0..self.cell_w);
        let (up_w, up_h) = self.upsampled_dims();
        upsample_crop(&grid, gw, gh, up_w, up_h, off_x, off_y, self.width, self.height, out);
    }
}

pub fn generate_grid_masks(cfg: &GridMaskConfig, height: usize, width: usize) -> Result<MaskBatch> {
    let sampler = GridMaskSampler::new(cfg, width, height)?;
    Ok(MaskBatch::collect(&sampler, cfg.masks, 0, cfg.seed, cfg.fill_probability, 0.0))
}

/// Weighted mean of grid masks, min-max normalized.
pub fn drise_explain(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    cfg: &GridMaskConfig,
) -> Result<SaliencyMap> {
    target.target.validate()?;
    let sampler = GridMaskSampler::new(cfg, img.width(), img.height())?;
    let weights = score_masks(img, det, target, &sampler, cfg.masks, cfg.batch_size, cfg.jobs)?;
    let acc = accumulate_masks(&sampler, &weights)?;
    Ok(minmax_normalize(&finalize_level(&acc, false)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64, n: usize) -> GridMaskConfig {
        GridMaskConfig { fill_probability: p, masks: n, seed: 3, ..Default::default() }
    }

    #[test]
    fn extreme_probabilities() {
        let ones = generate_grid_masks(&cfg(1.0, 8), 50, 70).unwrap();
        assert!(ones.masks.iter().flatten().all(|&v| v == 1.0));
        let zeros = generate_grid_masks(&cfg(0.0, 8), 50, 70).unwrap();
        assert!(zeros.masks.iter().flatten().all(|&v| v == 0.0));
        assert_eq!((zeros.width, zeros.height), (70, 50));
    }

    #[test]
    fn grand_mean_near_p() {
        let batch = generate_grid_masks(&cfg(0.5, 5000), 32, 32).unwrap();
        let m = batch.grand_mean();
        assert!((0.48..=0.52).contains(&m), "grand mean {m}");
    }

    #[test]
    fn upsampled_geometry() {
        let s = GridMaskSampler::new(&GridMaskConfig::default(), 100, 60).unwrap();
        // cells of ceil(100/16)=7 and ceil(60/16)=4
        assert_eq!(s.upsampled_dims(), (17 * 7, 17 * 4));
        assert!(GridMaskSampler::new(&GridMaskConfig { grid_h: 0, ..Default::default() }, 10, 10).is_err());
    }

    #[test]
    fn reproducible() {
        let a = generate_grid_masks(&cfg(0.5, 10), 20, 20).unwrap();
        assert_eq!(a, generate_grid_masks(&cfg(0.5, 10), 20, 20).unwrap());
    }

    #[test]
    fn defaults_issue_5000_calls() {
        let c = GridMaskConfig::default();
        assert_eq!((c.grid_h, c.grid_w, c.fill_probability), (16, 16, 0.5));
        assert_eq!(c.detector_calls(), 5000);
    }
}
