//! Pipeline parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order in which per-level maps enter the fusion cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOrder {
    /// First map is the level with the most segments.
    #[default]
    FineToCoarse,
    CoarseToFine,
}

/// Ablation switches. Both enabled is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub use_density: bool,
    pub use_fusion: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { use_density: true, use_fusion: true }
    }
}

impl Ablation {
    pub const SEGMENT_ONLY: Ablation = Ablation { use_density: false, use_fusion: false };
    pub const DENSITY: Ablation = Ablation { use_density: true, use_fusion: false };
    pub const FULL: Ablation = Ablation { use_density: true, use_fusion: true };

    pub fn label(&self) -> &'static str {
        match (self.use_density, self.use_fusion) {
            (false, false) => "segment-only",
            (true, false) => "+density",
            (false, true) => "+fusion (no density)",
            (true, true) => "+density+fusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Requested superpixel count per level; its length is the level count.
    pub segments_per_level: Vec<usize>,
    pub masks_per_level: usize,
    pub fill_probability: f64,
    /// Upsampling headroom: masks are upsampled by `1 + resize_ratio` before cropping.
    pub resize_ratio: f64,
    pub master_seed: u64,
    pub ablation: Ablation,
    pub fusion_order: FusionOrder,
    /// Min-max normalize each level map before fusing or averaging.
    pub normalize_levels: bool,
    pub compactness: f64,
    pub slic_iterations: usize,
    /// Masked images per detector batch.
    pub batch_size: usize,
    /// Worker threads for mask scoring; 0 uses all cores, 1 runs inline.
    pub jobs: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            segments_per_level: vec![150, 300, 600, 1200, 2400],
            masks_per_level: 800,
            fill_probability: 0.5,
            resize_ratio: 2.2,
            master_seed: 0,
            ablation: Ablation::default(),
            fusion_order: FusionOrder::default(),
            normalize_levels: true,
            compactness: 10.0,
            slic_iterations: 10,
            batch_size: 32,
            jobs: 0,
        }
    }
}

impl ExplainConfig {
    pub fn levels(&self) -> usize {
        self.segments_per_level.len()
    }

    /// Detector invocations one explanation issues.
    pub fn detector_calls(&self) -> usize {
        self.levels() * self.masks_per_level
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments_per_level.is_empty() {
            return Err(Error::invalid("at least one segmentation level is required"));
        }
        if self.segments_per_level.contains(&0) {
            return Err(Error::invalid("segment counts must be positive"));
        }
        let w = &self.segments_per_level;
        let increasing = w.windows(2).all(|p| p[0] < p[1]);
        let decreasing = w.windows(2).all(|p| p[0] > p[1]);
        if !(increasing || decreasing) {
            return Err(Error::invalid("segments_per_level must be strictly monotonic"));
        }
        if self.masks_per_level == 0 {
            return Err(Error::invalid("masks_per_level must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fill_probability) {
            return Err(Error::invalid("fill_probability must lie in [0, 1]"));
        }
        if !self.resize_ratio.is_finite() || self.resize_ratio < 0.0 {
            return Err(Error::invalid("resize_ratio must be finite and non-negative"));
        }
        if !self.compactness.is_finite() || self.compactness < 0.0 {
            return Err(Error::invalid("compactness must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    /// Level indices ordered for fusion: position 0 becomes the first map in the cascade.
    pub fn fusion_sequence(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.levels()).collect();
        idx.sort_by_key(|&i| self.segments_per_level[i]);
        if self.fusion_order == FusionOrder::FineToCoarse {
            idx.reverse();
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExplainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.levels(), 5);
        assert_eq!(c.segments_per_level, vec![150, 300, 600, 1200, 2400]);
        assert_eq!(c.masks_per_level, 800);
        assert_eq!(c.fill_probability, 0.5);
        assert_eq!(c.resize_ratio, 2.2);
        assert_eq!(c.detector_calls(), 4000);
    }

    #[test]
    fn fusion_sequence_orders() {
        let mut c = ExplainConfig::default();
        assert_eq!(c.fusion_sequence(), vec![4, 3, 2, 1, 0]);
        c.fusion_order = FusionOrder::CoarseToFine;
        assert_eq!(c.fusion_sequence(), vec![0, 1, 2, 3, 4]);
        c.segments_per_level = vec![900, 300, 100];
        assert_eq!(c.fusion_sequence(), vec![2, 1, 0]);
    }

    #[test]
    fn validation_errors() {
        let bad = |f: fn(&mut ExplainConfig)| {
            let mut c = ExplainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.segments_per_level.clear()));
        assert!(bad(|c| c.segments_per_level = vec![100, 100]));
        assert!(bad(|c| c.segments_per_level = vec![100, 300, 200]));
        assert!(bad(|c| c.masks_per_level = 0));
        assert!(bad(|c| c.fill_probability = 1.5));
        assert!(bad(|c| c.resize_ratio = -1.0));
    }

    #[test]
    fn partial_toml_like_json_uses_defaults() {
        let c: ExplainConfig =
            serde_json::from_str(r#"{"masks_per_level": 10, "ablation": {"use_fusion": false}}"#)
                .unwrap();
        assert_eq!(c.masks_per_level, 10);
        assert!(c.ablation.use_density);
        assert!(!c.ablation.use_fusion);
        assert_eq!(c.levels(), 5);
    }
}
