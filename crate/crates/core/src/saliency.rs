//! Similarity-weighted mask accumulation, density normalization and
//! cascaded multi-level fusion.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bbox::iou;
use crate::config::{Ablation, ExplainConfig, FusionOrder};
use crate::detection::{cosine, DetectionVector, TargetSpec};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::map::{minmax_normalize, SaliencyMap};
use crate::maskgen::{apply_mask, MaskSource, SegmentMaskSampler};
use crate::segmentation::slic_segment;

/// `IoU(B_p, B_t) * O_p * cos(C_p, C_t)`.
pub fn similarity(proposal: &DetectionVector, target: &TargetSpec) -> Result<f64> {
    let t = &target.target;
    let c = cosine(&proposal.class_scores, &t.class_scores)?;
    let s = iou(&proposal.bbox, &t.bbox) * proposal.objectness * c;
    Ok(s.clamp(0.0, 1.0))
}

/// Best similarity of any proposal to the target; 0 for no proposals.
pub fn mask_weight(proposals: &[DetectionVector], target: &TargetSpec) -> Result<f64> {
    proposals.iter().try_fold(0.0f64, |best, p| Ok(best.max(similarity(p, target)?)))
}

/// Running sums for one segmentation level: `sum(w_i * M_i)` and the
/// density `sum(M_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelAccumulator {
    width: usize,
    height: usize,
    weighted_sum: Vec<f64>,
    density: Vec<f64>,
    count: usize,
}

impl LevelAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            weighted_sum: vec![0.0; width * height],
            density: vec![0.0; width * height],
            count: 0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn weighted_sum(&self) -> &[f64] {
        &self.weighted_sum
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate(&mut self, mask: &[f32], weight: f64) -> Result<()> {
        if mask.len() != self.density.len() {
            return Err(Error::invalid(format!(
                "mask has {} values, accumulator expects {}",
                mask.len(),
                self.density.len()
            )));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("mask weight {weight} outside [0, 1]")));
        }
        for ((s, d), &m) in self.weighted_sum.iter_mut().zip(&mut self.density).zip(mask) {
            let m = m as f64;
            *s += weight * m;
            *d += m;
        }
        self.count += 1;
        Ok(())
    }

    /// Adds another partial accumulator over the same grid.
    pub fn merge(&mut self, other: &LevelAccumulator) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() });
        }
        for (a, b) in self.weighted_sum.iter_mut().zip(&other.weighted_sum) {
            *a += b;
        }
        for (a, b) in self.density.iter_mut().zip(&other.density) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }
}

/// Per-level saliency: `sum(w M) / density` (zero where density is zero), or
/// `sum(w M) / count` without density normalization.
pub fn finalize_level(acc: &LevelAccumulator, use_density: bool) -> Result<SaliencyMap> {
    if acc.count == 0 {
        return Err(Error::invalid("cannot finalize an empty accumulator"));
    }
    let values = if use_density {
        acc.weighted_sum
            .iter()
            .zip(&acc.density)
            .map(|(&s, &d)| if d > 0.0 { (s / d).max(0.0) } else { 0.0 })
            .collect()
    } else {
        let n = acc.count as f64;
        acc.weighted_sum.iter().map(|&s| (s / n).max(0.0)).collect()
    };
    Ok(SaliencyMap::from_raw(acc.width, acc.height, values))
}

/// Level maps in cascade order plus the intermediate products.
#[derive(Debug, Clone)]
pub struct FusionStack {
    maps: Vec<SaliencyMap>,
}

impl FusionStack {
    pub fn new(maps: Vec<SaliencyMap>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::invalid("fusion needs at least one map"))?;
        for m in &maps[1..] {
            first.ensure_same_dims(m)?;
        }
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[SaliencyMap] {
        &self.maps
    }

    /// `A_1 = (S_1 + S_2) S_2`, `A_k = (A_{k-1} + S_{k+1}) S_{k+1}`.
    pub fn intermediates(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.maps.len().saturating_sub(1));
        for k in 1..self.maps.len() {
            let prev = out.last().map_or(self.maps[0].values(), |a| a.as_slice());
            let next = self.maps[k].values();
            out.push(prev.iter().zip(next).map(|(a, s)| (a + s) * s).collect());
        }
        out
    }
}

/// Runs the cascade and min-max normalizes the last product. Inputs are used
/// as given; callers normalize levels beforehand.
pub fn fuse(stack: &FusionStack) -> Result<SaliencyMap> {
    let (w, h) = stack.maps[0].dims();
    let last = match stack.intermediates().pop() {
        Some(a) => SaliencyMap::new(w, h, a)?,
        None => stack.maps[0].clone(),
    };
    Ok(minmax_normalize(&last))
}

/// Scores `n` masks from `source` against `target`, returning weights in mask
/// index order.
pub fn score_masks(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    source: &dyn MaskSource,
    n: usize,
    batch_size: usize,
    jobs: usize,
) -> Result<Vec<f64>> {
    if source.width() != img.width() || source.height() != img.height() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: (source.width(), source.height()),
        });
    }
    let batch_size = batch_size.max(1);
    let starts: Vec<usize> = (0..n).step_by(batch_size).collect();
    let run_batch = |start: usize| -> Result<Vec<f64>> {
        let end = (start + batch_size).min(n);
        let masked = (start..end)
            .map(|i| apply_mask(img, &source.mask(i)))
            .collect::<Result<Vec<_>>>()?;
        let sets = det.detect_batch(&masked).map_err(|e| match e {
            Error::BatchItem { index, source } => Error::BatchItem { index: start + index, source },
            e => e,
        })?;
        sets.iter().map(|props| mask_weight(props, target)).collect()
    };
    let batches: Vec<Vec<f64>> = match jobs {
        1 => starts.into_iter().map(run_batch).collect::<Result<_>>()?,
        0 => starts.into_par_iter().map(run_batch).collect::<Result<_>>()?,
        j => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(|| starts.into_par_iter().map(run_batch).collect::<Result<_>>())?,
    };
    Ok(batches.into_iter().flatten().collect())
}

/// Accumulates masks in index order, regenerating each from its source.
pub fn accumulate_masks(source: &dyn MaskSource, weights: &[f64]) -> Result<LevelAccumulator> {
    let mut acc = LevelAccumulator::new(source.width(), source.height());
    let mut buf = vec![0.0f32; source.width() * source.height()];
    for (i, &w) in weights.iter().enumerate() {
        source.fill(i, &mut buf);
        acc.accumulate(&buf, w)?;
    }
    Ok(acc)
}

/// Result of scoring one segmentation level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub level_index: usize,
    pub segments_requested: usize,
    pub segments_actual: usize,
    pub weights: Vec<f64>,
    pub accumulator: LevelAccumulator,
    pub elapsed: Duration,
}

/// All levels of one explanation, before composition.
#[derive(Debug, Clone)]
pub struct LevelMaps {
    pub levels: Vec<LevelResult>,
}

impl LevelMaps {
    pub fn detector_calls(&self) -> usize {
        self.levels.iter().map(|l| l.weights.len()).sum()
    }

    /// Raw per-level maps in configuration order.
    pub fn level_maps(&self, use_density: bool) -> Result<Vec<SaliencyMap>> {
        self.levels.iter().map(|l| finalize_level(&l.accumulator, use_density)).collect()
    }

    /// Combines the levels into one normalized map under the given settings.
    pub fn compose(
        &self,
        ablation: Ablation,
        order: FusionOrder,
        normalize_levels: bool,
    ) -> Result<SaliencyMap> {
        let raw = self.level_maps(ablation.use_density)?;
        let mut idx: Vec<usize> = (0..raw.len()).collect();
        idx.sort_by_key(|&i| self.levels[i].segments_requested);
        if order == FusionOrder::FineToCoarse {
            idx.reverse();
        }
        let maps: Vec<SaliencyMap> = idx
            .iter()
            .map(|&i| if normalize_levels { minmax_normalize(&raw[i]) } else { raw[i].clone() })
            .collect();
        if ablation.use_fusion {
            fuse(&FusionStack::new(maps)?)
        } else {
            let (w, h) = maps[0].dims();
            let mut mean = vec![0.0; w * h];
            for m in &maps {
                for (a, v) in mean.iter_mut().zip(m.values()) {
                    *a += v;
                }
            }
            let l = maps.len() as f64;
            mean.iter_mut().for_each(|a| *a /= l);
            Ok(minmax_normalize(&SaliencyMap::new(w, h, mean)?))
        }
    }
}

/// Progress notification emitted after each level.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub level: usize,
    pub levels: usize,
    pub segments: usize,
    pub masks: usize,
    pub elapsed: Duration,
}

type ProgressFn<'a> = Box<dyn Fn(&Progress) + Send + Sync + 'a>;

/// Runs explanations for one detector and configuration.
pub struct Explainer<'a> {
    det: &'a dyn Detector,
    cfg: ExplainConfig,
    progress: Option<ProgressFn<'a>>,
}

impl<'a> Explainer<'a> {
    pub fn new(det: &'a dyn Detector, cfg: ExplainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { det, cfg, progress: None })
    }

    pub fn on_progress(mut self, f: impl Fn(&Progress) + Send + Sync + 'a) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    pub fn config(&self) -> &ExplainConfig {
        &self.cfg
    }

    fn check_target(&self, img: &ImageBuffer, target: &TargetSpec) -> Result<()> {
        target.target.validate()?;
        if let Some(c) = self.det.num_classes() {
            if c != target.target.num_classes() {
                return Err(Error::invalid(format!(
                    "target has {} class scores, detector emits {c}",
                    target.target.num_classes()
                )));
            }
        }
        if img.pixel_count() == 0 {
            return Err(Error::invalid("empty image"));
        }
        Ok(())
    }

    /// Segments, perturbs and scores every level.
    pub fn run_levels(&self, img: &ImageBuffer, target: &TargetSpec) -> Result<LevelMaps> {
        self.check_target(img, target)?;
        let cfg = &self.cfg;
        let mut levels = Vec::with_capacity(cfg.levels());
        for (k, &n_seg) in cfg.segments_per_level.iter().enumerate() {
            let t0 = Instant::now();
            let seg = slic_segment(img, n_seg, cfg.compactness, cfg.slic_iterations)?;
            let sampler = SegmentMaskSampler::new(
                &seg,
                cfg.fill_probability,
                cfg.resize_ratio,
                cfg.master_seed,
                k,
            )?;
            let n = cfg.masks_per_level;
            let weights = score_masks(img, self.det, target, &sampler, n, cfg.batch_size, cfg.jobs)?;
            let accumulator = accumulate_masks(&sampler, &weights)?;
            let elapsed = t0.elapsed();
            log::debug!(
                "level {}/{}: {} segments ({} actual), {n} masks in {:.2?}",
                k + 1,
                cfg.levels(),
                n_seg,
                seg.n_actual(),
                elapsed
            );
            if let Some(f) = &self.progress {
                f(&Progress { level: k, levels: cfg.levels(), segments: seg.n_actual(), masks: n, elapsed });
            }
            levels.push(LevelResult {
                level_index: k,
                segments_requested: n_seg,
                segments_actual: seg.n_actual(),
                weights,
                accumulator,
                elapsed,
            });
        }
        Ok(LevelMaps { levels })
    }

    pub fn explain(&self, img: &ImageBuffer, target: &TargetSpec) -> Result<SaliencyMap> {
        let levels = self.run_levels(img, target)?;
        levels.compose(self.cfg.ablation, self.cfg.fusion_order, self.cfg.normalize_levels)
    }
}

/// Segments at every level, scores `N` masks per level against `target`, and
/// fuses the density-normalized level maps.
pub fn explain(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    cfg: &ExplainConfig,
) -> Result<SaliencyMap> {
    Explainer::new(det, cfg.clone())?.explain(img, target)
}
