//! Deletion and insertion curves.

use serde::{Deserialize, Serialize};

use crate::detection::TargetSpec;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};
use crate::map::SaliencyMap;
use crate::saliency::mask_weight;

pub const DEFAULT_STEPS: usize = 100;

const BLUR_TAPS: usize = 11;
const BLUR_PASSES: usize = 3;
/// Images scored per detector batch.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

impl Curve {
    pub fn first_score(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.score)
    }

    pub fn last_score(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.score)
    }
}

/// Trapezoid area under the curve.
pub fn curve_auc(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fraction - w[0].fraction) * (w[0].score + w[1].score) / 2.0)
        .sum()
}

/// Pixel indices by descending saliency, ties broken by row-major index.
pub fn pixel_order(m: &SaliencyMap) -> Vec<usize> {
    let v = m.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

fn binomial_kernel() -> [f32; BLUR_TAPS] {
    let mut k = [0.0f32; BLUR_TAPS];
    let mut c = 1u64;
    for (i, slot) in k.iter_mut().enumerate() {
        *slot = c as f32 / 1024.0;
        c = c * (BLUR_TAPS - 1 - i) as u64 / (i as u64 + 1);
    }
    k
}

/// Separable 11-tap binomial blur applied three times, edges clamped.
pub fn blurred_baseline(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = img.dims();
    let kernel = binomial_kernel();
    let r = (BLUR_TAPS / 2) as isize;
    let mut cur = img.data().to_vec();
    let mut tmp = vec![0.0f32; cur.len()];
    for _ in 0..BLUR_PASSES {
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    let mut acc = 0.0f32;
                    for (t, k) in kernel.iter().enumerate() {
                        let sx = (x as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                        acc += k * cur[(y * w + sx) * CHANNELS + c];
                    }
                    tmp[(y * w + x) * CHANNELS + c] = acc;
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    let mut acc = 0.0f32;
                    for (t, k) in kernel.iter().enumerate() {
                        let sy = (y as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                        acc += k * tmp[(sy * w + x) * CHANNELS + c];
                    }
                    cur[(y * w + x) * CHANNELS + c] = acc.clamp(0.0, 1.0);
                }
            }
        }
    }
    ImageBuffer::from_parts_unchecked(w, h, cur)
}

/// Starts from `start` and, step by step, copies pixels from `fill` in
/// `order`, scoring every state including the initial one. After step `k`
/// the first `floor(k * hw / steps)` pixels of `order` have been copied.
pub fn faithfulness_curve(
    start: &ImageBuffer,
    fill: &ImageBuffer,
    order: &[usize],
    det: &dyn Detector,
    target: &TargetSpec,
    steps: usize,
) -> Result<Curve> {
    if steps < 2 {
        return Err(Error::invalid("curves need at least 2 steps"));
    }
    if start.dims() != fill.dims() {
        return Err(Error::DimensionMismatch { expected: start.dims(), actual: fill.dims() });
    }
    let hw = start.pixel_count();
    if order.len() != hw || order.iter().any(|&i| i >= hw) {
        return Err(Error::invalid("pixel order must cover every pixel once"));
    }

    let mut state = start.clone();
    let mut copied = 0usize;
    let mut points = Vec::with_capacity(steps + 1);
    let mut step = 0usize;
    while step <= steps {
        let end = (step + CHUNK).min(steps + 1);
        let mut batch = Vec::with_capacity(end - step);
        for k in step..end {
            let target_count = k * hw / steps;
            for &idx in &order[copied..target_count] {
                state.copy_pixel_from(fill, idx);
            }
            copied = target_count;
            batch.push(state.clone());
        }
        let results = det.detect_batch(&batch)?;
        for (k, proposals) in (step..end).zip(results) {
            points.push(CurvePoint {
                fraction: k as f64 / steps as f64,
                score: mask_weight(&proposals, target)?,
            });
        }
        step = end;
    }
    let auc = curve_auc(&points);
    Ok(Curve { points, auc })
}

/// Removes pixels in saliency order, replacing them with `baseline`
/// (black when `None`).
pub fn deletion_curve(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    m: &SaliencyMap,
    steps: usize,
    baseline: Option<&ImageBuffer>,
) -> Result<Curve> {
    check_map(img, m)?;
    let black;
    let fill = match baseline {
        Some(b) => b,
        None => {
            black = ImageBuffer::filled(img.width(), img.height(), [0.0; 3])?;
            &black
        }
    };
    faithfulness_curve(img, fill, &pixel_order(m), det, target, steps)
}

/// Restores pixels in saliency order, starting from `baseline`
/// (the blurred image when `None`).
pub fn insertion_curve(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    m: &SaliencyMap,
    steps: usize,
    baseline: Option<&ImageBuffer>,
) -> Result<Curve> {
    check_map(img, m)?;
    let blurred;
    let start = match baseline {
        Some(b) => b,
        None => {
            blurred = blurred_baseline(img);
            &blurred
        }
    };
    faithfulness_curve(start, img, &pixel_order(m), det, target, steps)
}

fn check_map(img: &ImageBuffer, m: &SaliencyMap) -> Result<()> {
    if img.dims() != m.dims() {
        return Err(Error::DimensionMismatch { expected: img.dims(), actual: m.dims() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;
    use crate::detector::{make_blob_detector, BlobDetector, BlobSpec};

    fn scene() -> (ImageBuffer, BlobDetector, TargetSpec, BBox) {
        let (w, h) = (40, 30);
        let region = BBox::new(10.0, 8.0, 20.0, 18.0).unwrap();
        let mut img = ImageBuffer::filled(w, h, [0.2, 0.2, 0.2]).unwrap();
        for idx in region.pixel_indices(w, h) {
            img.set_pixel_rgb(idx, [0.9, 0.9, 0.9]);
        }
        let det = make_blob_detector(BlobSpec::for_region(region)).unwrap();
        let target = TargetSpec::new(det.detect(&img).unwrap()[0].clone()).unwrap();
        (img, det, target, region)
    }

    fn ideal_map(region: &BBox, w: usize, h: usize) -> SaliencyMap {
        let mut v = vec![0.0; w * h];
        for idx in region.pixel_indices(w, h) {
            v[idx] = 1.0;
        }
        SaliencyMap::new(w, h, v).unwrap()
    }

    #[test]
    fn kernel_is_binomial() {
        let k = binomial_kernel();
        assert_eq!(k[0], 1.0 / 1024.0);
        assert_eq!(k[5], 252.0 / 1024.0);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn blur_keeps_constant_images() {
        let img = ImageBuffer::filled(9, 7, [0.3, 0.6, 0.9]).unwrap();
        let b = blurred_baseline(&img);
        for (a, b) in img.data().iter().zip(b.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pixel_order_ties_row_major() {
        let m = SaliencyMap::new(2, 2, vec![0.5, 1.0, 0.5, 0.0]).unwrap();
        assert_eq!(pixel_order(&m), vec![1, 0, 2, 3]);
    }

    #[test]
    fn auc_of_constant_curve() {
        let p = [
            CurvePoint { fraction: 0.0, score: 0.4 },
            CurvePoint { fraction: 0.5, score: 0.4 },
            CurvePoint { fraction: 1.0, score: 0.4 },
        ];
        assert!((curve_auc(&p) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn deletion_collapses_on_ideal_map() {
        let (img, det, target, region) = scene();
        let (w, h) = img.dims();
        let m = ideal_map(&region, w, h);
        let c = deletion_curve(&img, &det, &target, &m, DEFAULT_STEPS, None).unwrap();
        assert_eq!(c.points.len(), DEFAULT_STEPS + 1);
        let clean = mask_weight(&det.detect(&img).unwrap(), &target).unwrap();
        assert_eq!(c.first_score(), clean);
        let area = region.pixel_indices(w, h).len();
        let per_step = (w * h) as f64 / DEFAULT_STEPS as f64;
        let k = (area as f64 / per_step).ceil() as usize;
        assert_eq!(c.points[k].score, 0.0);
        assert!(c.auc < area as f64 / (w * h) as f64 + 0.1);
        assert!(c.points.windows(2).all(|p| p[1].fraction > p[0].fraction));
    }

    #[test]
    fn deletion_endpoint_is_black_image_score() {
        let (img, det, target, region) = scene();
        let m = ideal_map(&region, img.width(), img.height());
        let c = deletion_curve(&img, &det, &target, &m, 10, None).unwrap();
        let black = ImageBuffer::filled(img.width(), img.height(), [0.0; 3]).unwrap();
        let expected = mask_weight(&det.detect(&black).unwrap(), &target).unwrap();
        assert_eq!(c.last_score(), expected);
    }

    #[test]
    fn insertion_recovers_clean_score() {
        let (img, det, target, region) = scene();
        let (w, h) = img.dims();
        let m = ideal_map(&region, w, h);
        let c = insertion_curve(&img, &det, &target, &m, DEFAULT_STEPS, None).unwrap();
        let clean = mask_weight(&det.detect(&img).unwrap(), &target).unwrap();
        assert!((c.last_score() - clean).abs() < 1e-12);
        let area = region.pixel_indices(w, h).len();
        let k = (area as f64 * DEFAULT_STEPS as f64 / (w * h) as f64).ceil() as usize;
        assert!(c.points[k].score >= 0.9 * clean);

        let flat = SaliencyMap::zeros(w, h);
        let c0 = insertion_curve(&img, &det, &target, &flat, DEFAULT_STEPS, None).unwrap();
        assert!(c.auc > c0.auc);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (img, det, target, region) = scene();
        let m = ideal_map(&region, img.width(), img.height());
        assert!(deletion_curve(&img, &det, &target, &m, 1, None).is_err());
        let small = SaliencyMap::zeros(3, 3);
        assert!(insertion_curve(&img, &det, &target, &small, 10, None).is_err());
    }
}
