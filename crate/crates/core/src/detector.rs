//! The black-box detector boundary: an image goes in, proposals come out.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::detection::{DetectionVector, ProposalSet};
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};

/// Proposals below this confidence are dropped by protocol clients.
pub const DEFAULT_SCORE_FLOOR: f64 = 0.05;

/// An object detector treated as a deterministic function of its input.
///
/// Implementations take `&self`; backends with mutable transport state
/// serialize internally.
pub trait Detector: Send + Sync {
    /// Class count `C`, if known before the first call.
    fn num_classes(&self) -> Option<usize>;

    fn class_names(&self) -> Option<Vec<String>> {
        None
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet>;

    /// Element-wise equal to mapping [`Detector::detect`], order preserved.
    /// A failure reports the offending position.
    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        if imgs.is_empty() {
            return Err(Error::invalid("detect_batch needs at least one image"));
        }
        imgs.iter()
            .enumerate()
            .map(|(index, img)| {
                self.detect(img).map_err(|e| Error::BatchItem { index, source: Box::new(e) })
            })
            .collect()
    }

    /// Short human-readable descriptor.
    fn describe(&self) -> String;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn num_classes(&self) -> Option<usize> {
        (**self).num_classes()
    }
    fn class_names(&self) -> Option<Vec<String>> {
        (**self).class_names()
    }
    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        (**self).detect(img)
    }
    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        (**self).detect_batch(imgs)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<D: Detector + ?Sized> Detector for std::sync::Arc<D> {
    fn num_classes(&self) -> Option<usize> {
        (**self).num_classes()
    }
    fn class_names(&self) -> Option<Vec<String>> {
        (**self).class_names()
    }
    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        (**self).detect(img)
    }
    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        (**self).detect_batch(imgs)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Configuration of a [`BlobDetector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    /// Box reported for the single proposal.
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Pixels whose brightness drives the response.
    pub evidence: BBox,
    /// Class profile, scaled by the evidence brightness.
    pub profile: Vec<f64>,
    #[serde(default = "default_min_objectness")]
    pub min_objectness: f64,
}

fn default_min_objectness() -> f64 {
    DEFAULT_SCORE_FLOOR
}

impl BlobSpec {
    /// Box and evidence coincide; three-class default profile.
    pub fn for_region(region: BBox) -> Self {
        Self {
            bbox: region,
            evidence: region,
            profile: vec![0.8, 0.15, 0.05],
            min_objectness: DEFAULT_SCORE_FLOOR,
        }
    }
}

/// Synthetic detector with a known ground-truth evidence region.
///
/// Objectness is the mean brightness inside the evidence region; class scores
/// are the profile scaled by that brightness. Below `min_objectness` nothing
/// is reported.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDetector {
    spec: BlobSpec,
}

pub fn make_blob_detector(spec: BlobSpec) -> Result<BlobDetector> {
    if spec.profile.is_empty() || spec.profile.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("blob profile must be non-empty with entries in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&spec.min_objectness) {
        return Err(Error::invalid("min_objectness must lie in [0, 1]"));
    }
    Ok(BlobDetector { spec })
}

impl BlobDetector {
    pub fn spec(&self) -> &BlobSpec {
        &self.spec
    }

    /// Mean brightness of `img` over the evidence region.
    pub fn evidence_brightness(&self, img: &ImageBuffer) -> f64 {
        let (w, h) = img.dims();
        let (xs, ys) = self.spec.evidence.pixel_ranges(w, h);
        let n = xs.len() * ys.len();
        if n == 0 {
            return 0.0;
        }
        let data = img.data();
        let mut sum = 0.0f64;
        for y in ys {
            let row = &data[(y * w + xs.start) * CHANNELS..(y * w + xs.end) * CHANNELS];
            sum += row.iter().map(|&v| v as f64).sum::<f64>();
        }
        sum / (n * CHANNELS) as f64
    }

    /// The proposal for a given brightness, before thresholding.
    pub fn proposal(&self, brightness: f64) -> DetectionVector {
        let b = brightness.clamp(0.0, 1.0);
        DetectionVector {
            bbox: self.spec.bbox,
            objectness: b,
            class_scores: self.spec.profile.iter().map(|p| p * b).collect(),
        }
    }
}

impl Detector for BlobDetector {
    fn num_classes(&self) -> Option<usize> {
        Some(self.spec.profile.len())
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        let b = self.evidence_brightness(img);
        if b < self.spec.min_objectness || b == 0.0 {
            return Ok(Vec::new());
        }
        Ok(vec![self.proposal(b)])
    }

    fn describe(&self) -> String {
        let e = self.spec.evidence;
        format!("synthetic:blob:{},{},{},{}", e.x1, e.y1, e.x2, e.y2)
    }
}

/// Stand-in for a detector with randomized weights: the base detector sees
/// the input cyclically translated by a seeded offset, so its responses are
/// driven by a different region of the image.
#[derive(Debug, Clone)]
pub struct RandomizedDetector<D> {
    base: D,
    seed: u64,
}

pub fn make_randomized_detector<D: Detector>(base: D, seed: u64) -> RandomizedDetector<D> {
    RandomizedDetector { base, seed }
}

impl<D: Detector> RandomizedDetector<D> {
    /// Translation `(dx, dy)` applied for a `w x h` image; each component lies
    /// in `[n/4, 3n/4]` so the evidence moves by at least a quarter image.
    pub fn shift(&self, w: usize, h: usize) -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5A17_C4EC_0000_0000);
        let pick = |rng: &mut ChaCha8Rng, n: usize| {
            if n < 4 {
                n / 2
            } else {
                rng.gen_range(n / 4..=3 * n / 4)
            }
        };
        let dx = pick(&mut rng, w);
        let dy = pick(&mut rng, h);
        (dx, dy)
    }

    /// Where a base-image pixel's content is read from in the original image.
    pub fn source_of(&self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (dx, dy) = self.shift(w, h);
        ((x + dx) % w, (y + dy) % h)
    }

    fn remap(&self, img: &ImageBuffer) -> ImageBuffer {
        let (w, h) = img.dims();
        let (dx, dy) = self.shift(w, h);
        let mut out = img.clone();
        for y in 0..h {
            for x in 0..w {
                out.set_pixel_rgb(y * w + x, img.pixel((x + dx) % w, (y + dy) % h));
            }
        }
        out
    }
}

impl<D: Detector> Detector for RandomizedDetector<D> {
    fn num_classes(&self) -> Option<usize> {
        self.base.num_classes()
    }

    fn class_names(&self) -> Option<Vec<String>> {
        self.base.class_names()
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        self.base.detect(&self.remap(img))
    }

    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        let remapped: Vec<ImageBuffer> = imgs.iter().map(|i| self.remap(i)).collect();
        self.base.detect_batch(&remapped)
    }

    fn describe(&self) -> String {
        format!("randomized({}, seed={})", self.base.describe(), self.seed)
    }
}

/// Counts images submitted to the wrapped detector.
#[derive(Debug)]
pub struct CountingDetector<D> {
    inner: D,
    calls: AtomicUsize,
}

impl<D: Detector> CountingDetector<D> {
    pub fn new(inner: D) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }
}

impl<D: Detector> Detector for CountingDetector<D> {
    fn num_classes(&self) -> Option<usize> {
        self.inner.num_classes()
    }

    fn class_names(&self) -> Option<Vec<String>> {
        self.inner.class_names()
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.detect(img)
    }

    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        self.calls.fetch_add(imgs.len(), Ordering::Relaxed);
        self.inner.detect_batch(imgs)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Distributes batches round-robin over several handles, e.g. one per
/// detector subprocess.
pub struct DetectorPool {
    handles: Vec<Box<dyn Detector>>,
    next: AtomicUsize,
}

impl DetectorPool {
    pub fn new(handles: Vec<Box<dyn Detector>>) -> Result<Self> {
        if handles.is_empty() {
            return Err(Error::invalid("detector pool needs at least one handle"));
        }
        Ok(Self { handles, next: AtomicUsize::new(0) })
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    fn pick(&self) -> &dyn Detector {
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.handles.len();
        self.handles[i].as_ref()
    }
}

impl Detector for DetectorPool {
    fn num_classes(&self) -> Option<usize> {
        self.handles.iter().find_map(|h| h.num_classes())
    }

    fn class_names(&self) -> Option<Vec<String>> {
        self.handles[0].class_names()
    }

    fn detect(&self, img: &ImageBuffer) -> Result<ProposalSet> {
        self.pick().detect(img)
    }

    fn detect_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<ProposalSet>> {
        self.pick().detect_batch(imgs)
    }

    fn describe(&self) -> String {
        format!("pool[{}]x{}", self.handles.len(), self.handles[0].describe())
    }
}
