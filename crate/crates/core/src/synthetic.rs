//! Synthetic scenes with a known evidence region, for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::detector::{make_blob_detector, BlobDetector, BlobSpec};
use crate::error::Result;
use crate::image::ImageBuffer;
use crate::metrics::SizeGroup;

pub const SUITE_SIDE: usize = 128;
pub const CASES_PER_GROUP: usize = 10;

/// Side-length range in pixels for each size group.
pub fn side_range(group: SizeGroup) -> (usize, usize) {
    match group {
        SizeGroup::Small => (8, 14),
        SizeGroup::Middle => (24, 36),
        SizeGroup::Large => (56, 80),
    }
}

#[derive(Debug, Clone)]
pub struct BlobCase {
    pub id: String,
    pub group: SizeGroup,
    pub image: ImageBuffer,
    pub region: BBox,
}

impl BlobCase {
    pub fn detector(&self) -> BlobDetector {
        make_blob_detector(BlobSpec::for_region(self.region)).expect("default blob spec is valid")
    }

    pub fn area_ratio(&self) -> f64 {
        self.region.area() / self.image.pixel_count() as f64
    }
}

/// Parameters of one blob scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobScene {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "box")]
    pub region: BBox,
    pub seed: u64,
}

/// Dim blocky texture with a bright textured patch over `region`.
pub fn render_blob_scene(scene: &BlobScene) -> Result<ImageBuffer> {
    let BlobScene { width: w, height: h, region, seed } = *scene;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = 6usize;
    let (cw, ch) = (w.div_ceil(cell), h.div_ceil(cell));
    let tiles: Vec<[f32; 3]> = (0..cw * ch)
        .map(|_| {
            let base: f32 = rng.gen_range(0.1..0.35);
            let (a, b): (f32, f32) = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
            [base + a, base + b, base - a - b]
        })
        .collect();
    let patch: f32 = rng.gen_range(0.75..0.95);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in tiles[(y / cell) * cw + x / cell] {
                let noise: f32 = rng.gen_range(-0.03..0.03);
                data.push((c + noise).clamp(0.0, 1.0));
            }
        }
    }
    let mut img = ImageBuffer::new(w, h, data)?;
    for idx in region.pixel_indices(w, h) {
        let noise: f32 = rng.gen_range(-0.04..0.04);
        let v = (patch + noise).clamp(0.0, 1.0);
        img.set_pixel_rgb(idx, [v, v, v]);
    }
    Ok(img)
}

/// Thirty 128x128 cases, ten per size group, fully determined by `seed`.
pub fn blob_suite(seed: u64) -> Result<Vec<BlobCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(3 * CASES_PER_GROUP);
    for group in SizeGroup::ALL {
        let (lo, hi) = side_range(group);
        for i in 0..CASES_PER_GROUP {
            let bw = rng.gen_range(lo..=hi);
            let bh = rng.gen_range(lo..=hi);
            let x = rng.gen_range(0..=SUITE_SIDE - bw);
            let y = rng.gen_range(0..=SUITE_SIDE - bh);
            let region = BBox::new(x as f64, y as f64, (x + bw) as f64, (y + bh) as f64)?;
            let scene = BlobScene { width: SUITE_SIDE, height: SUITE_SIDE, region, seed: rng.gen() };
            cases.push(BlobCase {
                id: format!("{}-{i:02}", group.name()),
                group,
                image: render_blob_scene(&scene)?,
                region,
            });
        }
    }
    Ok(cases)
}
