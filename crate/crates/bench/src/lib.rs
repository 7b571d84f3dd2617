//! Shared fixtures for the pipeline benchmarks.

use dclose::synthetic::{render_blob_scene, BlobScene};
use dclose::{BBox, BlobDetector, BlobSpec, ImageBuffer, TargetSpec};

/// A `side x side` blob scene, its detector and the clean detection as target.
pub fn fixture(side: usize) -> (ImageBuffer, BlobDetector, TargetSpec) {
    let q = side as f64 / 4.0;
    let region = BBox::new(q, q, 2.5 * q, 3.0 * q).expect("valid region");
    let img = render_blob_scene(&BlobScene { width: side, height: side, region, seed: 1 }).expect("scene renders");
    let det = dclose::make_blob_detector(BlobSpec::for_region(region)).expect("valid spec");
    let found = dclose::Detector::detect(&det, &img).expect("synthetic detector");
    let target = TargetSpec::new(found[0].clone()).expect("valid target");
    (img, det, target)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_has_a_target() {
        let (img, _, target) = super::fixture(64);
        assert_eq!(img.dims(), (64, 64));
        assert!(target.target.objectness > 0.7);
    }
}
