//! Target selection and the two saliency methods behind a common call.

use std::time::Instant;

use dclose::{drise_explain, DetectionVector, Detector, Explainer, ImageBuffer, SaliencyMap, TargetSpec};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::{Method, Stage, TargetSel};

/// Resolves `sel` against the detections on the clean image.
pub fn select_target(det: &dyn Detector, img: &ImageBuffer, sel: &TargetSel) -> CliResult<TargetSpec> {
    let found = det.detect(img).map_err(CliError::from)?;
    let target = match sel {
        TargetSel::Index { index } => found.get(*index).cloned().ok_or_else(|| {
            CliError::TargetIndex(format!(
                "target index {index} out of range: the clean image has {} detection(s)",
                found.len()
            ))
        })?,
        TargetSel::Explicit { bbox, class_id } => {
            let classes = det.num_classes().ok_or_else(|| {
                CliError::input("class count unknown: the detector reported nothing on the clean image")
            })?;
            if *class_id >= classes {
                return Err(CliError::TargetIndex(format!(
                    "class {class_id} out of range: the detector has {classes} classes"
                )));
            }
            let mut scores = vec![0.0; classes];
            scores[*class_id] = 1.0;
            DetectionVector::new(*bbox, 1.0, scores).map_err(CliError::from)?
        }
    };
    TargetSpec::new(target).map_err(CliError::from)
}

/// One saliency map plus per-stage timings.
pub fn saliency(
    img: &ImageBuffer,
    det: &dyn Detector,
    target: &TargetSpec,
    method: Method,
    settings: &Settings,
) -> CliResult<(SaliencyMap, Vec<Stage>)> {
    match method {
        Method::Dclose => {
            let ex = Explainer::new(det, settings.explain.clone())?;
            let levels = ex.run_levels(img, target)?;
            let mut stages: Vec<Stage> = levels
                .levels
                .iter()
                .map(|l| Stage::new(format!("level {} ({} segments)", l.level_index, l.segments_actual), l.elapsed))
                .collect();
            let t = Instant::now();
            let cfg = &settings.explain;
            let map = levels.compose(cfg.ablation, cfg.fusion_order, cfg.normalize_levels)?;
            stages.push(Stage::new("fusion", t.elapsed()));
            Ok((map, stages))
        }
        Method::Drise => {
            let t = Instant::now();
            let map = drise_explain(img, det, target, &settings.drise)?;
            Ok((map, vec![Stage::new("grid masks", t.elapsed())]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dclose::{make_blob_detector, BBox, BlobSpec};

    fn setup() -> (impl Detector, ImageBuffer) {
        let r = BBox::new(2.0, 2.0, 6.0, 6.0).unwrap();
        let mut img = ImageBuffer::filled(8, 8, [0.0; 3]).unwrap();
        for i in r.pixel_indices(8, 8) {
            img.set_pixel_rgb(i, [0.8; 3]);
        }
        (make_blob_detector(BlobSpec::for_region(r)).unwrap(), img)
    }

    #[test]
    fn index_targets() {
        let (det, img) = setup();
        let t = select_target(&det, &img, &TargetSel::Index { index: 0 }).unwrap();
        assert!((t.target.objectness - 0.8).abs() < 1e-2);
        let err = select_target(&det, &img, &TargetSel::Index { index: 1 }).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn explicit_targets_are_one_hot() {
        let (det, img) = setup();
        let bbox = BBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let t = select_target(&det, &img, &TargetSel::Explicit { bbox, class_id: 1 }).unwrap();
        assert_eq!(t.target.class_scores, vec![0.0, 1.0, 0.0]);
        let err = select_target(&det, &img, &TargetSel::Explicit { bbox, class_id: 3 }).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }
}
