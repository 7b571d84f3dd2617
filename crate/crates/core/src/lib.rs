//! Black-box saliency maps for object detectors.
//!
//! An image is segmented into superpixels at several granularities, random
//! segment masks are scored by how well the detector's proposals on the
//! masked image match a target detection, and the per-level maps are
//! density-normalized and fused into one explanation. A grid-mask baseline
//! and an evaluation suite are included.
//!
//! ```no_run
//! use dclose::{explain, make_blob_detector, BBox, BlobSpec, Detector, ExplainConfig, ImageBuffer, TargetSpec};
//!
//! let img = ImageBuffer::filled(64, 64, [0.5; 3]).unwrap();
//! let det = make_blob_detector(BlobSpec::for_region(BBox::new(8.0, 8.0, 24.0, 24.0).unwrap())).unwrap();
//! let target = TargetSpec::new(det.detect(&img).unwrap()[0].clone()).unwrap();
//! let map = explain(&img, &det, &target, &ExplainConfig::default()).unwrap();
//! assert!(map.max() <= 1.0);
//! ```

pub mod bbox;
pub mod config;
pub mod detection;
pub mod detector;
pub mod drise;
pub mod error;
pub mod image;
pub mod io;
pub mod map;
pub mod maskgen;
pub mod metrics;
pub mod protocol;
pub mod saliency;
pub mod segmentation;
pub mod synthetic;

pub use bbox::{iou, BBox};
pub use config::{Ablation, ExplainConfig, FusionOrder};
pub use detection::{cosine, DetectionVector, ProposalSet, TargetSpec};
pub use detector::{
    make_blob_detector, make_randomized_detector, BlobDetector, BlobSpec, CountingDetector,
    Detector, DetectorPool, RandomizedDetector, DEFAULT_SCORE_FLOOR,
};
pub use drise::{drise_explain, generate_grid_masks, GridMaskConfig};
pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use map::{minmax_normalize, DiffMap, SaliencyMap};
pub use maskgen::{apply_mask, generate_masks, MaskBatch, MaskSource};
pub use protocol::{SubprocessDetector, TcpDetector};
pub use saliency::{
    accumulate_masks, explain, finalize_level, fuse, mask_weight, similarity, Explainer,
    FusionStack, LevelAccumulator, LevelMaps,
};
pub use segmentation::{slic_segment, SegmentationMap};
