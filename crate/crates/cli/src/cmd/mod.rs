pub mod benchmark;
pub mod data;
pub mod serve;
pub mod single;

use std::path::Path;

use crate::config::Settings;
use crate::error::CliResult;
use crate::manifest::{Job, RunManifest};

/// Runs a resolved job. `out` is the output directory, or the output file
/// for a COCO conversion.
pub fn run(job: &Job, settings: &Settings, out: &Path) -> CliResult<RunManifest> {
    let j = job.clone();
    match job {
        Job::Explain { image, detector, target, method } => {
            single::explain(image, detector, target, *method, settings, out, j)
        }
        Job::Sanity { image, detector, target, method, random_seed } => {
            single::sanity(image, detector, target, *method, *random_seed, settings, out, j)
        }
        Job::Errordiff { image, detector, first, second, method } => {
            single::errordiff(image, detector, first, second, *method, settings, out, j)
        }
        Job::Benchmark { corpus, detector, ablation, jobs } => {
            benchmark::benchmark(corpus, detector, *ablation, *jobs, settings, out, j)
        }
        Job::Render { map, image, diff } => data::render(map, image, *diff, out, j),
        Job::ConvertCoco { annotations, image_root, .. } => data::coco(annotations, image_root.as_deref(), out, j),
        Job::Suite { seed } => data::suite(*seed, out, j),
    }
}
