//! Commands that explain objects in one image.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use dclose::io::{encode_dcls_diff, write_dcls};
use dclose::metrics::{compare_maps, error_diff};
use dclose::{make_randomized_detector, CountingDetector, Detector, SaliencyMap};
use serde::Serialize;

use crate::config::Settings;
use crate::detectors::open_detector;
use crate::engine::{saliency, select_target};
use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, Job, Method, RunManifest, TargetSel, MANIFEST_FILE};
use crate::render::{load_image, write_diff_overlay, write_heatmaps};

/// Detector handles to open for external backends.
pub fn handle_count(jobs: usize) -> usize {
    match jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        j => j,
    }
}

pub(crate) fn save_map(out: &Path, name: &str, m: &SaliencyMap, outputs: &mut Vec<String>) -> CliResult<()> {
    let path = out.join(name);
    write_dcls(&path, m).map_err(|e| CliError::output(&path, e))?;
    outputs.push(name.to_owned());
    Ok(())
}

pub(crate) fn finish(mut manifest: RunManifest, out: &Path) -> CliResult<RunManifest> {
    manifest.outputs.push(MANIFEST_FILE.to_owned());
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn explain(
    image: &Path,
    detector: &str,
    sel: &TargetSel,
    method: Method,
    settings: &Settings,
    out: &Path,
    job: Job,
) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, settings.clone());
    let img = load_image(image)?;
    let det = CountingDetector::new(open_detector(detector, Some(&img), handle_count(settings.explain.jobs))?);
    manifest.detector = Some(det.describe());
    let t = Instant::now();
    let target = select_target(&det, &img, sel)?;
    manifest.stage("target", t.elapsed());
    det.reset();

    let (map, stages) = saliency(&img, &det, &target, method, settings)?;
    manifest.stages.extend(stages);
    manifest.detector_calls = det.calls();

    ensure_dir(out)?;
    save_map(out, "saliency.dcls", &map, &mut manifest.outputs)?;
    manifest.outputs.extend(write_heatmaps(out, "saliency", &img, &map)?);
    println!("{}: {} detector calls, outputs in {}", method.label(), manifest.detector_calls, out.display());
    finish(manifest, out)
}

#[derive(Debug, Serialize)]
struct SanityReport {
    /// Pearson correlation of the base and randomized maps; absent when
    /// either map is constant.
    correlation: Option<f64>,
    base_vs_base: Option<f64>,
    note: Option<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn sanity(
    image: &Path,
    detector: &str,
    sel: &TargetSel,
    method: Method,
    random_seed: u64,
    settings: &Settings,
    out: &Path,
    job: Job,
) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, settings.clone());
    let img = load_image(image)?;
    let base: Arc<dyn Detector> =
        Arc::from(open_detector(detector, Some(&img), handle_count(settings.explain.jobs))?);
    let base_det = CountingDetector::new(base.clone());
    let random_det = CountingDetector::new(make_randomized_detector(base, random_seed));
    manifest.detector = Some(format!("{} | {}", base_det.describe(), random_det.describe()));
    let target = select_target(&base_det, &img, sel)?;
    base_det.reset();

    let (base_map, stages) = saliency(&img, &base_det, &target, method, settings)?;
    manifest.stages.extend(stages.into_iter().map(|mut s| {
        s.name = format!("base {}", s.name);
        s
    }));
    let (random_map, stages) = saliency(&img, &random_det, &target, method, settings)?;
    manifest.stages.extend(stages.into_iter().map(|mut s| {
        s.name = format!("randomized {}", s.name);
        s
    }));
    manifest.detector_calls = base_det.calls() + random_det.calls();

    let correlation = compare_maps(&base_map, &random_map);
    let report = SanityReport {
        correlation: correlation.as_ref().ok().copied(),
        base_vs_base: compare_maps(&base_map, &base_map).ok(),
        note: correlation.err().map(|e| e.to_string()),
    };
    ensure_dir(out)?;
    save_map(out, "base.dcls", &base_map, &mut manifest.outputs)?;
    save_map(out, "randomized.dcls", &random_map, &mut manifest.outputs)?;
    manifest.outputs.extend(write_heatmaps(out, "base", &img, &base_map)?);
    manifest.outputs.extend(write_heatmaps(out, "randomized", &img, &random_map)?);
    write_json(out, "sanity.json", &report, &mut manifest.outputs)?;
    match report.correlation {
        Some(c) => println!("correlation base vs randomized: {c:.4}"),
        None => println!("correlation base vs randomized: undefined ({})", report.note.as_deref().unwrap_or("")),
    }
    finish(manifest, out)
}

#[derive(Debug, Serialize)]
struct DiffReport {
    max_abs: f64,
    /// Total of the positive and negative parts of the difference.
    positive_mass: f64,
    negative_mass: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn errordiff(
    image: &Path,
    detector: &str,
    first: &TargetSel,
    second: &TargetSel,
    method: Method,
    settings: &Settings,
    out: &Path,
    job: Job,
) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, settings.clone());
    let img = load_image(image)?;
    let det = CountingDetector::new(open_detector(detector, Some(&img), handle_count(settings.explain.jobs))?);
    manifest.detector = Some(det.describe());
    let first_target = select_target(&det, &img, first)?;
    let second_target = select_target(&det, &img, second)?;
    det.reset();

    let (a, stages) = saliency(&img, &det, &first_target, method, settings)?;
    manifest.stages.extend(stages.into_iter().map(|mut s| {
        s.name = format!("first {}", s.name);
        s
    }));
    let (b, stages) = saliency(&img, &det, &second_target, method, settings)?;
    manifest.stages.extend(stages.into_iter().map(|mut s| {
        s.name = format!("second {}", s.name);
        s
    }));
    manifest.detector_calls = det.calls();
    let diff = error_diff(&a, &b)?;

    ensure_dir(out)?;
    save_map(out, "first.dcls", &a, &mut manifest.outputs)?;
    save_map(out, "second.dcls", &b, &mut manifest.outputs)?;
    let diff_path = out.join("diff.dcls");
    let bytes = encode_dcls_diff(&diff)?;
    std::fs::write(&diff_path, bytes).map_err(|e| CliError::output(&diff_path, e))?;
    manifest.outputs.push("diff.dcls".into());
    manifest.outputs.extend(write_heatmaps(out, "first", &img, &a)?);
    manifest.outputs.extend(write_heatmaps(out, "second", &img, &b)?);
    manifest.outputs.extend(write_diff_overlay(out, "diff", &img, &diff)?);
    let report = DiffReport {
        max_abs: diff.max_abs(),
        positive_mass: diff.values.iter().filter(|v| **v > 0.0).sum(),
        negative_mass: diff.values.iter().filter(|v| **v < 0.0).sum(),
    };
    println!("max |difference| {:.4}", report.max_abs);
    write_json(out, "errordiff.json", &report, &mut manifest.outputs)?;
    finish(manifest, out)
}

pub fn write_json<T: Serialize>(out: &Path, name: &str, value: &T, outputs: &mut Vec<String>) -> CliResult<()> {
    let path = out.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))?;
    outputs.push(name.to_owned());
    Ok(())
}
