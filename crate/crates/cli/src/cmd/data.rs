//! Commands that prepare or render data without running a detector.

use std::path::Path;

use dclose::io::decode_dcls_raw;
use dclose::metrics::GroundTruth;
use dclose::synthetic::blob_suite;
use dclose::{minmax_normalize, DiffMap, SaliencyMap};

use crate::cmd::single::finish;
use crate::config::Settings;
use crate::corpus::{convert_coco, CorpusEntry};
use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, Job, RunManifest};
use crate::render::{load_image, save_image, write_diff_overlay, write_heatmaps};

/// Heatmap and overlay for a stored map. Signed maps use the divergent
/// colormap; other maps outside `[0, 1]` are min-max normalized first.
pub fn render(map: &Path, image: &Path, diff: bool, out: &Path, job: Job) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, Settings::default());
    let bytes = std::fs::read(map).map_err(|e| CliError::input(format!("cannot read {}: {e}", map.display())))?;
    let (w, h, values) = decode_dcls_raw(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", map.display())))?;
    let values: Vec<f64> = values.into_iter().map(f64::from).collect();
    let img = load_image(image)?;
    let stem = map.file_stem().map_or_else(|| "map".to_owned(), |s| s.to_string_lossy().into_owned());
    ensure_dir(out)?;
    let written = if diff {
        write_diff_overlay(out, &stem, &img, &DiffMap { width: w, height: h, values })?
    } else {
        let m = SaliencyMap::new(w, h, values).map_err(|e| CliError::Parse(format!("{}: {e}", map.display())))?;
        let m = if m.values().iter().all(|v| (0.0..=1.0).contains(v)) { m } else { minmax_normalize(&m) };
        write_heatmaps(out, &stem, &img, &m)?
    };
    manifest.outputs.extend(written);
    finish(manifest, out)
}

pub fn coco(annotations: &Path, image_root: Option<&Path>, output: &Path, job: Job) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, Settings::default());
    let text = std::fs::read_to_string(annotations)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", annotations.display())))?;
    let corpus = convert_coco(&text, annotations, image_root)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_corpus(output, &corpus)?;
    let objects: usize = corpus.iter().map(|e| e.objects.len()).sum();
    println!("{} images, {objects} objects -> {}", corpus.len(), output.display());
    manifest.outputs.push(output.display().to_string());
    let path = output.with_extension("manifest.json");
    manifest.outputs.push(path.display().to_string());
    manifest.write(&path)?;
    Ok(manifest)
}

fn write_corpus(path: &Path, corpus: &[CorpusEntry]) -> CliResult<()> {
    let text = serde_json::to_string_pretty(corpus).map_err(|e| CliError::output(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

/// Writes the synthetic blob suite as PNGs plus a corpus manifest.
pub fn suite(seed: u64, out: &Path, job: Job) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, Settings::default());
    ensure_dir(out)?;
    let cases = blob_suite(seed)?;
    let mut corpus = Vec::with_capacity(cases.len());
    for case in &cases {
        let name = format!("{}.png", case.id);
        save_image(&out.join(&name), &case.image)?;
        manifest.outputs.push(name.clone());
        corpus.push(CorpusEntry {
            image_path: name.into(),
            objects: vec![GroundTruth { bbox: case.region, class_id: 0, class_name: Some("blob".into()) }],
        });
    }
    write_corpus(&out.join("corpus.json"), &corpus)?;
    manifest.outputs.push("corpus.json".into());
    println!("{} cases -> {}", cases.len(), out.display());
    finish(manifest, out)
}
