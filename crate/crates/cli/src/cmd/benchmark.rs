//! Corpus benchmark: both methods per matched object, grouped by size.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use dclose::metrics::{
    deletion_curve, ebpg, insertion_curve, kmeans_1d_group, match_detections_to_gt, overall, sparsity, EvalRecord,
    GroundTruth, SizeGroup,
};
use dclose::{
    drise_explain, Ablation, CountingDetector, Detector, Explainer, FusionOrder, ImageBuffer, SaliencyMap, TargetSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::cmd::single::{finish, handle_count, write_json};
use crate::config::Settings;
use crate::corpus::load_corpus;
use crate::detectors::{open_detector, parse_descriptor, Descriptor};
use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, Job, Method, RunManifest};
use crate::render::load_image;

const ALL_GROUPS: &str = "all";

struct ObjectTask {
    id: String,
    image: Arc<ImageBuffer>,
    det: Arc<dyn Detector>,
    gt: GroundTruth,
    target: TargetSpec,
    area_ratio: f64,
}

/// Cost of one method on one object.
#[derive(Debug, Clone, Copy, Default)]
struct Cost {
    seconds: f64,
    calls: usize,
}

struct ObjectResult {
    records: Vec<EvalRecord>,
    dclose: Cost,
    drise: Cost,
}

fn ablation_rows(order: FusionOrder) -> Vec<(String, Ablation, FusionOrder)> {
    let other = match order {
        FusionOrder::FineToCoarse => FusionOrder::CoarseToFine,
        FusionOrder::CoarseToFine => FusionOrder::FineToCoarse,
    };
    let mut rows: Vec<(String, Ablation, FusionOrder)> = [Ablation::SEGMENT_ONLY, Ablation::DENSITY, Ablation::FULL]
        .into_iter()
        .map(|a| (format!("{} {}", Method::Dclose.label(), a.label()), a, order))
        .collect();
    rows.push((format!("{} {} ({})", Method::Dclose.label(), Ablation::FULL.label(), order_name(other)), Ablation::FULL, other));
    rows
}

fn order_name(o: FusionOrder) -> &'static str {
    match o {
        FusionOrder::FineToCoarse => "fine-to-coarse",
        FusionOrder::CoarseToFine => "coarse-to-fine",
    }
}

fn score_map(task: &ObjectTask, method: &str, group: SizeGroup, m: &SaliencyMap, steps: usize) -> CliResult<EvalRecord> {
    let img = task.image.as_ref();
    let det = task.det.as_ref();
    let del = deletion_curve(img, det, &task.target, m, steps, None)?;
    let ins = insertion_curve(img, det, &task.target, m, steps, None)?;
    Ok(EvalRecord {
        object_id: task.id.clone(),
        method: method.to_owned(),
        size_group: group,
        sparsity: sparsity(m).unwrap_or(f64::NAN),
        ebpg: ebpg(m, &task.gt.bbox),
        deletion_auc: del.auc,
        insertion_auc: ins.auc,
        overall: overall(ins.auc, del.auc),
    })
}

fn evaluate(task: &ObjectTask, group: SizeGroup, settings: &Settings, ablation: bool) -> CliResult<ObjectResult> {
    let img = task.image.as_ref();
    let steps = settings.metrics.steps;
    let counter = CountingDetector::new(task.det.clone());

    let t = Instant::now();
    let levels = Explainer::new(&counter, settings.explain.clone())?.run_levels(img, &task.target)?;
    let cfg = &settings.explain;
    let main = levels.compose(cfg.ablation, cfg.fusion_order, cfg.normalize_levels)?;
    let dclose = Cost { seconds: t.elapsed().as_secs_f64(), calls: counter.calls() };
    counter.reset();

    let t = Instant::now();
    let grid = drise_explain(img, &counter, &task.target, &settings.drise)?;
    let drise = Cost { seconds: t.elapsed().as_secs_f64(), calls: counter.calls() };

    let mut records = vec![
        score_map(task, Method::Dclose.label(), group, &main, steps)?,
        score_map(task, Method::Drise.label(), group, &grid, steps)?,
    ];
    if ablation {
        for (name, a, order) in ablation_rows(cfg.fusion_order) {
            let m = levels.compose(a, order, cfg.normalize_levels)?;
            records.push(score_map(task, &name, group, &m, steps)?);
        }
    }
    Ok(ObjectResult { records, dclose, drise })
}

#[derive(Debug, Clone, Serialize)]
struct GroupSummary {
    method: String,
    group: String,
    objects: usize,
    sparsity: f64,
    ebpg: f64,
    deletion_auc: f64,
    insertion_auc: f64,
    overall: f64,
}

#[derive(Debug, Serialize)]
struct Timing {
    method: String,
    mean_seconds_per_object: f64,
    detector_calls_per_object: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    images: usize,
    ground_truth_objects: usize,
    matched_objects: usize,
    group_centroids: Vec<f64>,
    groups: Vec<GroupSummary>,
    timing: Vec<Timing>,
}

/// Mean over the finite values.
fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { f64::NAN } else { sum / n as f64 }
}

fn summarize(records: &[EvalRecord]) -> Vec<GroupSummary> {
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for method in methods {
        let groups = SizeGroup::ALL.iter().map(|g| (g.name(), Some(*g))).chain([(ALL_GROUPS, None)]);
        for (name, group) in groups {
            let rows: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.method == method && group.map_or(true, |g| r.size_group == g))
                .collect();
            if rows.is_empty() {
                continue;
            }
            out.push(GroupSummary {
                method: method.to_owned(),
                group: name.to_owned(),
                objects: rows.len(),
                sparsity: finite_mean(rows.iter().map(|r| r.sparsity)),
                ebpg: finite_mean(rows.iter().map(|r| r.ebpg)),
                deletion_auc: finite_mean(rows.iter().map(|r| r.deletion_auc)),
                insertion_auc: finite_mean(rows.iter().map(|r| r.insertion_auc)),
                overall: finite_mean(rows.iter().map(|r| r.overall)),
            });
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn records_csv(records: &[EvalRecord]) -> String {
    let mut s = String::from("object_id,method,size_group,sparsity,ebpg,deletion_auc,insertion_auc,overall\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.object_id),
            csv_field(&r.method),
            r.size_group.name(),
            r.sparsity,
            r.ebpg,
            r.deletion_auc,
            r.insertion_auc,
            r.overall
        );
    }
    s
}

fn markdown(summary: &Summary, ablation: bool) -> String {
    let mut s = String::from("# Benchmark\n\n");
    let _ = writeln!(
        s,
        "{} images, {} ground-truth objects, {} matched and explained.\n",
        summary.images, summary.ground_truth_objects, summary.matched_objects
    );
    let main = [Method::Dclose.label(), Method::Drise.label()];
    let table = |s: &mut String, rows: Vec<&GroupSummary>| {
        s.push_str("| Method | Group | Objects | Sparsity | EBPG (%) | Deletion (%) | Insertion (%) | Over-all (%) |\n");
        s.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
        for g in rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                g.method,
                g.group,
                g.objects,
                g.sparsity,
                g.ebpg,
                100.0 * g.deletion_auc,
                100.0 * g.insertion_auc,
                100.0 * g.overall
            );
        }
    };
    s.push_str("## Saliency quality\n\n");
    table(&mut s, summary.groups.iter().filter(|g| main.contains(&g.method.as_str())).collect());
    if ablation {
        s.push_str("\n## Ablation\n\n");
        table(
            &mut s,
            summary.groups.iter().filter(|g| !main.contains(&g.method.as_str()) && g.group == ALL_GROUPS).collect(),
        );
    }
    s.push_str("\n## Cost\n\n| Method | Seconds per object | Detector calls per object |\n|---|---:|---:|\n");
    for t in &summary.timing {
        let _ = writeln!(s, "| {} | {:.3} | {:.0} |", t.method, t.mean_seconds_per_object, t.detector_calls_per_object);
    }
    s
}

fn collect_tasks(corpus: &Path, detector: &str, jobs: usize) -> CliResult<(Vec<ObjectTask>, usize, usize)> {
    let entries = load_corpus(corpus)?;
    let shared: Option<Arc<dyn Detector>> = match parse_descriptor(detector)? {
        Descriptor::Blob(None) => None,
        _ => Some(Arc::from(open_detector(detector, None, handle_count(jobs))?)),
    };
    let mut tasks = Vec::new();
    let mut gt_total = 0;
    for entry in &entries {
        let image = Arc::new(load_image(&entry.image_path)?);
        let det = match &shared {
            Some(d) => d.clone(),
            None => Arc::from(open_detector(detector, Some(&image), 1)?),
        };
        let found = det.detect(&image)?;
        gt_total += entry.objects.len();
        let stem = entry.image_path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let pixels = image.pixel_count() as f64;
        for (g, d) in match_detections_to_gt(&found, &entry.objects) {
            let gt = entry.objects[g].clone();
            tasks.push(ObjectTask {
                id: format!("{stem}#{g}"),
                image: image.clone(),
                det: det.clone(),
                area_ratio: gt.bbox.area() / pixels,
                target: TargetSpec::new(found[d].clone())?,
                gt,
            });
        }
    }
    Ok((tasks, entries.len(), gt_total))
}

pub fn benchmark(
    corpus: &Path,
    detector: &str,
    ablation: bool,
    jobs: usize,
    settings: &Settings,
    out: &Path,
    job: Job,
) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(job, settings.clone());
    let t = Instant::now();
    let (tasks, images, gt_total) = collect_tasks(corpus, detector, jobs)?;
    manifest.stage("load and match", t.elapsed());
    if tasks.is_empty() {
        return Err(CliError::input("no ground-truth object was matched by a detection"));
    }
    manifest.detector = Some(tasks[0].det.describe());
    let ratios: Vec<f64> = tasks.iter().map(|t| t.area_ratio).collect();
    let (groups, centroids) =
        kmeans_1d_group(&ratios).map_err(|e| CliError::input(format!("size grouping: {e}")))?;

    // Parallelism is across objects; each object runs inline.
    let mut per_object = settings.clone();
    per_object.explain.jobs = 1;
    per_object.drise.jobs = 1;
    let t = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::input(format!("worker pool: {e}")))?;
    let results: Vec<ObjectResult> = pool.install(|| {
        tasks
            .par_iter()
            .zip(&groups)
            .map(|(task, &g)| {
                let r = evaluate(task, g, &per_object, ablation);
                log::info!("{}: done", task.id);
                r
            })
            .collect::<CliResult<_>>()
    })?;
    manifest.stage("explain and score", t.elapsed());

    let n = results.len() as f64;
    let cost = |pick: fn(&ObjectResult) -> Cost, method: Method| Timing {
        method: method.label().to_owned(),
        mean_seconds_per_object: results.iter().map(|r| pick(r).seconds).sum::<f64>() / n,
        detector_calls_per_object: results.iter().map(|r| pick(r).calls as f64).sum::<f64>() / n,
    };
    let timing = vec![cost(|r| r.dclose, Method::Dclose), cost(|r| r.drise, Method::Drise)];
    manifest.detector_calls = results.iter().map(|r| r.dclose.calls + r.drise.calls).sum();
    let records: Vec<EvalRecord> = results.into_iter().flat_map(|r| r.records).collect();
    let summary = Summary {
        images,
        ground_truth_objects: gt_total,
        matched_objects: tasks.len(),
        group_centroids: centroids,
        groups: summarize(&records),
        timing,
    };

    ensure_dir(out)?;
    let write = |name: &str, text: String, outputs: &mut Vec<String>| -> CliResult<()> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))?;
        outputs.push(name.to_owned());
        Ok(())
    };
    write("results.csv", records_csv(&records), &mut manifest.outputs)?;
    let report = markdown(&summary, ablation);
    write("report.md", report.clone(), &mut manifest.outputs)?;
    write_json(out, "summary.json", &summary, &mut manifest.outputs)?;
    print!("{report}");
    finish(manifest, out)
}
