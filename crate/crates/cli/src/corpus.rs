//! Benchmark corpora and conversion from COCO annotations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dclose::metrics::GroundTruth;
use dclose::BBox;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One image with its ground-truth objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    /// Relative paths are taken from the manifest's directory.
    pub image_path: PathBuf,
    pub objects: Vec<GroundTruth>,
}

fn parse_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Parse(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
}

/// Reads a corpus manifest and resolves its image paths.
pub fn load_corpus(path: &Path) -> CliResult<Vec<CorpusEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read corpus {}: {e}", path.display())))?;
    let mut entries: Vec<CorpusEntry> = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    if entries.is_empty() {
        return Err(CliError::input(format!("corpus {} lists no images", path.display())));
    }
    if entries.iter().all(|e| e.objects.is_empty()) {
        return Err(CliError::input(format!("corpus {} has no annotated objects", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut entries {
        if e.image_path.is_relative() {
            e.image_path = base.join(&e.image_path);
        }
    }
    Ok(entries)
}

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    /// `[x, y, width, height]`.
    bbox: [f64; 4],
    category_id: u64,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Converts COCO annotation JSON into a corpus. Category ids are remapped
/// to contiguous class indices in ascending id order; crowd regions and
/// degenerate boxes are dropped.
pub fn convert_coco(text: &str, source: &Path, image_root: Option<&Path>) -> CliResult<Vec<CorpusEntry>> {
    let coco: CocoFile = serde_json::from_str(text).map_err(|e| parse_error(source, e))?;
    let mut cats: Vec<&CocoCategory> = coco.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    let class_of: BTreeMap<u64, (usize, &str)> =
        cats.iter().enumerate().map(|(i, c)| (c.id, (i, c.name.as_str()))).collect();

    let mut by_image: BTreeMap<u64, Vec<GroundTruth>> = BTreeMap::new();
    for a in &coco.annotations {
        if a.iscrowd != 0 {
            continue;
        }
        let &(class_id, name) = class_of
            .get(&a.category_id)
            .ok_or_else(|| CliError::Parse(format!("annotation refers to unknown category {}", a.category_id)))?;
        let [x, y, w, h] = a.bbox;
        let Ok(bbox) = BBox::new(x, y, x + w, y + h) else { continue };
        if bbox.area() <= 0.0 {
            continue;
        }
        by_image.entry(a.image_id).or_default().push(GroundTruth {
            bbox,
            class_id,
            class_name: Some(name.to_owned()),
        });
    }

    let mut images: Vec<&CocoImage> = coco.images.iter().collect();
    images.sort_by_key(|i| i.id);
    Ok(images
        .into_iter()
        .filter_map(|img| {
            let objects = by_image.remove(&img.id)?;
            let path = match image_root {
                Some(root) => root.join(&img.file_name),
                None => PathBuf::from(&img.file_name),
            };
            Some(CorpusEntry { image_path: path, objects })
        })
        .collect())
}
