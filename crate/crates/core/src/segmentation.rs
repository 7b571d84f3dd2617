//! SLIC superpixels: grid-seeded local k-means in CIELAB + position space,
//! followed by connectivity enforcement.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_MAX_ITERS: usize = 10;

/// Per-pixel superpixel labels in `0..n_actual`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    n_requested: usize,
    n_actual: usize,
}

impl SegmentationMap {
    /// Builds a map from explicit labels, relabeling to dense ids in scan order.
    pub fn from_labels(width: usize, height: usize, labels: &[u32]) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return Err(Error::invalid("label count does not match dimensions"));
        }
        let mut remap = std::collections::HashMap::new();
        let dense: Vec<u32> = labels
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Self { width, height, labels: dense, n_requested: remap.len(), n_actual: remap.len() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn n_requested(&self) -> usize {
        self.n_requested
    }

    pub fn n_actual(&self) -> usize {
        self.n_actual
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_actual];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Checks the partition invariants: labels in range, every label used,
    /// every segment 4-connected.
    pub fn check_partition(&self) -> Result<()> {
        if let Some(l) = self.labels.iter().find(|l| **l as usize >= self.n_actual) {
            return Err(Error::Format(format!("label {l} out of range")));
        }
        if self.segment_sizes().contains(&0) {
            return Err(Error::Format("unused label".into()));
        }
        let comps = connected_components(self.width, self.height, |i| self.labels[i] as i64);
        if comps.count != self.n_actual {
            return Err(Error::Format(format!(
                "{} labels but {} connected components",
                self.n_actual, comps.count
            )));
        }
        Ok(())
    }

    /// Label grid as CSV, one image row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * 4);
        for row in self.labels.chunks(self.width) {
            for (i, l) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{l}");
            }
            out.push('\n');
        }
        out
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB in `[0, 1]` to CIELAB (D65 white).
pub fn rgb_to_lab(rgb: [f32; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| srgb_to_linear(c as f64));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / 0.950_47), lab_f(y), lab_f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn lab_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Segments `img` into roughly `n_segments` superpixels.
///
/// Distance is `d_lab + (compactness / S) * d_xy` with grid spacing
/// `S = sqrt(hw / n_segments)`; each center searches a `2S x 2S` window.
/// Fragments smaller than a quarter of the nominal segment area, and pixels
/// no center reached, are merged into their largest neighbor.
pub fn slic_segment(
    img: &ImageBuffer,
    n_segments: usize,
    compactness: f64,
    max_iters: usize,
) -> Result<SegmentationMap> {
    let (w, h) = img.dims();
    let npix = w * h;
    if n_segments == 0 || n_segments > npix {
        return Err(Error::invalid(format!(
            "n_segments must be in 1..={npix}, got {n_segments}"
        )));
    }
    let lab: Vec<[f64; 3]> = (0..npix).map(|i| rgb_to_lab(img.pixel(i % w, i / w))).collect();

    let step = (npix as f64 / n_segments as f64).sqrt();
    let mut centers = seed_centers(&lab, w, h, step, n_segments);

    let radius = step.ceil() as isize;
    let spatial_weight = compactness / step;
    let mut labels = vec![-1i64; npix];
    let mut dist = vec![f64::INFINITY; npix];

    for _ in 0..max_iters.max(1) {
        labels.fill(-1);
        dist.fill(f64::INFINITY);
        // Centers in index order with strict improvement: lowest index wins ties.
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius).min(w as isize - 1)) as usize;
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius).min(h as isize - 1)) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let dxy = ((x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2)).sqrt();
                    let d = lab_dist(&lab[i], &c.lab) + spatial_weight * dxy;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as i64;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l >= 0 {
                let s = &mut sums[l as usize];
                s[0] += lab[i][0];
                s[1] += lab[i][1];
                s[2] += lab[i][2];
                s[3] += (i % w) as f64;
                s[4] += (i / w) as f64;
                s[5] += 1.0;
            }
        }
        let mut moved = 0.0f64;
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                let n = s[5];
                let next = Center { lab: [s[0] / n, s[1] / n, s[2] / n], x: s[3] / n, y: s[4] / n };
                moved = moved.max((next.x - c.x).abs()).max((next.y - c.y).abs());
                *c = next;
            }
        }
        if moved == 0.0 {
            break;
        }
    }

    let min_size = npix as f64 / n_segments as f64 / 4.0;
    let dense = enforce_connectivity(w, h, &labels, min_size);
    let n_actual = dense.iter().max().map_or(0, |m| *m as usize + 1);
    Ok(SegmentationMap { width: w, height: h, labels: dense, n_requested: n_segments, n_actual })
}

fn seed_centers(lab: &[[f64; 3]], w: usize, h: usize, step: f64, n: usize) -> Vec<Center> {
    let nx = ((w as f64 / step).round() as usize).clamp(1, n);
    let ny = ((h as f64 / step).round() as usize).clamp(1, (n / nx).max(1));
    let gradient = |x: usize, y: usize| {
        let at = |xx: usize, yy: usize| &lab[yy * w + xx];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        lab_dist(at(xr, y), at(xl, y)).powi(2) + lab_dist(at(x, yd), at(x, yu)).powi(2)
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            // Move the seed to the lowest-gradient pixel in its 3x3 neighborhood.
            let (mut bx, mut by) = (gx, gy);
            let mut best = gradient(gx, gy);
            for yy in gy.saturating_sub(1)..=(gy + 1).min(h - 1) {
                for xx in gx.saturating_sub(1)..=(gx + 1).min(w - 1) {
                    let g = gradient(xx, yy);
                    if g < best {
                        best = g;
                        bx = xx;
                        by = yy;
                    }
                }
            }
            centers.push(Center { lab: lab[by * w + bx], x: bx as f64, y: by as f64 });
        }
    }
    centers
}

struct Components {
    /// Component id per pixel, ids assigned in scan order of first pixel.
    ids: Vec<usize>,
    count: usize,
}

fn connected_components(w: usize, h: usize, key: impl Fn(usize) -> i64) -> Components {
    let npix = w * h;
    let mut ids = vec![usize::MAX; npix];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..npix {
        if ids[start] != usize::MAX {
            continue;
        }
        let k = key(start);
        ids[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if ids[j] == usize::MAX && key(j) == k {
                    ids[j] = count;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        count += 1;
    }
    Components { ids, count }
}

/// Splits labels into 4-connected components, then merges unassigned
/// components and components below `min_size` into their largest neighbor.
/// Returns dense labels ordered by first pixel.
fn enforce_connectivity(w: usize, h: usize, labels: &[i64], min_size: f64) -> Vec<u32> {
    let comps = connected_components(w, h, |i| labels[i]);
    let n = comps.count;
    let mut size = vec![0usize; n];
    let mut orphan = vec![false; n];
    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..w * h {
        let c = comps.ids[i];
        size[c] += 1;
        orphan[c] = labels[i] < 0;
        let (x, y) = (i % w, i / w);
        if x + 1 < w && comps.ids[i + 1] != c {
            adjacent[c].insert(comps.ids[i + 1]);
            adjacent[comps.ids[i + 1]].insert(c);
        }
        if y + 1 < h && comps.ids[i + w] != c {
            adjacent[c].insert(comps.ids[i + w]);
            adjacent[comps.ids[i + w]].insert(c);
        }
    }

    // Union-find where each root carries its group's size, flag and adjacency.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let needs_merge = |root: usize, size: &[usize], orphan: &[bool]| {
        orphan[root] || (size[root] as f64) < min_size
    };

    let mut roots = n;
    loop {
        if roots <= 1 {
            break;
        }
        let mut pending: Vec<usize> =
            (0..n).filter(|&c| parent[c] == c && needs_merge(c, &size, &orphan)).collect();
        if pending.is_empty() {
            break;
        }
        pending.sort_by_key(|&c| (size[c], c));
        for c in pending {
            if parent[c] != c || !needs_merge(c, &size, &orphan) || roots <= 1 {
                continue;
            }
            let neighbours: BTreeSet<usize> =
                adjacent[c].iter().map(|&a| find(&mut parent, a)).filter(|&a| a != c).collect();
            // Prefer assigned segments; among them the largest, lowest id on ties.
            let Some(&target) = neighbours
                .iter()
                .max_by(|&&a, &&b| {
                    (!orphan[a], size[a]).cmp(&(!orphan[b], size[b])).then(b.cmp(&a))
                })
            else {
                continue;
            };
            parent[c] = target;
            size[target] += size[c];
            let moved = std::mem::take(&mut adjacent[c]);
            adjacent[target].extend(moved);
            roots -= 1;
        }
    }

    let mut dense_of_root = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut out = vec![0u32; w * h];
    for (o, &id) in out.iter_mut().zip(&comps.ids) {
        let r = find(&mut parent, id);
        if dense_of_root[r] == u32::MAX {
            dense_of_root[r] = next;
            next += 1;
        }
        *o = dense_of_root[r];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut s = seed;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 40) as f32 / (1u64 << 24) as f32
        };
        let data = (0..w * h * 3).map(|_| next()).collect();
        ImageBuffer::new(w, h, data).unwrap()
    }

    #[test]
    fn single_segment_covers_image() {
        for (w, h) in [(32, 32), (64, 16), (100, 3)] {
            let img = noise_image(w, h, 7);
            let seg = slic_segment(&img, 1, 10.0, 10).unwrap();
            assert_eq!(seg.n_actual(), 1);
            assert!(seg.labels().iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn constant_image_tessellates_near_grid() {
        let img = ImageBuffer::filled(64, 64, [0.4, 0.5, 0.6]).unwrap();
        let seg = slic_segment(&img, 16, 10.0, 10).unwrap();
        seg.check_partition().unwrap();
        assert_eq!(seg.n_actual(), 16);
        let nominal = 64.0 * 64.0 / 16.0;
        for s in seg.segment_sizes() {
            assert!((s as f64) <= 2.0 * nominal && (s as f64) >= nominal / 2.0, "size {s}");
        }
    }

    #[test]
    fn respects_strong_edge() {
        let (w, h) = (64, 64);
        let mut data = Vec::with_capacity(w * h * 3);
        for _y in 0..h {
            for x in 0..w {
                let v = if x < w / 2 { 0.0 } else { 1.0 };
                data.extend([v, v, v]);
            }
        }
        let img = ImageBuffer::new(w, h, data).unwrap();
        let seg = slic_segment(&img, 8, 10.0, 10).unwrap();
        seg.check_partition().unwrap();
        let mut side = vec![None; seg.n_actual()];
        for y in 0..h {
            for x in 0..w {
                let left = x < w / 2;
                let s = &mut side[seg.label(x, y) as usize];
                assert!(s.is_none() || *s == Some(left), "segment straddles the edge");
                *s = Some(left);
            }
        }
    }

    #[test]
    fn partition_invariants_on_noise() {
        for n in [5, 37, 150, 600] {
            let img = noise_image(48, 40, n as u64);
            let seg = slic_segment(&img, n, 10.0, 10).unwrap();
            seg.check_partition().unwrap();
        }
    }

    #[test]
    fn deterministic() {
        let img = noise_image(40, 40, 3);
        assert_eq!(slic_segment(&img, 50, 10.0, 10).unwrap(), slic_segment(&img, 50, 10.0, 10).unwrap());
    }

    #[test]
    fn rejects_bad_counts() {
        let img = noise_image(4, 4, 1);
        assert!(slic_segment(&img, 0, 10.0, 10).is_err());
        assert!(slic_segment(&img, 17, 10.0, 10).is_err());
        assert!(slic_segment(&img, 16, 10.0, 10).is_ok());
    }

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        let black = rgb_to_lab([0.0, 0.0, 0.0]);
        assert!(black.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn csv_export() {
        let seg = SegmentationMap::from_labels(3, 2, &[5, 5, 9, 5, 9, 9]).unwrap();
        assert_eq!(seg.to_csv(), "0,0,1\n0,1,1\n");
        assert_eq!(seg.n_actual(), 2);
    }
}
