//! One-dimensional Lloyd k-means used to split objects into size groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::stable_sum;

const MAX_ITERS: usize = 100;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeGroup {
    Small,
    Middle,
    Large,
}

impl SizeGroup {
    pub const ALL: [SizeGroup; 3] = [SizeGroup::Small, SizeGroup::Middle, SizeGroup::Large];

    pub fn from_rank(rank: usize) -> Self {
        match rank {
            0 => SizeGroup::Small,
            1 => SizeGroup::Middle,
            _ => SizeGroup::Large,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SizeGroup::Small => "small",
            SizeGroup::Middle => "middle",
            SizeGroup::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    /// Cluster rank per input value; rank 0 has the smallest centroid.
    pub labels: Vec<usize>,
    /// Centroids in ascending order.
    pub centroids: Vec<f64>,
    /// Lloyd iterations run from the quantile start.
    pub iterations: usize,
    /// Whether the Lloyd fixed point was replaced by the exact optimum.
    pub refined: bool,
}

impl KMeans1d {
    /// Within-cluster sum of squared deviations.
    pub fn sse(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.labels).map(|(v, &l)| (v - self.centroids[l]).powi(2)).sum()
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lloyd iterations from centroids at the `(2i + 1) / 2k` quantiles, stopping
/// when no centroid moves more than 1e-9 or after 100 iterations. Lloyd can
/// stop at a local optimum, so the result is compared against the exact
/// optimal partition and replaced by it when that has lower SSE.
pub fn kmeans_1d(values: &[f64], k: usize) -> Result<KMeans1d> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::invalid(format!(
            "need at least {k} distinct values, got {}",
            distinct.len()
        )));
    }

    let mut centroids: Vec<f64> =
        (0..k).map(|i| quantile(&sorted, (2 * i + 1) as f64 / (2 * k) as f64)).collect();
    let mut labels = vec![0usize; values.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        for (l, v) in labels.iter_mut().zip(values) {
            let mut best = 0;
            for (j, c) in centroids.iter().enumerate() {
                if (v - c).abs() < (v - centroids[best]).abs() {
                    best = j;
                }
            }
            *l = best;
        }
        let mut shift = 0.0f64;
        for (j, centroid) in centroids.iter_mut().enumerate() {
            let members = labels.iter().zip(values).filter(|(&l, _)| l == j).map(|(_, &v)| v);
            let count = labels.iter().filter(|&&l| l == j).count();
            if count > 0 {
                let c = stable_sum(members) / count as f64;
                shift = shift.max((c - *centroid).abs());
                *centroid = c;
            }
        }
        if shift < TOLERANCE {
            break;
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]));
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let lloyd = KMeans1d {
        labels: labels.iter().map(|&l| rank[l]).collect(),
        centroids: order.iter().map(|&j| centroids[j]).collect(),
        iterations,
        refined: false,
    };

    let (bounds, best_sse) = optimal_partition(&distinct, &sorted, k);
    if best_sse < lloyd.sse(values) - 1e-12 {
        let mut groups = vec![Vec::new(); k];
        let labels = values
            .iter()
            .map(|v| {
                let l = bounds.iter().take_while(|&&b| *v >= b).count();
                groups[l].push(*v);
                l
            })
            .collect();
        let centroids = groups.iter().map(|g| stable_sum(g.iter().copied()) / g.len() as f64).collect();
        return Ok(KMeans1d { labels, centroids, iterations, refined: true });
    }
    Ok(lloyd)
}

/// Exact minimum-SSE split of sorted data into `k` runs. Runs never split
/// equal values, so the search is over the distinct values weighted by their
/// multiplicity, using divide-and-conquer over monotone split points.
/// Returns the lower bound value of clusters `1..k` and the total SSE.
fn optimal_partition(distinct: &[f64], sorted: &[f64], k: usize) -> (Vec<f64>, f64) {
    let m = distinct.len();
    let mut cnt = vec![0.0; m + 1];
    let mut s1 = vec![0.0; m + 1];
    let mut s2 = vec![0.0; m + 1];
    let mut pos = 0;
    for (i, &d) in distinct.iter().enumerate() {
        let mut c = 0usize;
        while pos < sorted.len() && sorted[pos] == d {
            c += 1;
            pos += 1;
        }
        let c = c as f64;
        cnt[i + 1] = cnt[i] + c;
        s1[i + 1] = s1[i] + c * d;
        s2[i + 1] = s2[i] + c * d * d;
    }
    // SSE of distinct[i..j], computed around the run mean for accuracy.
    let cost = |i: usize, j: usize| -> f64 {
        let n = cnt[j] - cnt[i];
        let mean = (s1[j] - s1[i]) / n;
        ((s2[j] - s2[i]) - n * mean * mean).max(0.0)
    };

    let mut prev = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    let mut splits = vec![vec![0usize; m + 1]; k + 1];
    for (c, split) in splits.iter_mut().enumerate().skip(1) {
        let mut cur = vec![f64::INFINITY; m + 1];
        fill_layer(c, m, c - 1, m - 1, &prev, &mut cur, split, &cost);
        prev = cur;
    }

    let mut bounds = Vec::with_capacity(k - 1);
    let mut j = m;
    for c in (2..=k).rev() {
        j = splits[c][j];
        bounds.push(distinct[j]);
    }
    bounds.reverse();
    (bounds, prev[m])
}

#[allow(clippy::too_many_arguments)]
fn fill_layer(
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cur: &mut [f64],
    split: &mut [usize],
    cost: &dyn Fn(usize, usize) -> f64,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo);
    for (i, &p) in prev.iter().enumerate().take(opt_hi.min(mid - 1) + 1).skip(opt_lo) {
        let v = p + cost(i, mid);
        if v < best.0 {
            best = (v, i);
        }
    }
    cur[mid] = best.0;
    split[mid] = best.1;
    if mid > lo {
        fill_layer(lo, mid - 1, opt_lo, best.1, prev, cur, split, cost);
    }
    fill_layer(mid + 1, hi, best.1, opt_hi, prev, cur, split, cost);
}

/// Three-way size grouping of box-to-image area ratios.
pub fn kmeans_1d_group(ratios: &[f64]) -> Result<(Vec<SizeGroup>, Vec<f64>)> {
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::invalid(format!("area ratio {r} outside (0, 1]")));
    }
    let km = kmeans_1d(ratios, 3)?;
    Ok((km.labels.iter().map(|&l| SizeGroup::from_rank(l)).collect(), km.centroids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_clusters() {
        let mut r = vec![0.01; 10];
        r.extend([0.2; 10]);
        r.extend([0.8; 10]);
        let (groups, centroids) = kmeans_1d_group(&r).unwrap();
        assert_eq!(centroids, vec![0.01, 0.2, 0.8]);
        assert!(groups[..10].iter().all(|g| *g == SizeGroup::Small));
        assert!(groups[10..20].iter().all(|g| *g == SizeGroup::Middle));
        assert!(groups[20..].iter().all(|g| *g == SizeGroup::Large));
        let km = kmeans_1d(&r, 3).unwrap();
        assert_eq!(km.iterations, 1);
        assert!(!km.refined);
    }

    #[test]
    fn too_few_distinct_values() {
        assert!(kmeans_1d_group(&[0.1, 0.1, 0.2, 0.2]).is_err());
        assert!(kmeans_1d_group(&[0.1, 0.0, 0.3]).is_err());
        assert!(kmeans_1d_group(&[0.1, 0.2, 0.3]).is_ok());
    }

    fn brute_force_sse(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let sse = |r: &[f64]| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let n = v.len();
        let mut best = f64::INFINITY;
        for a in 1..n - 1 {
            for b in a + 1..n {
                best = best.min(sse(&v[..a]) + sse(&v[a..b]) + sse(&v[b..]));
            }
        }
        best
    }

    #[test]
    fn reaches_global_optimum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut refined = 0;
        for _ in 0..300 {
            let n = rng.gen_range(4..16);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..1.0)).collect();
            let km = kmeans_1d(&v, 3).unwrap();
            assert!((km.sse(&v) - brute_force_sse(&v)).abs() < 1e-9);
            assert!(km.centroids.windows(2).all(|c| c[0] < c[1]));
            refined += km.refined as usize;
        }
        assert!(refined > 0);
    }

    proptest! {
        #[test]
        fn input_order_does_not_matter(
            mut vals in prop::collection::vec(0.001..1.0f64, 6..40),
            rot in 0usize..40,
        ) {
            vals.dedup();
            prop_assume!(vals.len() >= 3);
            let a = kmeans_1d(&vals, 3).unwrap();
            let mut sorted = vals.clone();
            sorted.sort_by(f64::total_cmp);
            let mut rotated = vals.clone();
            let n = rotated.len();
            rotated.rotate_left(rot % n);
            let b = kmeans_1d(&rotated, 3).unwrap();
            let c = kmeans_1d(&sorted, 3).unwrap();
            for ((x, y), z) in a.centroids.iter().zip(&b.centroids).zip(&c.centroids) {
                prop_assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
            }
        }
    }
}
