use serde::{Deserialize, Serialize};

use super::{EstimatorConfig, Posterior};
use crate::rng::RandomSource;
use crate::state::distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Simplified silhouette; `None` for a single cluster, where it is undefined.
    pub silhouette: Option<f64>,
}

impl ClusterAssignment {
    pub fn single(points: &[[f64; 2]]) -> Self {
        Self {
            k: 1,
            labels: vec![0; points.len()],
            centroids: vec![centroid(points.iter())],
            silhouette: None,
        }
    }
}

fn centroid<'a>(pts: impl Iterator<Item = &'a [f64; 2]>) -> [f64; 2] {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in pts {
        sx += p[0];
        sy += p[1];
        n += 1;
    }
    if n == 0 {
        [0.0, 0.0]
    } else {
        [sx / n as f64, sy / n as f64]
    }
}

fn centroids_of(points: &[[f64; 2]], labels: &[usize], k: usize) -> Vec<[f64; 2]> {
    (0..k)
        .map(|c| centroid(points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p)))
        .collect()
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    for (c, &q) in centroids.iter().enumerate().skip(1) {
        if distance(p, q) < distance(p, centroids[best]) {
            best = c;
        }
    }
    best
}

/// Mean over points of `(b - a) / max(a, b)`, with `a` the distance to the
/// own centroid and `b` to the nearest other centroid. Points in singleton
/// clusters score 0.
pub fn simplified_silhouette(points: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> f64 {
    if points.is_empty() || centroids.len() < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; centroids.len()];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let total: f64 = points
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            if sizes[l] <= 1 {
                return 0.0;
            }
            let a = distance(p, centroids[l]);
            let b = centroids
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != l)
                .map(|(_, &q)| distance(p, q))
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .sum();
    total / points.len() as f64
}

/// Relabel so clusters are numbered in order of first appearance.
fn canonical(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// Lloyd's K-means with farthest-point seeding from `first`. Empty clusters
/// are refilled with the point farthest from its centroid.
pub fn kmeans(points: &[[f64; 2]], k: usize, first: usize, max_iterations: usize) -> (Vec<usize>, Vec<[f64; 2]>) {
    let n = points.len();
    let k = k.clamp(1, n.max(1));
    let mut seeds = vec![first];
    while seeds.len() < k {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, &p) in points.iter().enumerate() {
            let d = seeds.iter().map(|&s| distance(p, points[s])).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        seeds.push(best);
    }
    lloyd(points, &seeds, max_iterations)
}

/// Lloyd iterations from the given seed points (one per cluster).
fn lloyd(points: &[[f64; 2]], seeds: &[usize], max_iterations: usize) -> (Vec<usize>, Vec<[f64; 2]>) {
    let k = seeds.len();
    let mut centroids: Vec<[f64; 2]> = seeds.iter().map(|&s| points[s]).collect();
    let mut labels: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
    for _ in 0..max_iterations.max(1) {
        fill_empty(points, &mut labels, &centroids, k);
        centroids = centroids_of(points, &labels, k);
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    fill_empty(points, &mut labels, &centroids, k);
    let labels = canonical(&labels, k);
    let centroids = centroids_of(points, &labels, k);
    (labels, centroids)
}

/// Whether every point is at least as close to its own centroid as to any
/// other, i.e. a Lloyd step would leave the partition in place.
fn is_stable(points: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> bool {
    points.iter().zip(labels).all(|(&p, &l)| {
        let own = distance(p, centroids[l]);
        centroids.iter().all(|&c| own <= distance(p, c))
    })
}

/// Every partition of the points into exactly `k` non-empty clusters that is
/// a K-means fixed point, labels in first-appearance order.
fn stable_partitions(points: &[[f64; 2]], k: usize) -> Vec<(Vec<usize>, Vec<[f64; 2]>)> {
    fn walk(
        points: &[[f64; 2]],
        k: usize,
        labels: &mut Vec<usize>,
        used: usize,
        out: &mut Vec<(Vec<usize>, Vec<[f64; 2]>)>,
    ) {
        let n = points.len();
        if labels.len() == n {
            if used == k {
                let c = centroids_of(points, labels, k);
                if is_stable(points, labels, &c) {
                    out.push((labels.clone(), c));
                }
            }
            return;
        }
        // not enough points left to open the remaining clusters
        if k - used > n - labels.len() {
            return;
        }
        for l in 0..=used.min(k - 1) {
            labels.push(l);
            walk(points, k, labels, used.max(l + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    walk(points, k, &mut Vec::with_capacity(points.len()), 0, &mut out);
    out
}

fn fill_empty(points: &[[f64; 2]], labels: &mut [usize], centroids: &[[f64; 2]], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // farthest point among clusters that can spare one
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = distance(p, centroids[labels[i]]);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

fn sse(points: &[[f64; 2]], labels: &[usize], centroids: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(&p, &l)| distance(p, centroids[l]).powi(2))
        .sum()
}

/// Clusters mode peak positions. A single cluster is returned when the
/// spread is below `cluster_scale` mean target sizes; otherwise k in
/// `2..=min(k_max, n)` is chosen by simplified silhouette. For each k the
/// best K-means solution is kept: with at most `exhaustive_max_modes` peaks
/// all fixed points are enumerated, otherwise farthest-point restarts are
/// compared.
pub fn cluster_modes(posterior: &Posterior, cfg: &EstimatorConfig, rng: &mut RandomSource) -> ClusterAssignment {
    let points: Vec<[f64; 2]> = posterior.modes.iter().map(|m| m.peak.position).collect();
    let n = points.len();
    if n <= 1 || cfg.k_max <= 1 {
        return ClusterAssignment::single(&points);
    }
    let mean_size = posterior.modes.iter().map(|m| m.peak.mean_size()).sum::<f64>() / n as f64;
    let mut spread = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            spread = spread.max(distance(points[a], points[b]));
        }
    }
    if spread < cfg.cluster_scale * mean_size {
        return ClusterAssignment::single(&points);
    }

    let restarts = cfg.kmeans_restarts.max(1);
    let starts: Vec<usize> = if n <= cfg.exhaustive_max_modes || n <= restarts {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..restarts {
            let j = i + rng.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(restarts);
        idx
    };

    let mut best: Option<(ClusterAssignment, f64)> = None;
    for k in 2..=cfg.k_max.min(n) {
        // Few peaks: every K-means fixed point. Otherwise farthest-point
        // restarts from the chosen starts.
        let runs: Vec<(Vec<usize>, Vec<[f64; 2]>)> = if n <= cfg.exhaustive_max_modes {
            stable_partitions(&points, k)
        } else {
            starts.iter().map(|&s| kmeans(&points, k, s, cfg.kmeans_iterations)).collect()
        };
        for (labels, centroids) in runs {
            let score = simplified_silhouette(&points, &labels, &centroids);
            let err = sse(&points, &labels, &centroids);
            let better = match &best {
                None => true,
                Some((b, berr)) => {
                    let bs = b.silhouette.unwrap_or(f64::NEG_INFINITY);
                    score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && k == b.k && err < *berr - 1e-12)
                }
            };
            if better {
                best = Some((
                    ClusterAssignment {
                        k,
                        labels,
                        centroids,
                        silhouette: Some(score),
                    },
                    err,
                ));
            }
        }
    }
    best.map(|(a, _)| a).unwrap_or_else(|| ClusterAssignment::single(&points))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::state::{ModelId, PosteriorMode, TargetState};

    fn posterior(points: &[[f64; 2]], size: f64) -> Posterior {
        Posterior {
            frame_index: 0,
            modes: points
                .iter()
                .map(|&p| PosteriorMode {
                    peak: TargetState::new(p, [size, size]),
                    weight: 1.0 / points.len() as f64,
                    converged_count: 1,
                    source_counts: BTreeMap::new(),
                    likelihood: 1.0,
                    model_id: ModelId(0),
                })
                .collect(),
        }
    }

    #[test]
    fn tight_peaks_form_one_cluster() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]];
        let a = cluster_modes(&posterior(&pts, 30.0), &EstimatorConfig::default(), &mut RandomSource::new(0));
        assert_eq!(a.k, 1);
        assert_eq!(a.labels, vec![0, 0, 0]);
        assert_eq!(a.silhouette, None);
        assert_eq!(a.centroids, vec![[1.0, 1.0 / 3.0]]);
    }

    #[test]
    fn two_loci_split_in_two() {
        let pts = [[0.0, 0.0], [100.0, 0.0], [1.0, 0.0], [101.0, 1.0], [0.0, 2.0]];
        let a = cluster_modes(&posterior(&pts, 20.0), &EstimatorConfig::default(), &mut RandomSource::new(0));
        assert_eq!(a.k, 2);
        assert_eq!(a.labels, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn k_max_one_forces_single_cluster() {
        let pts = [[0.0, 0.0], [100.0, 0.0]];
        let cfg = EstimatorConfig {
            k_max: 1,
            ..EstimatorConfig::default()
        };
        let mut rng = RandomSource::new(5);
        let before = rng.clone().next_u64();
        assert_eq!(cluster_modes(&posterior(&pts, 20.0), &cfg, &mut rng).k, 1);
        assert_eq!(rng.next_u64(), before);
    }

    #[test]
    fn silhouette_of_separated_pairs() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [100.0, 0.0], [102.0, 0.0]];
        let labels = [0, 0, 1, 1];
        let c = [[1.0, 0.0], [101.0, 0.0]];
        // a = 1, b = 99 or 101
        let expect = ((98.0 / 99.0) * 2.0 + (100.0 / 101.0) * 2.0) / 4.0;
        assert!((simplified_silhouette(&pts, &labels, &c) - expect).abs() < 1e-12);
    }

    #[test]
    fn singleton_points_score_zero() {
        let pts = [[0.0, 0.0], [10.0, 0.0]];
        assert_eq!(simplified_silhouette(&pts, &[0, 1], &pts), 0.0);
    }

    #[test]
    fn stable_partitions_of_a_line() {
        // 0, 1, 10 on a line: {0,1}{10} is stable, {0}{1,10} is not
        let pts = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]];
        let parts = stable_partitions(&pts, 2);
        let labels: Vec<Vec<usize>> = parts.into_iter().map(|(l, _)| l).collect();
        assert_eq!(labels, vec![vec![0, 0, 1]]);
        assert_eq!(stable_partitions(&pts, 3).len(), 1);
    }

    #[test]
    fn kmeans_restarts_for_many_peaks() {
        let mut pts = Vec::new();
        for i in 0..6 {
            pts.push([i as f64, 0.0]);
            pts.push([200.0 + i as f64, 0.0]);
        }
        let a = cluster_modes(&posterior(&pts, 20.0), &EstimatorConfig::default(), &mut RandomSource::new(3));
        assert_eq!(a.k, 2);
        for (i, &l) in a.labels.iter().enumerate() {
            assert_eq!(l, i % 2);
        }
    }

    #[test]
    fn kmeans_fills_every_cluster() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [5.0, 0.0]];
        let (labels, centroids) = kmeans(&pts, 3, 0, 50);
        let mut sizes = [0; 3];
        labels.iter().for_each(|&l| sizes[l] += 1);
        assert!(sizes.iter().all(|&s| s > 0));
        assert_eq!(centroids.len(), 3);
    }
}
