//! Geometric cluster validity indices.

use rayon::prelude::*;

use super::{distinct_labels, MetricError};
use crate::dataset::{tanimoto_distance, Fingerprint};
use crate::points::{euclidean, squared_euclidean, Points};

/// Mean silhouette over all points for an arbitrary distance.
///
/// Points in singleton clusters score 0; a point with `max(a, b) = 0` also
/// scores 0.
pub fn silhouette<D>(n: usize, labels: &[usize], dist: D) -> Result<f64, MetricError>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    if labels.len() != n {
        return Err(MetricError::LengthMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n < 2 {
        return Err(MetricError::TooFewPoints(n));
    }
    let k = distinct_labels(labels);
    if k < 2 {
        return Err(MetricError::SingleCluster);
    }
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    labels.iter().for_each(|&l| sizes[l] += 1);

    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; n_labels];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..n_labels)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

pub fn silhouette_euclidean(points: &Points, labels: &[usize]) -> Result<f64, MetricError> {
    silhouette(points.len(), labels, |i, j| euclidean(points.row(i), points.row(j)))
}

/// Pairwise Tanimoto distances, row-major `n × n`.
pub fn tanimoto_matrix(fps: &[Fingerprint]) -> Result<Vec<f64>, MetricError> {
    let n = fps.len();
    let rows: Result<Vec<Vec<f64>>, _> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| tanimoto_distance(&fps[i], &fps[j]))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect();
    rows.map(|r| r.concat())
        .map_err(|e| MetricError::Degenerate(e.to_string()))
}

/// Silhouette on precomputed Tanimoto distances between fingerprints.
pub fn silhouette_tanimoto(fps: &[Fingerprint], labels: &[usize]) -> Result<f64, MetricError> {
    let n = fps.len();
    let d = tanimoto_matrix(fps)?;
    silhouette(n, labels, |i, j| d[i * n + j])
}

fn centroids(points: &Points, labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (x, &l) in points.rows().zip(labels) {
        sizes[l] += 1;
        sums[l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
    }
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, sizes)
}

fn check_points(points: &Points, labels: &[usize]) -> Result<usize, MetricError> {
    if labels.len() != points.len() {
        return Err(MetricError::LengthMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    if distinct_labels(labels) < 2 {
        return Err(MetricError::SingleCluster);
    }
    Ok(labels.iter().max().map_or(0, |m| m + 1))
}

/// Variance-ratio criterion `(B / (C - 1)) / (W / (M - C))`.
///
/// Returns `+inf` when the within-cluster scatter is zero.
pub fn calinski_harabasz(points: &Points, labels: &[usize]) -> Result<f64, MetricError> {
    let n_labels = check_points(points, labels)?;
    let m = points.len();
    let first = points.row(0);
    if points.rows().all(|x| x == first) {
        return Err(MetricError::Degenerate("all points identical".into()));
    }
    let c = distinct_labels(labels) as f64;
    let (mu, sizes) = centroids(points, labels, n_labels);
    let overall: Vec<f64> = {
        let mut s = vec![0.0; points.dim()];
        points
            .rows()
            .for_each(|x| s.iter_mut().zip(x).for_each(|(a, v)| *a += v));
        s.into_iter().map(|v| v / m as f64).collect()
    };
    let between: f64 = mu
        .iter()
        .zip(&sizes)
        .filter(|(_, &n)| n > 0)
        .map(|(mj, &n)| n as f64 * squared_euclidean(mj, &overall))
        .sum();
    let within: f64 = points
        .rows()
        .zip(labels)
        .map(|(x, &l)| squared_euclidean(x, &mu[l]))
        .sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between * (m as f64 - c) / (within * (c - 1.0)))
}

/// Mean over clusters of the worst `(σ_i + σ_j) / d(μ_i, μ_j)` ratio.
pub fn davies_bouldin(points: &Points, labels: &[usize]) -> Result<f64, MetricError> {
    let n_labels = check_points(points, labels)?;
    let (mu, sizes) = centroids(points, labels, n_labels);
    let mut spread = vec![0.0; n_labels];
    for (x, &l) in points.rows().zip(labels) {
        spread[l] += euclidean(x, &mu[l]);
    }
    let present: Vec<usize> = (0..n_labels).filter(|&c| sizes[c] > 0).collect();
    for &c in &present {
        spread[c] /= sizes[c] as f64;
    }
    let mut total = 0.0;
    for &i in &present {
        let mut worst: f64 = 0.0;
        for &j in &present {
            if i == j {
                continue;
            }
            let d = euclidean(&mu[i], &mu[j]);
            if d == 0.0 {
                return Err(MetricError::Degenerate("coincident cluster centroids".into()));
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Ok(total / present.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Points {
        Points::from_rows(&[vec![0.0], vec![0.1], vec![10.0], vec![10.1]])
    }

    #[test]
    fn silhouette_pairs() {
        // a = 0.1, b ≈ 10 → s ≈ 0.99
        let good = silhouette_euclidean(&pairs(), &[0, 0, 1, 1]).unwrap();
        assert!(good > 0.9, "{good}");
        let bad = silhouette_euclidean(&pairs(), &[0, 1, 0, 1]).unwrap();
        assert!(bad < 0.0, "{bad}");
        let singles = silhouette_euclidean(&pairs(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(singles, 0.0);
        assert_eq!(
            silhouette_euclidean(&pairs(), &[0, 0, 0, 0]).unwrap_err(),
            MetricError::SingleCluster
        );
    }

    #[test]
    fn silhouette_three_points_by_hand() {
        // points 0, 1, 4; clusters {0,1}, {4}
        // s0 = (4 - 1)/4, s1 = (3 - 1)/3, s2 = 0 (singleton)
        let pts = Points::from_rows(&[vec![0.0], vec![1.0], vec![4.0]]);
        let s = silhouette_euclidean(&pts, &[0, 0, 1]).unwrap();
        let want = (0.75 + 2.0 / 3.0) / 3.0;
        assert!((s - want).abs() < 1e-15);
    }

    #[test]
    fn tanimoto_silhouette_runs_on_fingerprints() {
        let fps: Vec<Fingerprint> = ["1100", "1110", "0011", "0001"]
            .iter()
            .map(|s| Fingerprint::from_bit_str(s))
            .collect();
        let s = silhouette_tanimoto(&fps, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.3);
    }

    #[test]
    fn calinski_harabasz_cases() {
        let ch = calinski_harabasz(&pairs(), &[0, 0, 1, 1]).unwrap();
        // B = 4 * 5.0^2 = 100, W = 4 * 0.05^2 = 0.01, ratio = 100*2/(0.01*1)
        assert!((ch - 20000.0).abs() < 1e-6, "{ch}");
        let shifted = Points::new(1, pairs().as_slice().iter().map(|x| x + 7.5).collect());
        let ch2 = calinski_harabasz(&shifted, &[0, 0, 1, 1]).unwrap();
        assert!((ch - ch2).abs() / ch < 1e-9);

        let dup = Points::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]]);
        assert_eq!(calinski_harabasz(&dup, &[0, 0, 1, 1]).unwrap(), f64::INFINITY);
        let same = Points::from_rows(&[vec![1.0], vec![1.0]]);
        assert!(matches!(calinski_harabasz(&same, &[0, 1]), Err(MetricError::Degenerate(_))));
        assert_eq!(calinski_harabasz(&pairs(), &[1, 1, 1, 1]).unwrap_err(), MetricError::SingleCluster);
    }

    #[test]
    fn davies_bouldin_cases() {
        // σ = 0.05 each, centroid distance 10 → DB = 0.1 / 10
        let db = davies_bouldin(&pairs(), &[0, 0, 1, 1]).unwrap();
        assert!((db - 0.01).abs() < 1e-12);
        let scaled = Points::new(1, pairs().as_slice().iter().map(|x| x * 3.0).collect());
        assert!((davies_bouldin(&scaled, &[0, 0, 1, 1]).unwrap() - db).abs() < 1e-12);
        assert_eq!(davies_bouldin(&pairs(), &[0, 1, 2, 3]).unwrap(), 0.0);
    }
}
