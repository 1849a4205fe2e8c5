//! Brute-force reference implementations, written straight from the defining
//! formulas. Nothing here calls into the crate's computational code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

// ---------------------------------------------------------------- k-means

/// Index of the closest centroid, lowest index on ties.
pub fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for j in 1..centroids.len() {
        if sq_dist(x, &centroids[j]) < sq_dist(x, &centroids[best]) {
            best = j;
        }
    }
    best
}

/// Plain Lloyd iterations from given centroids; empty clusters keep their
/// previous centroid.
pub fn oracle_kmeans(points: &[Vec<f64>], init: &[Vec<f64>], iterations: usize) -> Vec<Vec<f64>> {
    let mut c = init.to_vec();
    let dim = points[0].len();
    for _ in 0..iterations {
        let mut next = Vec::new();
        for j in 0..c.len() {
            let members: Vec<&Vec<f64>> = points.iter().filter(|x| nearest(x, &c) == j).collect();
            if members.is_empty() {
                next.push(c[j].clone());
                continue;
            }
            let mut mean = vec![0.0; dim];
            for m in &members {
                for d in 0..dim {
                    mean[d] += m[d];
                }
            }
            for v in &mut mean {
                *v /= members.len() as f64;
            }
            next.push(mean);
        }
        c = next;
    }
    c
}

// ---------------------------------------------------------------- PCA

/// Scatter matrix `Σ_i (x_i - μ)(x_i - μ)ᵀ` by the literal double sum.
pub fn oracle_covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = points.len();
    let d = points[0].len();
    let mut mu = vec![0.0; d];
    for x in points {
        for j in 0..d {
            mu[j] += x[j] / m as f64;
        }
    }
    let mut c = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            for x in points {
                c[a][b] += (x[a] - mu[a]) * (x[b] - mu[b]);
            }
        }
    }
    c
}

// ---------------------------------------------------------------- LSH

pub fn entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        0.0
    } else {
        -(q * q.log2() + (1.0 - q) * (1.0 - q).log2())
    }
}

/// Top `n` bit positions by entropy, ties to the lower position.
pub fn oracle_top_bits(fps: &[Vec<bool>], n: usize) -> BTreeSet<usize> {
    let width = fps[0].len();
    let mut scored: Vec<(f64, usize)> = (0..width)
        .map(|b| {
            let ones = fps.iter().filter(|f| f[b]).count();
            (entropy(ones as f64 / fps.len() as f64), b)
        })
        .collect();
    scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    scored.into_iter().take(n).map(|(_, b)| b).collect()
}

/// Groups records whose values agree on every selected bit.
pub fn oracle_bins(fps: &[Vec<bool>], bits: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for (i, f) in fps.iter().enumerate() {
        groups.entry(bits.iter().map(|&b| f[b]).collect()).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Federated bit selection: intersect per-client top bits, doubling `n` while
/// the intersection is empty. The reported `n` is capped at the width.
pub fn oracle_fed_bits(clients: &[Vec<Vec<bool>>], mut n: usize, max_doublings: usize) -> Option<(BTreeSet<usize>, usize)> {
    let width = clients[0][0].len();
    for _ in 0..=max_doublings {
        let sets: Vec<BTreeSet<usize>> = clients.iter().map(|c| oracle_top_bits(c, n.min(width))).collect();
        let mut inter = sets[0].clone();
        for s in &sets[1..] {
            inter = inter.intersection(s).copied().collect();
        }
        if !inter.is_empty() {
            return Some((inter, n.min(width)));
        }
        n *= 2;
    }
    None
}

pub fn tanimoto(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

// ---------------------------------------------------------------- metrics

pub fn oracle_silhouette(d: &dyn Fn(usize, usize) -> f64, labels: &[usize]) -> f64 {
    let n = labels.len();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == labels[i] {
                continue;
            }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            b = b.min(other.iter().map(|&j| d(i, j)).sum::<f64>() / other.len() as f64);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; points[0].len()];
    for p in points {
        for j in 0..c.len() {
            c[j] += p[j];
        }
    }
    c.iter().map(|v| v / points.len() as f64).collect()
}

fn members(points: &[Vec<f64>], labels: &[usize]) -> BTreeMap<usize, Vec<Vec<f64>>> {
    let mut m: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (p, &l) in points.iter().zip(labels) {
        m.entry(l).or_default().push(p.clone());
    }
    m
}

pub fn oracle_calinski_harabasz(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mu = centroid(points);
    let groups = members(points, labels);
    let mut b = 0.0;
    let mut w = 0.0;
    for g in groups.values() {
        let c = centroid(g);
        b += g.len() as f64 * sq_dist(&c, &mu);
        for x in g {
            w += sq_dist(x, &c);
        }
    }
    if w == 0.0 {
        // perfectly tight clusters: unbounded by convention
        return f64::INFINITY;
    }
    let k = groups.len() as f64;
    let m = points.len() as f64;
    (b / (k - 1.0)) / (w / (m - k))
}

pub fn oracle_davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let groups: Vec<Vec<Vec<f64>>> = members(points, labels).into_values().collect();
    let cents: Vec<Vec<f64>> = groups.iter().map(|g| centroid(g)).collect();
    let sig: Vec<f64> = groups
        .iter()
        .zip(&cents)
        .map(|(g, c)| g.iter().map(|x| dist(x, c)).sum::<f64>() / g.len() as f64)
        .collect();
    let mut total = 0.0;
    for i in 0..groups.len() {
        let mut worst = 0.0f64;
        for j in 0..groups.len() {
            if i != j {
                worst = worst.max((sig[i] + sig[j]) / dist(&cents[i], &cents[j]));
            }
        }
        total += worst;
    }
    total / groups.len() as f64
}

/// Direct evaluation of SF, ICF and the size-weighted sum over clusters and
/// their distinct scaffolds.
pub fn oracle_sf_icf(scaffolds: &[&str], labels: &[usize]) -> f64 {
    let n = scaffolds.len() as f64;
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let n_c = clusters.len() as f64;
    let sf = |s: &str, c: usize| {
        let size = labels.iter().filter(|&&l| l == c).count() as f64;
        let hit = (0..labels.len()).filter(|&i| labels[i] == c && scaffolds[i] == s).count() as f64;
        hit / size
    };
    let icf = |s: &str| {
        if n_c <= 1.0 {
            return 0.0;
        }
        let containing = clusters
            .iter()
            .filter(|&&c| (0..labels.len()).any(|i| labels[i] == c && scaffolds[i] == s))
            .count() as f64;
        (n_c / containing).ln() / n_c.ln()
    };
    let mut total = 0.0;
    for &c in &clusters {
        let size = labels.iter().filter(|&&l| l == c).count() as f64;
        let distinct: BTreeSet<&str> = (0..labels.len()).filter(|&i| labels[i] == c).map(|i| scaffolds[i]).collect();
        let inner: f64 = distinct.iter().map(|s| sf(s, c) * icf(s)).sum();
        total += size / n * inner;
    }
    total
}

pub fn oracle_kld(scaffolds: &[&str], labels: &[usize], cluster: usize) -> f64 {
    let n = scaffolds.len() as f64;
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cluster).collect();
    let distinct: BTreeSet<&str> = idx.iter().map(|&i| scaffolds[i]).collect();
    let mut kl = 0.0;
    for s in distinct {
        let pc = idx.iter().filter(|&&i| scaffolds[i] == s).count() as f64 / idx.len() as f64;
        let p = scaffolds.iter().filter(|&&t| t == s).count() as f64 / n;
        kl += pc * (pc / p).ln();
    }
    kl
}

/// Decile bin of each value: `floor(10 · #{values strictly smaller} / n)`.
pub fn oracle_deciles(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    values
        .iter()
        .map(|x| {
            let below = values.iter().filter(|v| *v < x).count();
            (10 * below / n).min(9)
        })
        .collect()
}
