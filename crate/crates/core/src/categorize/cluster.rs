use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Fuzzy memberships, one row per point.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub memberships: Option<Vec<Vec<f64>>>,
}

impl ClusterAssignment {
    /// Sum of squared distances to assigned centroids.
    pub fn inertia(&self, data: &[Vec<f64>]) -> f64 {
        data.iter()
            .zip(&self.labels)
            .map(|(p, &l)| sq_dist(p, &self.centroids[l]))
            .sum()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(data: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > data.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} features",
            data.len()
        )));
    }
    let d = data[0].len();
    if let Some(row) = data.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: format!("{d} dims"),
            found: format!("{} dims", row.len()),
        });
    }
    Ok(d)
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn means(data: &[Vec<f64>], labels: &[usize], k: usize, d: usize, prev: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in data.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(j, (s, c))| {
            if c == 0 {
                prev[j].clone()
            } else {
                s.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect()
}

/// k-means++ seeding.
pub fn kmeans_pp_init(data: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check(data, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    idx = i;
                    break;
                }
                t -= w;
            }
            idx
        } else {
            // all remaining points coincide with a centroid
            rng.random_range(0..data.len())
        };
        let c = data[pick].clone();
        for (dd, p) in d2.iter_mut().zip(data) {
            *dd = dd.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

/// Lloyd iterations from given centroids until the assignment is a fixpoint.
pub fn lloyd(data: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize) -> Result<ClusterAssignment> {
    let k = init.len();
    let d = check(data, k)?;
    let mut centroids = init;
    let mut labels: Vec<usize> = data.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..max_iter {
        centroids = means(data, &labels, k, d, &centroids);
        let next: Vec<usize> = data.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(ClusterAssignment {
        k,
        labels,
        centroids,
        memberships: None,
    })
}

pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    let init = kmeans_pp_init(data, k, seed)?;
    lloyd(data, init, max_iter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
    Ward,
    Single,
    Complete,
}

impl FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            _ => Err(Error::parse("linkage", format!("unknown linkage {s:?}"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Ward => "ward",
            Linkage::Single => "single",
            Linkage::Complete => "complete",
        })
    }
}

/// Bottom-up merging with Lance-Williams updates.
///
/// Clusters keep the slot of their lowest member; the closest pair wins,
/// ties going to the lexicographically lowest `(i, j)`. Ward works on
/// squared distances, the others on Euclidean ones. Labels are numbered by
/// first appearance.
pub fn agglomerative(data: &[Vec<f64>], k: usize, linkage: Linkage) -> Result<ClusterAssignment> {
    let d = check(data, k)?;
    let n = data.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let sq = sq_dist(&data[i], &data[j]);
            let v = if linkage == Linkage::Ward { sq } else { sq.sqrt() };
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    for _ in 0..n - k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && dist[i * n + j] < best.0 {
                    best = (dist[i * n + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let (dim, djm) = (dist[i * n + m], dist[j * n + m]);
            let nm = size[m] as f64;
            let v = match linkage {
                Linkage::Single => dim.min(djm),
                Linkage::Complete => dim.max(djm),
                Linkage::Average => (ni * dim + nj * djm) / (ni + nj),
                Linkage::Ward => ((ni + nm) * dim + (nj + nm) * djm - nm * dij) / (ni + nj + nm),
            };
            dist[i * n + m] = v;
            dist[m * n + i] = v;
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
    }
    let labels = relabel(&owner);
    let centroids = means(data, &labels, k, d, &vec![vec![0.0; d]; k]);
    Ok(ClusterAssignment {
        k,
        labels,
        centroids,
        memberships: None,
    })
}

/// Renumbers arbitrary ids by order of first appearance.
pub(crate) fn relabel(ids: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    ids.iter()
        .map(|id| {
            let next = map.len();
            *map.entry(*id).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmParams {
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        FcmParams {
            m: 2.0,
            tol: 1e-5,
            max_iter: 300,
        }
    }
}

/// Fuzzy memberships of one point given centroids.
///
/// A point sitting exactly on a centroid belongs to it (the first such one)
/// with membership 1.
pub fn fcm_memberships(p: &[f64], centroids: &[Vec<f64>], m: f64) -> Vec<f64> {
    let d: Vec<f64> = centroids.iter().map(|c| sq_dist(p, c).sqrt()).collect();
    if let Some(z) = d.iter().position(|&v| v == 0.0) {
        let mut u = vec![0.0; d.len()];
        u[z] = 1.0;
        return u;
    }
    let e = 2.0 / (m - 1.0);
    let u: Vec<f64> = d
        .iter()
        .map(|&dj| 1.0 / d.iter().map(|&dl| (dj / dl).powf(e)).sum::<f64>())
        .collect();
    let s: f64 = u.iter().sum();
    u.into_iter().map(|v| v / s).collect()
}

/// Fuzzy c-means seeded with k-means++ centroids.
pub fn fuzzy_cmeans(data: &[Vec<f64>], k: usize, params: FcmParams, seed: u64) -> Result<ClusterAssignment> {
    let d = check(data, k)?;
    if !(params.m > 1.0) || !params.m.is_finite() {
        return Err(Error::invalid(format!("fuzzifier m = {} must exceed 1", params.m)));
    }
    let mut centroids = kmeans_pp_init(data, k, seed)?;
    let mut u: Vec<Vec<f64>> = data.iter().map(|p| fcm_memberships(p, &centroids, params.m)).collect();
    for _ in 0..params.max_iter {
        let mut num = vec![vec![0.0; d]; k];
        let mut den = vec![0.0; k];
        for (p, row) in data.iter().zip(&u) {
            for j in 0..k {
                let w = row[j].powf(params.m);
                den[j] += w;
                for (acc, v) in num[j].iter_mut().zip(p) {
                    *acc += w * v;
                }
            }
        }
        for j in 0..k {
            if den[j] > 0.0 {
                centroids[j] = num[j].iter().map(|v| v / den[j]).collect();
            }
        }
        let next: Vec<Vec<f64>> = data.iter().map(|p| fcm_memberships(p, &centroids, params.m)).collect();
        let change = u
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        u = next;
        if change < params.tol {
            break;
        }
    }
    let labels = u.iter().map(|row| argmax(row)).collect();
    Ok(ClusterAssignment {
        k,
        labels,
        centroids,
        memberships: Some(u),
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans { max_iter: usize },
    Agglomerative { linkage: Linkage },
    Fcm { params: FcmParams },
}

impl Algorithm {
    pub fn run(&self, data: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
        match *self {
            Algorithm::Kmeans { max_iter } => kmeans(data, k, seed, max_iter),
            Algorithm::Agglomerative { linkage } => agglomerative(data, k, linkage),
            Algorithm::Fcm { params } => fuzzy_cmeans(data, k, params, seed),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    /// `kmeans`, `ac`, `ac:ward`, `fcm`, `fcm:1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        match (name, arg) {
            ("kmeans", None) => Ok(Algorithm::Kmeans { max_iter: 300 }),
            ("ac" | "agglomerative", l) => Ok(Algorithm::Agglomerative {
                linkage: l.map(str::parse).transpose()?.unwrap_or_default(),
            }),
            ("fcm", m) => {
                let mut params = FcmParams::default();
                if let Some(m) = m {
                    params.m = m
                        .parse()
                        .map_err(|_| Error::parse("fcm fuzzifier", format!("bad number {m:?}")))?;
                }
                Ok(Algorithm::Fcm { params })
            }
            _ => Err(Error::parse("algorithm", format!("unknown algorithm {s:?}"))),
        }
    }
}
