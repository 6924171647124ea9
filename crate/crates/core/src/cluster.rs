//! Seeded k-means over (impact, likelihood) points and pair clustering.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cca::ScenarioPair;
use crate::error::{Error, Result};
use crate::exec::Execution;

pub type Point = [f64; 2];

fn dist2(a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Index of the nearest centroid, lowest index on ties.
pub fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, dist2(p, &centroids[0]));
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent seeded restarts; the lowest-inertia run is kept.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

fn default_n_init() -> usize {
    KMeansParams::DEFAULT_N_INIT
}

impl KMeansParams {
    pub const DEFAULT_N_INIT: usize = 20;

    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 300,
            tol: 1e-9,
            n_init: Self::DEFAULT_N_INIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Point>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Restart that produced this model.
    pub restart: usize,
    /// Lloyd iterations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step, including the final one.
    pub inertia_history: Vec<f64>,
}

fn distinct_count(points: &[Point]) -> usize {
    let mut keys: Vec<(u64, u64)> = points.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn validate(points: &[Point], params: &KMeansParams) -> Result<()> {
    if params.max_iter == 0 {
        return Err(Error::parameter("max_iter", "must be at least 1"));
    }
    if !(params.tol.is_finite() && params.tol > 0.0) {
        return Err(Error::parameter("tol", "must be a positive number"));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::parameter("points", "coordinates must be finite"));
    }
    // Canonicalize -0.0 so it does not count as a distinct point.
    let canon: Vec<Point> = points.iter().map(|p| [p[0] + 0.0, p[1] + 0.0]).collect();
    let distinct = distinct_count(&canon);
    if params.k == 0 || params.k > distinct {
        return Err(Error::parameter(
            "k",
            format!("k = {} but there are {distinct} distinct points", params.k),
        ));
    }
    Ok(())
}

/// k-means++ seeding: first centre uniform, then D²-weighted draws.
fn seed_centroids(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let c = points[pick.expect("k does not exceed the distinct point count")];
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Point], centroids: &[Point], exec: Execution) -> (Vec<usize>, Vec<f64>) {
    exec.map(points, |p| nearest(p, centroids)).into_iter().unzip()
}

/// Lloyd's algorithm from k-means++ seeds, restarted `n_init` times on
/// separate streams of the seeded generator; the run with the lowest
/// inertia wins (earliest on ties). Deterministic for a given point order,
/// parameters and seed, and independent of `exec`.
///
/// An empty cluster is moved onto the point farthest from its own centroid
/// (lowest index on ties), never reusing a point within one step.
pub fn kmeans(points: &[Point], params: &KMeansParams, exec: Execution) -> Result<ClusterModel> {
    validate(points, params)?;
    let mut best: Option<ClusterModel> = None;
    for restart in 0..params.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(restart as u64);
        let model = lloyd(points, params, restart, &mut rng, exec);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init is at least 1"))
}

fn lloyd(points: &[Point], params: &KMeansParams, restart: usize, rng: &mut ChaCha8Rng, exec: Execution) -> ClusterModel {
    let k = params.k;
    let mut centroids = seed_centroids(points, k, rng);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        iterations += 1;
        let (labels, d2) = assign(points, &centroids, exec);
        history.push(d2.iter().sum());
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        let mut next: Vec<Point> = (0..k)
            .map(|c| {
                if counts[c] > 0 {
                    [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64]
                } else {
                    centroids[c]
                }
            })
            .collect();
        let mut used = vec![false; points.len()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..points.len())
                .filter(|&i| !used[i])
                .fold(None, |best: Option<(usize, f64)>, i| match best {
                    Some((_, bd)) if d2[i] <= bd => best,
                    _ => Some((i, d2[i])),
                });
            if let Some((i, _)) = far {
                used[i] = true;
                next[c] = points[i];
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < params.tol {
            converged = true;
            break;
        }
    }
    let (assignments, d2) = assign(points, &centroids, exec);
    let inertia: f64 = d2.iter().sum();
    history.push(inertia);
    ClusterModel {
        k,
        seed: params.seed,
        centroids,
        assignments,
        inertia,
        restart,
        iterations,
        converged,
        inertia_history: history,
    }
}

impl ClusterModel {
    /// Sum of squared distances to assigned centroids, recomputed.
    pub fn recompute_inertia(&self, points: &[Point]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &c)| dist2(p, &self.centroids[c]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub mean_impact: f64,
    pub mean_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredPair {
    pub a: usize,
    pub b: usize,
    pub condition_a: String,
    pub condition_b: String,
    pub impact: f64,
    pub likelihood: f64,
    pub cluster: usize,
}

/// Consistent pairs clustered and relabeled so cluster 0 has the lowest mean
/// impact (ties: lower mean likelihood, then original label).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClustering {
    pub model: ClusterModel,
    pub pairs: Vec<ClusteredPair>,
    pub summaries: Vec<ClusterSummary>,
}

pub fn cluster_pairs(pairs: &[ScenarioPair], params: &KMeansParams, exec: Execution) -> Result<PairClustering> {
    let consistent: Vec<&ScenarioPair> = pairs.iter().filter(|p| p.consistent).collect();
    if consistent.len() < params.k {
        return Err(Error::parameter(
            "k",
            format!("k = {} but only {} consistent pairs", params.k, consistent.len()),
        ));
    }
    let points: Vec<Point> = consistent.iter().map(|p| p.point()).collect();
    let model = kmeans(&points, params, exec)?;
    let k = model.k;
    let mut stats = vec![(0.0f64, 0.0f64, 0usize); k];
    for (p, &c) in points.iter().zip(&model.assignments) {
        stats[c].0 += p[0];
        stats[c].1 += p[1];
        stats[c].2 += 1;
    }
    let means: Vec<(f64, f64)> = stats
        .iter()
        .map(|&(i, l, n)| if n > 0 { (i / n as f64, l / n as f64) } else { (f64::INFINITY, f64::INFINITY) })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        means[x]
            .0
            .total_cmp(&means[y].0)
            .then(means[x].1.total_cmp(&means[y].1))
            .then(x.cmp(&y))
    });
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let model = ClusterModel {
        centroids: order.iter().map(|&c| model.centroids[c]).collect(),
        assignments: model.assignments.iter().map(|&c| relabel[c]).collect(),
        ..model
    };
    let summaries = order
        .iter()
        .enumerate()
        .map(|(new, &old)| ClusterSummary {
            cluster: new,
            size: stats[old].2,
            mean_impact: means[old].0,
            mean_likelihood: means[old].1,
        })
        .collect();
    let pairs = consistent
        .iter()
        .zip(&model.assignments)
        .map(|(p, &cluster)| ClusteredPair {
            a: p.a,
            b: p.b,
            condition_a: p.condition_a.clone(),
            condition_b: p.condition_b.clone(),
            impact: p.impact,
            likelihood: p.likelihood,
            cluster,
        })
        .collect();
    Ok(PairClustering {
        model,
        pairs,
        summaries,
    })
}

impl PairClustering {
    /// CSV `condition_a,condition_b,impact,likelihood,cluster`; clusters are
    /// numbered from 1 in the export.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing clusters";
        w.write_record(["condition_a", "condition_b", "impact", "likelihood", "cluster"])
            .map_err(|e| Error::csv(ctx, e))?;
        for p in &self.pairs {
            w.write_record([
                p.condition_a.clone(),
                p.condition_b.clone(),
                format!("{:.4}", p.impact),
                format!("{:.4}", p.likelihood),
                (p.cluster + 1).to_string(),
            ])
            .map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("clusters", e))?;
        Ok(())
    }
}
