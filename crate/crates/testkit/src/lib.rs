//! Slow, obviously-correct reference implementations. Each one works from
//! definitions (subset enumeration, explicit path listing, exhaustive
//! partitions) and shares no code with the engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Undirected graph as an adjacency matrix.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            n,
            adj: vec![vec![false; n]; n],
        }
    }

    pub fn add(&mut self, a: usize, b: usize) {
        self.adj[a][b] = true;
        self.adj[b][a] = true;
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.adj[a][b] {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Random graph with `1..=max_n` nodes and a random edge density.
pub fn random_graph(rng: &mut ChaCha8Rng, max_n: usize) -> Graph {
    let n = rng.random_range(1..=max_n);
    let p: f64 = rng.random_range(0.05..0.95);
    let mut g = Graph::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                g.add(a, b);
            }
        }
    }
    g
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&v| mask & (1 << v) != 0).collect()
}

/// Maximal cliques by checking every vertex subset. Sorted by size
/// descending, then lexicographically.
pub fn maximal_cliques(g: &Graph) -> Vec<Vec<usize>> {
    assert!(g.n <= 20);
    let complete = |mask: u32| {
        let m = members(mask, g.n);
        m.iter().all(|&a| m.iter().all(|&b| a == b || g.adj[a][b]))
    };
    let mut out = Vec::new();
    for mask in 1u32..(1 << g.n) {
        if !complete(mask) {
            continue;
        }
        let extendable = (0..g.n).any(|v| mask & (1 << v) == 0 && complete(mask | (1 << v)));
        if !extendable {
            out.push(members(mask, g.n));
        }
    }
    out.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    out
}

/// Every shortest path between `s` and `t`, listed explicitly.
fn all_shortest_paths(g: &Graph, s: usize, t: usize) -> Vec<Vec<usize>> {
    let mut dist = vec![usize::MAX; g.n];
    dist[t] = 0;
    let mut frontier = vec![t];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &v in &frontier {
            for w in 0..g.n {
                if g.adj[v][w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    if dist[s] == usize::MAX {
        return Vec::new();
    }
    let mut paths = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let v = *path.last().unwrap();
        if v == t {
            paths.push(path);
            continue;
        }
        for w in 0..g.n {
            if g.adj[v][w] && dist[w] + 1 == dist[v] {
                let mut p = path.clone();
                p.push(w);
                stack.push(p);
            }
        }
    }
    paths
}

/// Betweenness by enumerating every shortest path of every unordered pair.
pub fn betweenness(g: &Graph, normalized: bool) -> Vec<f64> {
    let mut score = vec![0.0; g.n];
    for s in 0..g.n {
        for t in s + 1..g.n {
            let paths = all_shortest_paths(g, s, t);
            if paths.is_empty() {
                continue;
            }
            let total = paths.len() as f64;
            for (v, acc) in score.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                let through = paths.iter().filter(|p| p.contains(&v)).count() as f64;
                *acc += through / total;
            }
        }
    }
    if normalized && g.n > 2 {
        let pairs = ((g.n - 1) * (g.n - 2)) as f64 / 2.0;
        score.iter_mut().for_each(|x| *x /= pairs);
    }
    score
}

/// Modularity straight from the definition Q = 1/2m Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j).
pub fn modularity(g: &Graph, labels: &[usize]) -> f64 {
    let m = g.edges().len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let deg: Vec<f64> = (0..g.n).map(|v| g.adj[v].iter().filter(|&&x| x).count() as f64).collect();
    let mut q = 0.0;
    for i in 0..g.n {
        for j in 0..g.n {
            if labels[i] == labels[j] {
                let a = if g.adj[i][j] { 1.0 } else { 0.0 };
                q += a - deg[i] * deg[j] / (2.0 * m);
            }
        }
    }
    q / (2.0 * m)
}

/// All set partitions of `0..n` as label vectors.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(labels: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if labels.len() == n {
            out.push(labels.clone());
            return;
        }
        let next = labels.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            labels.push(l);
            rec(labels, n, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

/// Best modularity over every partition, with the optimal partitions.
pub fn best_modularity(g: &Graph) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = Vec::new();
    for labels in all_partitions(g.n) {
        let q = modularity(g, &labels);
        if q > best + 1e-12 {
            best = q;
            arg = vec![labels];
        } else if (q - best).abs() <= 1e-12 {
            arg.push(labels);
        }
    }
    (best, arg)
}

/// Converts labels into sorted groups ordered by size desc then lexicographic.
pub fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (v, &l) in labels.iter().enumerate() {
        out[l].push(v);
    }
    out.retain(|g| !g.is_empty());
    out.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    out
}

/// Smallest within-cluster sum of squares over every split into two
/// non-empty groups.
pub fn best_two_partition_inertia(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    assert!((2..=20).contains(&n));
    let sse = |idx: &[usize]| {
        let m = idx.len() as f64;
        let cx = idx.iter().map(|&i| points[i][0]).sum::<f64>() / m;
        let cy = idx.iter().map(|&i| points[i][1]).sum::<f64>() / m;
        idx.iter()
            .map(|&i| (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2))
            .sum::<f64>()
    };
    let mut best = f64::INFINITY;
    // Point 0 always in the first group to skip mirrored splits.
    for mask in 0u32..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![0], Vec::new());
        for i in 1..n {
            if mask & (1 << (i - 1)) != 0 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        if b.is_empty() {
            continue;
        }
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Unordered pairs of conditions from distinct dimensions, by double loop.
pub fn cross_pairs(sizes: &[usize]) -> u64 {
    let dims: Vec<usize> = sizes.iter().enumerate().flat_map(|(d, &n)| std::iter::repeat_n(d, n)).collect();
    let mut count = 0;
    for i in 0..dims.len() {
        for j in i + 1..dims.len() {
            if dims[i] != dims[j] {
                count += 1;
            }
        }
    }
    count
}

/// Configurations avoiding every excluded pair, by visiting all of them.
/// Conditions are flat indices; `excluded` holds unordered pairs.
pub fn count_configurations(sizes: &[usize], excluded: &[(usize, usize)]) -> u64 {
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let mut choice = vec![0usize; sizes.len()];
    let mut count = 0;
    'outer: loop {
        let flat: Vec<usize> = choice.iter().zip(&offsets).map(|(c, o)| c + o).collect();
        let bad = excluded
            .iter()
            .any(|&(a, b)| flat.contains(&a) && flat.contains(&b));
        if !bad {
            count += 1;
        }
        for d in (0..sizes.len()).rev() {
            choice[d] += 1;
            if choice[d] < sizes[d] {
                continue 'outer;
            }
            choice[d] = 0;
        }
        break;
    }
    count
}
