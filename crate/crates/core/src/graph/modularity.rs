use serde::{Deserialize, Serialize};

use super::{canonical_order, SimpleGraph};

/// Final partition of a greedy modularity run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Communities {
    /// Disjoint node sets covering the graph, largest first.
    pub communities: Vec<Vec<usize>>,
    pub modularity: f64,
    /// Q before any merge and after each accepted merge.
    pub history: Vec<f64>,
}

/// Newman modularity of `partition` (unweighted): Σ_c (L_c/m − (D_c/2m)²).
/// Zero for an edgeless graph.
pub fn modularity(graph: &SimpleGraph, partition: &[Vec<usize>]) -> f64 {
    let m = graph.edge_count();
    if m == 0 {
        return 0.0;
    }
    let mut label = vec![usize::MAX; graph.node_count()];
    for (c, members) in partition.iter().enumerate() {
        for &v in members {
            label[v] = c;
        }
    }
    let mut inside = vec![0u64; partition.len()];
    let mut degree = vec![0u64; partition.len()];
    for v in 0..graph.node_count() {
        degree[label[v]] += graph.degree(v) as u64;
    }
    for (a, b) in graph.edges() {
        if label[a] == label[b] {
            inside[label[a]] += 1;
        }
    }
    let m = m as f64;
    inside
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| l as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum()
}

/// Agglomerative greedy modularity maximization.
///
/// Starts from singletons and repeatedly merges the two communities with the
/// largest positive gain. The gain of merging `i` and `j` is proportional to
/// `2m·L_ij − D_i·D_j` (edges between them, degree sums), compared exactly in
/// integers. Ties go to the pair whose smallest members are lexicographically
/// smallest. Stops when no merge increases Q.
pub fn greedy_modularity_communities(graph: &SimpleGraph) -> Communities {
    let n = graph.node_count();
    let m = graph.edge_count();
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    if m == 0 {
        return Communities {
            communities: members,
            modularity: 0.0,
            history: vec![0.0],
        };
    }
    let two_m = 2 * m as i128;
    let mut alive = vec![true; n];
    let mut degree: Vec<i128> = (0..n).map(|v| graph.degree(v) as i128).collect();
    // between[i][j]: edges between live communities i and j.
    let mut between = vec![vec![0i128; n]; n];
    for (a, b) in graph.edges() {
        between[a][b] += 1;
        between[b][a] += 1;
    }
    // Community representative = smallest member; with singletons at start
    // and merges into the smaller index it is always the slot index.
    let mut q = modularity(graph, &members);
    let mut history = vec![q];
    let denom = 2.0 * (m as f64).powi(2);
    loop {
        let mut best: Option<(i128, usize, usize)> = None;
        for i in (0..n).filter(|&i| alive[i]) {
            for j in (i + 1..n).filter(|&j| alive[j]) {
                if between[i][j] == 0 {
                    continue;
                }
                let gain = two_m * between[i][j] - degree[i] * degree[j];
                if gain > 0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((gain, i, j)) = best else { break };
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        alive[j] = false;
        degree[i] += degree[j];
        for k in 0..n {
            if k != i && k != j && alive[k] {
                between[i][k] += between[j][k];
                between[k][i] = between[i][k];
            }
            between[j][k] = 0;
            between[k][j] = 0;
        }
        q += gain as f64 / denom;
        history.push(q);
    }
    let mut communities: Vec<Vec<usize>> = members.into_iter().filter(|c| !c.is_empty()).collect();
    canonical_order(&mut communities);
    let modularity = modularity(graph, &communities);
    Communities {
        communities,
        modularity,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bridged_triangles() -> SimpleGraph {
        SimpleGraph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap()
    }

    /// All set partitions of `0..n` (restricted growth strings).
    fn partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
        fn rec(v: usize, n: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
            if v == n {
                let k = labels.iter().max().map_or(0, |m| m + 1);
                let mut p = vec![Vec::new(); k];
                for (node, &l) in labels.iter().enumerate() {
                    p[l].push(node);
                }
                out.push(p);
                return;
            }
            let next = labels.iter().max().map_or(0, |m| m + 1);
            for l in 0..=next {
                labels.push(l);
                rec(v + 1, n, labels, out);
                labels.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn bridged_triangles_split_at_bridge() {
        let g = bridged_triangles();
        let c = greedy_modularity_communities(&g);
        assert_eq!(c.communities, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        let best = partitions(6)
            .into_iter()
            .map(|p| (modularity(&g, &p), p))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let mut optimum = best.1;
        canonical_order(&mut optimum);
        assert_eq!(optimum, c.communities);
        assert!((c.modularity - best.0).abs() < 1e-9);
        assert!((c.history.last().unwrap() - c.modularity).abs() < 1e-9);
    }

    #[test]
    fn complete_graph_single_community() {
        let edges = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b)));
        let g = SimpleGraph::from_edges(5, edges).unwrap();
        assert_eq!(greedy_modularity_communities(&g).communities, vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn edgeless_singletons() {
        let c = greedy_modularity_communities(&SimpleGraph::new(4));
        assert_eq!(c.communities.len(), 4);
        assert_eq!(c.modularity, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graphs() -> impl Strategy<Value = SimpleGraph> {
            (1usize..14).prop_flat_map(|n| {
                prop::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                    let pairs = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b)));
                    SimpleGraph::from_edges(n, pairs.zip(bits).filter(|x| x.1).map(|x| x.0)).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn partition_and_monotone(g in graphs()) {
                let c = greedy_modularity_communities(&g);
                let mut all: Vec<usize> = c.communities.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..g.node_count()).collect::<Vec<_>>());
                prop_assert!((modularity(&g, &c.communities) - c.modularity).abs() < 1e-9);
                prop_assert!(c.history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
                prop_assert!((c.history.last().unwrap() - c.modularity).abs() < 1e-9);
            }
        }
    }
}
