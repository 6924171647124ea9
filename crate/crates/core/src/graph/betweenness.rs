use std::collections::VecDeque;

use super::SimpleGraph;
use crate::exec::Execution;

/// Single-source dependency accumulation (Brandes), unweighted.
fn dependencies(graph: &SimpleGraph, s: usize) -> Vec<f64> {
    let n = graph.node_count();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    sigma[s] = 1.0;
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        stack.push(v);
        for &w in graph.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &preds[w] {
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
    }
    delta[s] = 0.0;
    delta
}

/// Betweenness centrality: for every node, the sum over unordered pairs of
/// other nodes of the fraction of their shortest paths passing through it.
/// Edge weights are ignored. With `normalized`, scores are divided by the
/// number of pairs of other nodes, (n−1)(n−2)/2, when n > 2.
///
/// Per-source contributions are summed in source order, so the result does
/// not depend on `exec`.
pub fn betweenness_centrality(graph: &SimpleGraph, normalized: bool, exec: Execution) -> Vec<f64> {
    let n = graph.node_count();
    let parts = exec.map_range(n, |s| dependencies(graph, s));
    let mut score = vec![0.0f64; n];
    for d in parts {
        for (acc, x) in score.iter_mut().zip(d) {
            *acc += x;
        }
    }
    let scale = if normalized && n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.5
    };
    score.iter_mut().for_each(|x| *x *= scale);
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let path = SimpleGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(betweenness_centrality(&path, false, Execution::Sequential), vec![0.0, 1.0, 0.0]);
        assert_eq!(betweenness_centrality(&path, true, Execution::Sequential), vec![0.0, 1.0, 0.0]);
        let k4 = SimpleGraph::from_edges(4, (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b)))).unwrap();
        assert!(betweenness_centrality(&k4, false, Execution::Parallel).iter().all(|&x| x == 0.0));
        let star = SimpleGraph::from_edges(5, (1..5).map(|l| (0, l))).unwrap();
        let b = betweenness_centrality(&star, false, Execution::Sequential);
        assert_eq!(b, vec![6.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(betweenness_centrality(&star, true, Execution::Sequential)[0], 1.0);
    }
}
