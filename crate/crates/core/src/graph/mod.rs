//! Correlation networks and the analytics run over them.

mod betweenness;
mod cliques;
mod correlation;
mod modularity;

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use betweenness::betweenness_centrality;
pub use cliques::{maximal_cliques, CliqueSet};
pub use correlation::{
    correlation_matrix, pair_profiles, pearson, read_matrix_csv, respondent_profiles, CorrelationAxis,
    CorrelationMatrix, EntityLevel, Profiles,
};
pub use modularity::{greedy_modularity_communities, modularity, Communities};

/// Undirected simple graph over nodes `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    pub fn new(n: usize) -> Self {
        SimpleGraph { adj: vec![Vec::new(); n] }
    }

    /// Duplicate edges collapse; self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = SimpleGraph::new(n);
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Shape(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::Shape(format!("self-loop on node {a}")));
            }
            g.adj[a].push(b);
            g.adj[b].push(a);
        }
        for list in &mut g.adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges with the smaller endpoint first, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }
}

/// Sorts node sets by size (largest first), then lexicographically.
pub(crate) fn canonical_order(sets: &mut [Vec<usize>]) {
    for s in sets.iter_mut() {
        s.sort_unstable();
    }
    sets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
}

/// Connected components, largest first, ties lexicographic.
pub fn connected_components(graph: &SimpleGraph) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in graph.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        out.push(comp);
    }
    canonical_order(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Edge when |r| ≥ threshold.
    #[default]
    SignedAbs,
    /// Edge when r ≥ threshold.
    PositiveOnly,
}

impl std::str::FromStr for EdgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed-abs" => Ok(EdgeMode::SignedAbs),
            "positive-only" => Ok(EdgeMode::PositiveOnly),
            other => Err(Error::parameter("mode", format!("unknown edge mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Threshold graph built from a correlation matrix. Edge weights keep the
/// sign of r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<WeightedEdge>,
    pub threshold: f64,
    pub mode: EdgeMode,
}

pub fn build_graph(matrix: &CorrelationMatrix, threshold: f64, mode: EdgeMode) -> Result<CorrelationGraph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::parameter("threshold", format!("{threshold} is outside [0, 1]")));
    }
    let n = matrix.ids.len();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let Some(r) = matrix.get(a, b) else { continue };
            let keep = match mode {
                EdgeMode::SignedAbs => r.abs() >= threshold,
                EdgeMode::PositiveOnly => r >= threshold,
            };
            if keep {
                edges.push(WeightedEdge { a, b, weight: r });
            }
        }
    }
    Ok(CorrelationGraph {
        nodes: matrix.ids.clone(),
        edges,
        threshold,
        mode,
    })
}

impl CorrelationGraph {
    pub fn simple(&self) -> SimpleGraph {
        SimpleGraph::from_edges(self.nodes.len(), self.edges.iter().map(|e| (e.a, e.b)))
            .expect("threshold graphs are simple")
    }

    /// Node id sets for index sets.
    pub fn name_sets(&self, sets: &[Vec<usize>]) -> Vec<Vec<String>> {
        sets.iter()
            .map(|s| s.iter().map(|&i| self.nodes[i].clone()).collect())
            .collect()
    }

    /// Edge list CSV `a,b,weight`, weights to 4 decimals.
    pub fn write_edges_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "writing graph edges";
        w.write_record(["a", "b", "weight"]).map_err(|e| Error::csv(ctx, e))?;
        for e in &self.edges {
            w.write_record([&self.nodes[e.a], &self.nodes[e.b], &format!("{:.4}", e.weight)])
                .map_err(|e| Error::csv(ctx, e))?;
        }
        w.flush().map_err(|e| Error::io("graph edges", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_examples() {
        assert_eq!(connected_components(&SimpleGraph::new(3)), vec![vec![0], vec![1], vec![2]]);
        let path = SimpleGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(connected_components(&path).len(), 1);
        let two = SimpleGraph::from_edges(4, [(2, 3), (0, 1)]).unwrap();
        assert_eq!(connected_components(&two), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn rejects_loops() {
        assert!(SimpleGraph::from_edges(2, [(1, 1)]).is_err());
        assert!(SimpleGraph::from_edges(2, [(0, 2)]).is_err());
        let g = SimpleGraph::from_edges(3, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    fn three() -> CorrelationMatrix {
        CorrelationMatrix::from_values(
            vec!["a".into(), "b".into(), "c".into()],
            CorrelationAxis::Combined,
            vec![
                vec![Some(1.0), Some(0.9), Some(0.2)],
                vec![Some(0.9), Some(1.0), Some(0.7)],
                vec![Some(0.2), Some(0.7), Some(1.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn threshold_filter() {
        let g = build_graph(&three(), 0.6, EdgeMode::SignedAbs).unwrap();
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(build_graph(&three(), 0.0, EdgeMode::SignedAbs).unwrap().edges.len(), 3);
        assert!(build_graph(&three(), 1.0, EdgeMode::SignedAbs).unwrap().edges.is_empty());
        assert!(build_graph(&three(), 1.5, EdgeMode::SignedAbs).is_err());
    }

    #[test]
    fn sign_modes() {
        let m = CorrelationMatrix::from_values(
            vec!["a".into(), "b".into()],
            CorrelationAxis::Impact,
            vec![vec![Some(1.0), Some(-0.8)], vec![Some(-0.8), Some(1.0)]],
        )
        .unwrap();
        let g = build_graph(&m, 0.6, EdgeMode::SignedAbs).unwrap();
        assert_eq!(g.edges[0].weight, -0.8);
        assert!(build_graph(&m, 0.6, EdgeMode::PositiveOnly).unwrap().edges.is_empty());
    }
}
