use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::{canonical_order, SimpleGraph};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliqueSet {
    /// Maximal cliques, largest first, then lexicographic.
    pub cliques: Vec<Vec<usize>>,
    /// Number of maximal cliques containing each node.
    pub membership: Vec<usize>,
}

impl CliqueSet {
    pub fn largest_size(&self) -> usize {
        self.cliques.first().map_or(0, Vec::len)
    }

    /// How many maximal cliques have the largest size.
    pub fn maximum_count(&self) -> usize {
        let top = self.largest_size();
        self.cliques.iter().take_while(|c| c.len() == top).count()
    }
}

/// Vertices in degeneracy order: repeatedly take a vertex of minimum
/// remaining degree (lowest index on ties).
fn degeneracy_order(graph: &SimpleGraph) -> Vec<usize> {
    let n = graph.node_count();
    let mut deg: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n).filter(|&v| !removed[v]).min_by_key(|&v| (deg[v], v)).expect("vertex left");
        removed[v] = true;
        order.push(v);
        for &w in graph.neighbors(v) {
            if !removed[w] {
                deg[w] -= 1;
            }
        }
    }
    order
}

fn expand(r: &mut Vec<usize>, mut p: FixedBitSet, mut x: FixedBitSet, nbrs: &[FixedBitSet], out: &mut Vec<Vec<usize>>) {
    if p.is_clear() {
        if x.is_clear() {
            out.push(r.clone());
        }
        return;
    }
    let pivot = p
        .ones()
        .chain(x.ones())
        .max_by_key(|&u| (p.intersection(&nbrs[u]).count(), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.difference(&nbrs[pivot]).collect();
    for v in candidates {
        r.push(v);
        let p_next = &p & &nbrs[v];
        let x_next = &x & &nbrs[v];
        expand(r, p_next, x_next, nbrs, out);
        r.pop();
        p.set(v, false);
        x.insert(v);
    }
}

/// All maximal cliques (Bron–Kerbosch with pivoting, outer loop in degeneracy
/// order). Isolated nodes are singleton cliques. Output order does not depend
/// on `exec`.
pub fn maximal_cliques(graph: &SimpleGraph, exec: Execution) -> CliqueSet {
    let n = graph.node_count();
    let nbrs: Vec<FixedBitSet> = (0..n)
        .map(|v| {
            let mut s = FixedBitSet::with_capacity(n);
            s.extend(graph.neighbors(v).iter().copied());
            s
        })
        .collect();
    let order = degeneracy_order(graph);
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let parts = exec.map(&order, |&v| {
        let mut p = FixedBitSet::with_capacity(n);
        let mut x = FixedBitSet::with_capacity(n);
        for &w in graph.neighbors(v) {
            if position[w] > position[v] {
                p.insert(w);
            } else {
                x.insert(w);
            }
        }
        let mut out = Vec::new();
        expand(&mut vec![v], p, x, &nbrs, &mut out);
        out
    });
    let mut cliques: Vec<Vec<usize>> = parts.into_iter().flatten().collect();
    canonical_order(&mut cliques);
    let mut membership = vec![0; n];
    for c in &cliques {
        for &v in c {
            membership[v] += 1;
        }
    }
    CliqueSet { cliques, membership }
}
