//! Fill-reducing ordering: minimum degree on the graph of A + Aᵀ with
//! supervariable detection and mass elimination.
//!
//! The elimination graph is kept explicitly (adjacency lists are replaced by
//! the merged clique after each pivot). Nodes with identical closed
//! neighbourhoods are merged into one supervariable and eliminated together.
//! Ties are broken by the smallest node id so the ordering is a pure
//! function of the pattern.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::csc::CscMatrix;

/// Returns a permutation `order` such that `order[k]` is the k-th column to
/// eliminate.
pub fn minimum_degree(a: &CscMatrix) -> Vec<usize> {
    assert_eq!(a.nrows, a.ncols, "ordering needs a square matrix");
    let n = a.ncols;
    if n == 0 {
        return Vec::new();
    }

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for &i in a.col(j).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut g = Graph {
        adj,
        weight: vec![1; n],
        members: (0..n).map(|i| vec![i]).collect(),
        alive: vec![true; n],
        degree: vec![0; n],
    };
    let all: Vec<usize> = (0..n).collect();
    g.merge_indistinguishable(&all);
    let mut heap = BinaryHeap::new();
    for u in 0..n {
        if g.alive[u] {
            g.degree[u] = g.external_degree(u);
            heap.push(Reverse((g.degree[u], u)));
        }
    }

    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((d, p))) = heap.pop() {
        if !g.alive[p] || g.degree[p] != d {
            continue;
        }
        g.alive[p] = false;
        order.extend_from_slice(&g.members[p]);
        let nbrs = std::mem::take(&mut g.adj[p]);
        for &u in &nbrs {
            let merged = merge_sorted(&g.adj[u], &nbrs);
            g.adj[u] = merged.into_iter().filter(|&w| w != u && w != p).collect();
        }
        g.merge_indistinguishable(&nbrs);
        for &u in &nbrs {
            if g.alive[u] {
                g.degree[u] = g.external_degree(u);
                heap.push(Reverse((g.degree[u], u)));
            }
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

struct Graph {
    adj: Vec<Vec<usize>>,
    weight: Vec<usize>,
    members: Vec<Vec<usize>>,
    alive: Vec<bool>,
    degree: Vec<usize>,
}

impl Graph {
    fn external_degree(&self, u: usize) -> usize {
        self.adj[u].iter().map(|&w| self.weight[w]).sum()
    }

    /// Merges nodes among `candidates` whose closed neighbourhoods coincide.
    fn merge_indistinguishable(&mut self, candidates: &[usize]) {
        let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
        for &u in candidates {
            if !self.alive[u] {
                continue;
            }
            let mut h = u as u64;
            for &w in &self.adj[u] {
                h = h.wrapping_add(w as u64);
            }
            buckets.entry((self.adj[u].len(), h)).or_default().push(u);
        }
        let mut groups: Vec<Vec<usize>> = buckets.into_values().filter(|v| v.len() > 1).collect();
        // deterministic processing order
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_unstable();
        for group in groups {
            for (x, &u) in group.iter().enumerate() {
                if !self.alive[u] {
                    continue;
                }
                for &v in &group[x + 1..] {
                    if !self.alive[v] || !self.closed_equal(u, v) {
                        continue;
                    }
                    let absorbed = std::mem::take(&mut self.members[v]);
                    self.members[u].extend(absorbed);
                    self.weight[u] += self.weight[v];
                    self.alive[v] = false;
                    let v_adj = std::mem::take(&mut self.adj[v]);
                    for w in v_adj {
                        if let Ok(pos) = self.adj[w].binary_search(&v) {
                            self.adj[w].remove(pos);
                        }
                    }
                }
            }
        }
    }

    fn closed_equal(&self, u: usize, v: usize) -> bool {
        let (a, b) = (&self.adj[u], &self.adj[v]);
        if a.len() != b.len() {
            return false;
        }
        // closed neighbourhoods: a ∪ {u} == b ∪ {v}; u ∈ b and v ∈ a required
        if a.binary_search(&v).is_err() || b.binary_search(&u).is_err() {
            return false;
        }
        let strip = |list: &[usize], skip: usize| -> Vec<usize> {
            list.iter().copied().filter(|&w| w != skip).collect()
        };
        strip(a, v) == strip(b, u)
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::csc::Triplets;

    fn is_permutation(p: &[usize], n: usize) -> bool {
        let mut seen = vec![false; n];
        p.len() == n && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
    }

    #[test]
    fn arrow_matrix_eliminates_hub_last() {
        // hub node 0 connected to all others: eliminating it first would
        // create a dense clique
        let n = 8;
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 4.0);
            if i > 0 {
                t.push(0, i, 1.0);
                t.push(i, 0, 1.0);
            }
        }
        let order = minimum_degree(&t.to_csc());
        assert!(is_permutation(&order, n));
        // once the leaves are gone the hub ties with the last leaf
        assert!(order[n - 2..].contains(&0), "{order:?}");
    }

    #[test]
    fn handles_diagonal_and_empty() {
        assert!(minimum_degree(&CscMatrix::identity(0)).is_empty());
        let order = minimum_degree(&CscMatrix::identity(5));
        assert!(is_permutation(&order, 5));
    }
}
