//! Clique tree structure: moralization, min-fill triangulation and a
//! maximum-weight spanning tree over sepset sizes.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;

use crate::indexer::VarId;

/// Undirected moral graph: each variable joined to its parents, and parents
/// of a common child joined to each other. Cycles in the directed graph
/// simply become loops.
pub fn moralize(parents: &[Vec<VarId>]) -> Vec<BTreeSet<usize>> {
    let n = parents.len();
    let mut adj = vec![BTreeSet::new(); n];
    let mut link = |a: usize, b: usize| {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    };
    for (child, pars) in parents.iter().enumerate() {
        for (k, p) in pars.iter().enumerate() {
            link(child, p.0);
            for q in &pars[k + 1..] {
                link(p.0, q.0);
            }
        }
    }
    adj
}

/// Maximal cliques of the triangulation produced by min-fill elimination,
/// ties broken by the lowest variable id, listed in elimination order.
pub fn triangulated_cliques(mut adj: Vec<BTreeSet<usize>>) -> Vec<BTreeSet<usize>> {
    let n = adj.len();
    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut cliques: Vec<BTreeSet<usize>> = Vec::new();
    while !remaining.is_empty() {
        let v = *remaining
            .iter()
            .min_by_key(|&&v| (fill_in(&adj, v), v))
            .expect("nonempty");
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut clique: BTreeSet<usize> = nbrs.iter().copied().collect();
        clique.insert(v);
        if !cliques.iter().any(|c| clique.is_subset(c)) {
            cliques.retain(|c| !c.is_subset(&clique));
            cliques.push(clique);
        }
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        adj[v].clear();
        remaining.remove(&v);
    }
    cliques
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        for &b in &nbrs[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}

/// Kruskal maximum spanning tree over all clique pairs weighted by the size
/// of their intersection; ties go to the lexicographically smaller pair.
/// Zero-weight pairs are included so the result is always a single tree.
pub fn spanning_tree(cliques: &[BTreeSet<usize>]) -> Vec<(usize, usize)> {
    let m = cliques.len();
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            pairs.push((cliques[i].intersection(&cliques[j]).count(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut uf = UnionFind::<usize>::new(m);
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    for (_, i, j) in pairs {
        if uf.union(i, j) {
            edges.push((i, j));
        }
    }
    edges
}

/// True if, for every variable, the cliques containing it form a connected subtree.
pub fn has_running_intersection(cliques: &[BTreeSet<usize>], edges: &[(usize, usize)], n_vars: usize) -> bool {
    (0..n_vars).all(|v| {
        let holding: Vec<usize> = (0..cliques.len()).filter(|&i| cliques[i].contains(&v)).collect();
        if holding.len() <= 1 {
            return true;
        }
        let mut uf = UnionFind::<usize>::new(cliques.len());
        let mut merges = 0;
        for &(a, b) in edges {
            if cliques[a].contains(&v) && cliques[b].contains(&v) && uf.union(a, b) {
                merges += 1;
            }
        }
        merges == holding.len() - 1
    })
}
