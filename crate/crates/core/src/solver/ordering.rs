//! Deterministic fill-reducing orderings.

use std::collections::BTreeSet;

/// Minimum-degree elimination order on a node-weighted graph.
///
/// The degree of a node is the summed weight of its current neighbours in the
/// elimination graph; ties go to the smaller index, so the result depends only on
/// the graph.
pub fn minimum_degree(adj: &[Vec<usize>], weights: &[usize]) -> Vec<usize> {
    let n = adj.len();
    assert_eq!(weights.len(), n);
    let mut nbrs: Vec<BTreeSet<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, a)| a.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree = |s: &BTreeSet<usize>| s.iter().map(|&j| weights[j]).sum::<usize>();
    let mut deg: Vec<usize> = nbrs.iter().map(degree).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (deg[i], i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&(d, p)) = queue.iter().next() {
        queue.remove(&(d, p));
        order.push(p);
        let clique: Vec<usize> = std::mem::take(&mut nbrs[p]).into_iter().collect();
        for &u in &clique {
            nbrs[u].remove(&p);
            for &w in &clique {
                if w != u {
                    nbrs[u].insert(w);
                }
            }
        }
        for &u in &clique {
            queue.remove(&(deg[u], u));
            deg[u] = degree(&nbrs[u]);
            queue.insert((deg[u], u));
        }
    }
    order
}

/// Orders scalar unknowns by eliminating groups with minimum degree on the group graph.
///
/// `groups` partitions (a subset of) `0..n`; unknowns not covered by any group are
/// appended as singleton groups. Within a group the listed order is kept.
pub fn group_order(n: usize, adj: &[Vec<usize>], groups: &[Vec<usize>]) -> Vec<usize> {
    let mut owner = vec![usize::MAX; n];
    let mut all: Vec<Vec<usize>> = groups.to_vec();
    for (g, grp) in groups.iter().enumerate() {
        for &i in grp {
            owner[i] = g;
        }
    }
    for i in 0..n {
        if owner[i] == usize::MAX {
            owner[i] = all.len();
            all.push(vec![i]);
        }
    }
    let ng = all.len();
    let mut gadj: Vec<Vec<usize>> = vec![Vec::new(); ng];
    for i in 0..n {
        for &j in &adj[i] {
            let (a, b) = (owner[i], owner[j]);
            if a != b {
                gadj[a].push(b);
            }
        }
    }
    for a in gadj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let weights: Vec<usize> = all.iter().map(|g| g.len()).collect();
    let gorder = minimum_degree(&gadj, &weights);
    gorder.into_iter().flat_map(|g| all[g].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_graph_eliminates_leaves_first() {
        // centre 0 with leaves 1..5: eliminating the centre first would create a clique
        let adj: Vec<Vec<usize>> = (0..6).map(|i| if i == 0 { (1..6).collect() } else { vec![0] }).collect();
        let order = minimum_degree(&adj, &[1; 6]);
        let centre = order.iter().position(|&v| v == 0).unwrap();
        assert!(centre >= 4);
    }

    #[test]
    fn order_is_a_permutation() {
        let n = 30;
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut v = vec![];
                if i > 0 {
                    v.push(i - 1)
                }
                if i + 1 < n {
                    v.push(i + 1)
                }
                if i + 7 < n {
                    v.push(i + 7)
                }
                if i >= 7 {
                    v.push(i - 7)
                }
                v
            })
            .collect();
        let mut o = minimum_degree(&adj, &vec![1; n]);
        o.sort_unstable();
        assert_eq!(o, (0..n).collect::<Vec<_>>());
        let groups: Vec<Vec<usize>> = (0..n / 3).map(|g| vec![3 * g, 3 * g + 1, 3 * g + 2]).collect();
        let mut o = group_order(n, &adj, &groups);
        o.sort_unstable();
        assert_eq!(o, (0..n).collect::<Vec<_>>());
    }
}
