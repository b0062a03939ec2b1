//! Recursive-model structure: DAGs over the ordered nodes `1..=n`, perfectness,
//! maximal cliques and junction trees.
//!
//! Nodes are numbered from 1 and every parent precedes its child, so the node
//! order is always a topological order. For a perfect DAG the parent set of each
//! node is a clique, which makes the reversed node order a perfect elimination
//! order of the undirected skeleton.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    n: usize,
    /// `parents[k - 1]` is `R(k)`, sorted ascending.
    parents: Vec<Vec<usize>>,
}

/// Validates a parent map (`k -> R(k)`, 1-based). Nodes missing from the map have no parents.
///
/// Since every parent must precede its child, node `n` can never be a parent and
/// is terminal automatically.
pub fn validate_dag(n: usize, parents: &BTreeMap<usize, Vec<usize>>) -> Result<Dag> {
    if n == 0 {
        return Err(Error::BadSize("a DAG needs at least one node".into()));
    }
    if let Some(r1) = parents.get(&1) {
        if !r1.is_empty() {
            return Err(Error::AncestralViolation(r1.clone()));
        }
    }
    let mut lists = vec![Vec::new(); n];
    for (&child, list) in parents {
        if child == 0 || child > n {
            return Err(Error::NodeOutOfRange { node: child, n });
        }
        let set: BTreeSet<usize> = list.iter().copied().collect();
        for &p in &set {
            if p == 0 || p > n {
                return Err(Error::NodeOutOfRange { node: p, n });
            }
            if p >= child {
                return Err(Error::ParentNotEarlier { child, parent: p });
            }
        }
        lists[child - 1] = set.into_iter().collect();
    }
    Ok(Dag { n, parents: lists })
}

/// The linear DAG `1 → 2 → ⋯ → n`.
pub fn chain_dag(n: usize) -> Result<Dag> {
    if n < 2 {
        return Err(Error::BadSize(format!("a chain needs n >= 2, got {n}")));
    }
    let parents = (0..n).map(|k| if k == 0 { vec![] } else { vec![k] }).collect();
    Ok(Dag { n, parents })
}

impl Dag {
    /// Builds from parent lists for nodes `1..=lists.len()`.
    pub fn from_parent_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let map = lists.into_iter().enumerate().map(|(k, l)| (k + 1, l)).collect();
        validate_dag(n, &map)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `R(k)` for 1-based node `k`.
    pub fn parents(&self, k: usize) -> &[usize] {
        &self.parents[k - 1]
    }

    pub fn parent_map(&self) -> BTreeMap<usize, Vec<usize>> {
        (1..=self.n).filter(|&k| !self.parents(k).is_empty()).map(|k| (k, self.parents(k).to_vec())).collect()
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.parents(j).binary_search(&i).is_ok() || self.parents(i).binary_search(&j).is_ok()
    }

    /// A pair of unlinked co-parents, if any.
    pub fn imperfection_witness(&self) -> Option<(usize, usize, usize)> {
        for k in 1..=self.n {
            let r = self.parents(k);
            for (a, &i) in r.iter().enumerate() {
                for &j in &r[a + 1..] {
                    if !self.adjacent(i, j) {
                        return Some((k, i, j));
                    }
                }
            }
        }
        None
    }

    pub fn is_perfect(&self) -> bool {
        self.imperfection_witness().is_none()
    }

    pub fn check_perfect(&self) -> Result<()> {
        match self.imperfection_witness() {
            Some((child, a, b)) => Err(Error::NotPerfect { child, a, b }),
            None => Ok(()),
        }
    }

    /// True for the chain `1 → ⋯ → n` (every non-initial node has the single parent `k - 1`).
    pub fn is_linear(&self) -> bool {
        self.n >= 2 && (2..=self.n).all(|k| self.parents(k) == [k - 1])
    }

    /// Undirected skeleton as 1-based adjacency sets (index 0 unused).
    pub fn skeleton(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n + 1];
        for k in 1..=self.n {
            for &p in self.parents(k) {
                adj[k].insert(p);
                adj[p].insert(k);
            }
        }
        adj
    }

    /// Nodes in the skeleton component containing node 1, sorted.
    pub fn component_of_first(&self) -> Vec<usize> {
        let adj = self.skeleton();
        let mut seen = vec![false; self.n + 1];
        let mut queue = VecDeque::from([1]);
        seen[1] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        (1..=self.n).filter(|&v| seen[v]).collect()
    }

    /// Removes nodes that cannot influence `p̂(x_n | x_1)`: nodes outside the
    /// skeleton component of node 1, then (repeatedly) terminal nodes other than `n`.
    /// Returns the relabeled DAG and, for each new node, its original label.
    pub fn prune(&self) -> Result<(Dag, Vec<usize>)> {
        let comp = self.component_of_first();
        if !comp.contains(&self.n) {
            return Err(Error::Disconnected { n: self.n });
        }
        let mut keep: BTreeSet<usize> = comp.into_iter().collect();
        loop {
            let barren: Vec<usize> = keep
                .iter()
                .copied()
                .filter(|&v| v != self.n && v != 1 && !keep.iter().any(|&c| self.parents(c).contains(&v)))
                .collect();
            if barren.is_empty() {
                break;
            }
            for v in barren {
                keep.remove(&v);
            }
        }
        let labels: Vec<usize> = keep.into_iter().collect();
        let new_index: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(i, &v)| (v, i + 1)).collect();
        let parents = labels
            .iter()
            .map(|&v| self.parents(v).iter().filter_map(|p| new_index.get(p).copied()).collect())
            .collect();
        Ok((Dag { n: labels.len(), parents }, labels))
    }
}

/// Maximal cliques of the skeleton of a perfect DAG, each sorted, listed in order
/// of their largest node.
///
/// Every clique `C` satisfies `C ⊆ {max C} ∪ R(max C)`, so the maximal cliques
/// are exactly the maximal families `{k} ∪ R(k)`.
pub fn maximal_cliques(g: &Dag) -> Result<Vec<Vec<usize>>> {
    g.check_perfect()?;
    let families: Vec<Vec<usize>> = (1..=g.n)
        .map(|k| {
            let mut f = g.parents(k).to_vec();
            f.push(k);
            f
        })
        .collect();
    let maximal = families
        .iter()
        .enumerate()
        .filter(|(k, f)| {
            !families.iter().enumerate().any(|(j, other)| {
                j != *k && other.len() > f.len() && f.iter().all(|v| other.binary_search(v).is_ok())
            })
        })
        .map(|(_, f)| f.clone())
        .collect();
    Ok(maximal)
}

/// A tree over maximal cliques with the running intersection property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionTree {
    pub cliques: Vec<Vec<usize>>,
    pub tree_edges: Vec<(usize, usize)>,
}

impl JunctionTree {
    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cliques.len()];
        for &(a, b) in &self.tree_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Clique indices along the unique tree path from `from` to `to`, inclusive.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        self.shortest_path(&[from], |c| c == to)
    }

    fn shortest_path(&self, sources: &[usize], is_target: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let adj = self.neighbors();
        let mut prev = vec![usize::MAX; self.cliques.len()];
        let mut seen = vec![false; self.cliques.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            seen[s] = true;
            queue.push_back(s);
        }
        while let Some(c) = queue.pop_front() {
            if is_target(c) {
                let mut path = vec![c];
                let mut cur = c;
                while prev[cur] != usize::MAX {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &d in &adj[c] {
                if !seen[d] {
                    seen[d] = true;
                    prev[d] = c;
                    queue.push_back(d);
                }
            }
        }
        None
    }

    /// A tree: `k - 1` edges connecting all `k` cliques.
    pub fn is_tree(&self) -> bool {
        let k = self.cliques.len();
        if k == 0 || self.tree_edges.len() != k - 1 {
            return false;
        }
        (0..k).all(|c| self.path(0, c).is_some())
    }

    /// Checks, for every node and every pair of cliques containing it, that each
    /// clique on the connecting tree path also contains it.
    pub fn running_intersection_holds(&self) -> bool {
        let k = self.cliques.len();
        for a in 0..k {
            for b in a + 1..k {
                let Some(path) = self.path(a, b) else { return false };
                for v in self.cliques[a].iter().filter(|v| self.cliques[b].contains(v)) {
                    if !path.iter().all(|&c| self.cliques[c].contains(v)) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Junction tree over the maximal cliques in the skeleton component of node 1,
/// built as a maximum-weight spanning tree on clique-intersection sizes
/// (ties broken by the smallest clique index pair).
pub fn junction_tree(g: &Dag) -> Result<JunctionTree> {
    let comp: BTreeSet<usize> = g.component_of_first().into_iter().collect();
    if !comp.contains(&g.n) {
        return Err(Error::Disconnected { n: g.n });
    }
    let cliques: Vec<Vec<usize>> =
        maximal_cliques(g)?.into_iter().filter(|c| comp.contains(&c[0])).collect();
    let mut candidates = Vec::new();
    for a in 0..cliques.len() {
        for b in a + 1..cliques.len() {
            let w = cliques[a].iter().filter(|v| cliques[b].binary_search(v).is_ok()).count();
            if w > 0 {
                candidates.push((w, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut root: Vec<usize> = (0..cliques.len()).collect();
    fn find(root: &mut [usize], mut x: usize) -> usize {
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    let mut tree_edges = Vec::new();
    for (_, a, b) in candidates {
        let (ra, rb) = (find(&mut root, a), find(&mut root, b));
        if ra != rb {
            root[ra] = rb;
            tree_edges.push((a, b));
        }
    }
    Ok(JunctionTree { cliques, tree_edges })
}

/// Cliques `C_1, …, C_K` on the tree path between the nearest pair of cliques
/// containing node 1 and node `n`. No interior clique contains 1 or `n`; when one
/// clique contains both the path is that single clique.
pub fn clique_path(jt: &JunctionTree, g: &Dag) -> Result<Vec<Vec<usize>>> {
    let n = g.n();
    let sources: Vec<usize> = (0..jt.cliques.len()).filter(|&c| jt.cliques[c].contains(&1)).collect();
    let path = jt
        .shortest_path(&sources, |c| jt.cliques[c].contains(&n))
        .ok_or(Error::Disconnected { n })?;
    Ok(path.into_iter().map(|c| jt.cliques[c].clone()).collect())
}

/// Random connected perfect DAG: node `k ≥ 2` picks a latest parent `j < k` and
/// a random subset of `R(j)`, which is a clique, so `R(k)` is a clique too.
pub fn random_perfect_dag(n: usize, seed: u64) -> Result<Dag> {
    if n < 2 {
        return Err(Error::BadSize(format!("need n >= 2, got {n}")));
    }
    let mut rng = rng::seeded(seed);
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 2..=n {
        let j = rng.random_range(1..k);
        let mut set: Vec<usize> = parents[j - 1].iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        set.push(j);
        set.sort_unstable();
        parents[k - 1] = set;
    }
    Ok(Dag { n, parents })
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    n: usize,
    #[serde(default)]
    parents: BTreeMap<String, Vec<usize>>,
}

impl Serialize for Dag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let parents = self.parent_map().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        DagRepr { n: self.n, parents }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = DagRepr::deserialize(d)?;
        let mut map = BTreeMap::new();
        for (k, v) in repr.parents {
            let node: usize = k.trim().parse().map_err(|_| serde::de::Error::custom(format!("bad node key {k:?}")))?;
            map.insert(node, v);
        }
        validate_dag(repr.n, &map).map_err(serde::de::Error::custom)
    }
}
