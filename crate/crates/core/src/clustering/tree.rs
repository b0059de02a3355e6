//! Condensed cluster tree and excess-of-mass extraction.
//!
//! MST edges of equal weight are merged in one step, so the hierarchy can
//! have nodes with more than two children. That makes the result depend only
//! on the set of distances, not on which of several equal-weight spanning
//! trees was found, and hence not on input order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Serialize, Serializer};

use super::Edge;
use crate::model::ClusterLabel;

fn ser_lambda<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

/// One row of the condensed tree. Children below `n_points` are points,
/// the rest are clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondensedTreeNode {
    pub parent: usize,
    pub child: usize,
    #[serde(serialize_with = "ser_lambda")]
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub nodes: Vec<CondensedTreeNode>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    /// Cluster ids in creation order (root first).
    pub fn clusters(&self) -> Vec<usize> {
        let mut out = vec![self.root()];
        out.extend(self.nodes.iter().filter(|r| r.child >= self.n_points).map(|r| r.child));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("condensed tree serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub labels: Vec<ClusterLabel>,
    pub strengths: Vec<f64>,
    pub tree: CondensedTree,
    /// Selected condensed-tree cluster ids, ordered as their labels.
    pub selected: Vec<usize>,
    pub stability: BTreeMap<usize, f64>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
        ra
    }
}

struct Hierarchy {
    /// Internal nodes follow the n leaves; each has a merge distance and children.
    distance: Vec<f64>,
    children: Vec<Vec<usize>>,
    size: Vec<usize>,
    min_leaf: Vec<usize>,
}

impl Hierarchy {
    fn build(n: usize, mst: &[Edge]) -> Self {
        let mut h = Hierarchy {
            distance: vec![0.0; n],
            children: vec![Vec::new(); n],
            size: vec![1; n],
            min_leaf: (0..n).collect(),
        };
        let mut sorted = mst.to_vec();
        sorted.sort_by(|x, y| x.weight.total_cmp(&y.weight));
        let mut uf = UnionFind::new(n);
        let mut node_of: Vec<usize> = (0..n).collect();
        let mut i = 0;
        while i < sorted.len() {
            let w = sorted[i].weight;
            let mut j = i;
            while j < sorted.len() && sorted[j].weight == w {
                j += 1;
            }
            let group = &sorted[i..j];
            let pre: Vec<(usize, usize)> = group.iter().map(|e| (uf.find(e.a), uf.find(e.b))).collect();
            for (ra, rb) in &pre {
                uf.union(*ra, *rb);
            }
            let mut merged: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for (ra, rb) in pre {
                let root = uf.find(ra);
                let set = merged.entry(root).or_default();
                set.insert(ra);
                set.insert(rb);
            }
            for (root, parts) in merged {
                let mut kids: Vec<usize> = parts.iter().map(|r| node_of[*r]).collect();
                kids.sort_by_key(|k| h.min_leaf[*k]);
                let id = h.distance.len();
                h.size.push(kids.iter().map(|k| h.size[*k]).sum());
                h.min_leaf.push(kids.iter().map(|k| h.min_leaf[*k]).min().unwrap_or(usize::MAX));
                h.distance.push(w);
                h.children.push(kids);
                node_of[root] = id;
            }
            i = j;
        }
        h
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if self.children[x].is_empty() {
                out.push(x);
            } else {
                stack.extend(self.children[x].iter().copied());
            }
        }
    }
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Builds the condensed tree from a spanning tree over `n` points.
pub fn condense(n: usize, mst: &[Edge], min_cluster_size: usize) -> CondensedTree {
    let h = Hierarchy::build(n, mst);
    let mut nodes = Vec::new();
    let mut next_cluster = n + 1;
    let top = h.distance.len() - 1;
    let mut queue = std::collections::VecDeque::from([(top, n)]);
    while let Some((mut node, cluster)) = queue.pop_front() {
        loop {
            if h.children[node].is_empty() {
                // A lone point reached as the continuing child.
                nodes.push(CondensedTreeNode { parent: cluster, child: node, lambda: f64::INFINITY, child_size: 1 });
                break;
            }
            let lambda = lambda_of(h.distance[node]);
            let kids = &h.children[node];
            let big: Vec<usize> = kids.iter().copied().filter(|k| h.size[*k] >= min_cluster_size).collect();
            let fall_out = |k: usize, nodes: &mut Vec<CondensedTreeNode>| {
                let mut pts = Vec::new();
                h.leaves(k, &mut pts);
                pts.sort_unstable();
                nodes.extend(pts.into_iter().map(|p| CondensedTreeNode { parent: cluster, child: p, lambda, child_size: 1 }));
            };
            match big.len() {
                0 => {
                    for k in kids {
                        fall_out(*k, &mut nodes);
                    }
                    break;
                }
                1 => {
                    for k in kids.iter().filter(|k| **k != big[0]) {
                        fall_out(*k, &mut nodes);
                    }
                    node = big[0];
                }
                _ => {
                    for k in kids {
                        if h.size[*k] >= min_cluster_size {
                            let id = next_cluster;
                            next_cluster += 1;
                            nodes.push(CondensedTreeNode { parent: cluster, child: id, lambda, child_size: h.size[*k] });
                            queue.push_back((*k, id));
                        } else {
                            fall_out(*k, &mut nodes);
                        }
                    }
                    break;
                }
            }
        }
    }
    CondensedTree { n_points: n, nodes }
}

/// Excess of mass: sum over rows of (lambda − birth lambda of parent) × size.
pub fn stability(tree: &CondensedTree) -> BTreeMap<usize, f64> {
    let mut birth: BTreeMap<usize, f64> = BTreeMap::new();
    birth.insert(tree.root(), 0.0);
    for r in tree.nodes.iter().filter(|r| r.child >= tree.n_points) {
        birth.insert(r.child, r.lambda);
    }
    let mut stab: BTreeMap<usize, f64> = birth.keys().map(|c| (*c, 0.0)).collect();
    for r in &tree.nodes {
        let d = r.lambda - birth[&r.parent];
        let d = if d.is_nan() { 0.0 } else { d };
        *stab.get_mut(&r.parent).unwrap() += d * r.child_size as f64;
    }
    stab
}

/// Selects clusters by excess of mass and labels every point.
pub fn extract(tree: CondensedTree, allow_single_cluster: bool) -> Extraction {
    let n = tree.n_points;
    let root = tree.root();
    let mut stab = stability(&tree);
    let original_stability = stab.clone();
    let mut child_clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut point_row: Vec<usize> = vec![usize::MAX; n];
    for (i, r) in tree.nodes.iter().enumerate() {
        if r.child >= n {
            child_clusters.entry(r.parent).or_default().push(r.child);
        } else {
            point_row[r.child] = i;
        }
    }

    let mut candidates: Vec<usize> = stab.keys().copied().collect();
    candidates.sort_unstable_by(|a, b| b.cmp(a));
    if !allow_single_cluster {
        candidates.retain(|c| *c != root);
    }
    let mut is_cluster: BTreeMap<usize, bool> = candidates.iter().map(|c| (*c, true)).collect();
    for c in &candidates {
        let kids = child_clusters.get(c).cloned().unwrap_or_default();
        let subtree: f64 = kids.iter().map(|k| stab[k]).sum();
        if subtree > stab[c] {
            is_cluster.insert(*c, false);
            stab.insert(*c, subtree);
        } else {
            let mut stack = kids;
            while let Some(k) = stack.pop() {
                is_cluster.insert(k, false);
                stack.extend(child_clusters.get(&k).into_iter().flatten().copied());
            }
        }
    }
    let selected: Vec<usize> = is_cluster.iter().filter(|(_, v)| **v).map(|(c, _)| *c).collect();
    let label_of: BTreeMap<usize, u32> = selected.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();

    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    for r in tree.nodes.iter().filter(|r| r.child >= n) {
        parent_of.insert(r.child, r.parent);
    }
    // Largest lambda among each cluster's direct rows.
    let mut death: BTreeMap<usize, f64> = BTreeMap::new();
    for r in &tree.nodes {
        let e = death.entry(r.parent).or_insert(0.0);
        if r.lambda > *e {
            *e = r.lambda;
        }
    }

    let mut labels = vec![ClusterLabel::Noise; n];
    let mut strengths = vec![0.0; n];
    for p in 0..n {
        let row = &tree.nodes[point_row[p]];
        let mut c = row.parent;
        while c != root && !label_of.contains_key(&c) {
            c = parent_of[&c];
        }
        let member = if c != root {
            true
        } else {
            selected == [root] && row.lambda >= death.get(&root).copied().unwrap_or(0.0)
        };
        if !member {
            continue;
        }
        labels[p] = ClusterLabel::Cluster(label_of[&c]);
        let max_lambda = death.get(&c).copied().unwrap_or(0.0);
        strengths[p] = if max_lambda == 0.0 || row.lambda.is_infinite() {
            1.0
        } else {
            row.lambda.min(max_lambda) / max_lambda
        };
    }
    Extraction { labels, strengths, tree, selected, stability: original_stability }
}
