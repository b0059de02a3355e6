//! Density-based hierarchical clustering (HDBSCAN) over embedding vectors.

mod distance;
mod mst;
mod tree;

pub use distance::{core_distances, euclidean, mutual_reachability, normalize, DistanceMatrix};
pub use mst::{minimum_spanning_tree, total_weight, Edge};
pub use tree::{condense, extract, stability, CondensedTree, CondensedTreeNode, Extraction};

use std::collections::HashMap;

use thiserror::Error;

use crate::model::ClusterLabel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("zero-length vector for item(s) {}", .0.join(", "))]
    ZeroVector(Vec<String>),
    #[error("need more than {k} points for min_samples {k}, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("min_cluster_size {min_cluster_size} exceeds point count {n}")]
    BelowMinClusterSize { n: usize, min_cluster_size: usize },
    #[error("min_cluster_size must be at least 2, got {0}")]
    MinClusterSize(usize),
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    TooFewDimensions(usize),
}

/// Optional projection applied before distances are computed. Off unless set.
pub type Reduction = fn(&[Vec<f64>]) -> Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbour rank for core distances, self excluded. Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub allow_single_cluster: bool,
    /// Scale vectors to unit length first.
    pub normalize: bool,
    pub reduction: Option<Reduction>,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanParams { min_cluster_size, min_samples: None, allow_single_cluster: true, normalize: false, reduction: None }
    }
}

/// `max(2, ceil(0.02 n))`.
pub fn default_min_cluster_size(n: usize) -> usize {
    ((n as f64 * 0.02).ceil() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<ClusterLabel>,
    pub strengths: Vec<f64>,
    pub tree: CondensedTree,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().filter_map(|l| l.id()).max().map_or(0, |m| m as usize + 1)
    }
}

pub fn hdbscan(vectors: &[Vec<f64>], params: &HdbscanParams) -> Result<Clustering, ClusterError> {
    let n = vectors.len();
    let mcs = params.min_cluster_size;
    if mcs < 2 {
        return Err(ClusterError::MinClusterSize(mcs));
    }
    if n < mcs {
        return Err(ClusterError::BelowMinClusterSize { n, min_cluster_size: mcs });
    }
    let dim = vectors[0].len();
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(ClusterError::Dimension { index, expected: dim, got: v.len() });
    }
    let mut data = vectors.to_vec();
    if params.normalize {
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        data = normalize(&data, &ids)?;
    }
    if let Some(reduce) = params.reduction {
        data = reduce(&data);
    }
    // When n equals min_cluster_size the default neighbour rank would exceed n − 1.
    let k = params.min_samples.unwrap_or(mcs).min(n - 1).max(1);
    let dist = DistanceMatrix::euclidean(&data);
    let core = core_distances(&dist, k)?;
    let mst = minimum_spanning_tree(&mutual_reachability(&dist, &core));
    let x = extract(condense(n, &mst, mcs), params.allow_single_cluster);
    Ok(Clustering { labels: x.labels, strengths: x.strengths, tree: x.tree })
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings; noise counts as one more label.
pub fn adjusted_rand_index<A: Eq + std::hash::Hash, B: Eq + std::hash::Hash>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as u64;
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|c| comb2(*c)).sum();
    let sum_a: f64 = rows.values().map(|c| comb2(*c)).sum();
    let sum_b: f64 = cols.values().map(|c| comb2(*c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(cx: f64, cy: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| vec![cx + rng.random_range(-0.5..0.5), cy + rng.random_range(-0.5..0.5)]).collect()
    }

    #[test]
    fn two_blobs_two_clusters_no_noise() {
        let mut pts = blob(0.0, 0.0, 20, 1);
        pts.extend(blob(20.0, 20.0, 20, 2));
        let c = hdbscan(&pts, &HdbscanParams::new(5)).unwrap();
        assert_eq!(c.n_clusters(), 2);
        assert!(c.labels.iter().all(|l| !l.is_noise()));
        assert!(c.labels[..20].iter().all(|l| *l == c.labels[0]));
    }

    #[test]
    fn permutation_gives_same_partition() {
        let mut pts = blob(0.0, 0.0, 15, 3);
        pts.extend(blob(6.0, 0.0, 15, 4));
        pts.extend(blob(0.0, 9.0, 15, 5));
        let params = HdbscanParams::new(4);
        let base = hdbscan(&pts, &params).unwrap().labels;
        let perm: Vec<usize> = (0..pts.len()).rev().collect();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|i| pts[*i].clone()).collect();
        let got = hdbscan(&shuffled, &params).unwrap().labels;
        let restored: Vec<ClusterLabel> = {
            let mut v = vec![ClusterLabel::Noise; pts.len()];
            for (pos, i) in perm.iter().enumerate() {
                v[*i] = got[pos];
            }
            v
        };
        assert_eq!(adjusted_rand_index(&base, &restored), 1.0);
    }

    #[test]
    fn preconditions() {
        let pts = vec![vec![0.0, 0.0]; 3];
        assert!(matches!(hdbscan(&pts, &HdbscanParams::new(4)), Err(ClusterError::BelowMinClusterSize { .. })));
        assert!(matches!(hdbscan(&pts, &HdbscanParams::new(1)), Err(ClusterError::MinClusterSize(1))));
    }

    #[test]
    fn default_min_cluster_size_rule() {
        assert_eq!(default_min_cluster_size(10), 2);
        assert_eq!(default_min_cluster_size(150), 3);
        assert_eq!(default_min_cluster_size(1000), 20);
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        // sklearn.metrics.adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.5714285714285715).abs() < 1e-12);
    }
}
