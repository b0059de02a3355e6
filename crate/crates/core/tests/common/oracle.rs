//! Reference data and brute-force evaluators shared by integration tests.

use std::path::PathBuf;

use concept_induction::clustering::{adjusted_rand_index, hdbscan, HdbscanParams};
use concept_induction::model::ClusterLabel;
use serde::Deserialize;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Deserialize)]
pub struct OracleCase {
    pub name: String,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
    /// Other partitions the reference returns when the same points arrive in
    /// a different order (equal-weight edges are merged in input order there).
    #[serde(default)]
    pub alternatives: Vec<Vec<i64>>,
}

impl OracleCase {
    /// ARI against the original-order reference labeling, and the best ARI
    /// over every partition the reference produced for this dataset.
    pub fn agreement(&self, ours: &[i64]) -> (f64, f64) {
        let strict = adjusted_rand_index(ours, &self.labels);
        let best = self.alternatives.iter().map(|a| adjusted_rand_index(ours, a)).fold(strict, f64::max);
        (strict, best)
    }
}

#[derive(Debug, Deserialize)]
pub struct OracleFile {
    pub oracle: String,
    pub separated: Vec<OracleCase>,
    pub random: Vec<OracleCase>,
    pub uniform_small: OracleCase,
}

pub fn load_oracle() -> OracleFile {
    let text = std::fs::read_to_string(fixture_path("hdbscan_oracle.json")).expect("oracle fixture");
    serde_json::from_str(&text).expect("oracle fixture parses")
}

/// Runs the in-repo clustering on an oracle case; noise becomes -1.
pub fn cluster_case(case: &OracleCase) -> Vec<i64> {
    let params = HdbscanParams { min_samples: Some(case.min_samples), ..HdbscanParams::new(case.min_cluster_size) };
    hdbscan(&case.points, &params)
        .expect("clustering succeeds")
        .labels
        .iter()
        .map(|l| match l {
            ClusterLabel::Cluster(c) => *c as i64,
            ClusterLabel::Noise => -1,
        })
        .collect()
}

/// Minimum spanning-tree weight by enumerating every labelled tree on n
/// vertices through its Prüfer sequence.
pub fn brute_force_mst_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return w[0][1];
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    let mut degree = vec![0usize; n];
    loop {
        degree.iter_mut().for_each(|d| *d = 1);
        for &s in &seq {
            degree[s] += 1;
        }
        let mut total = 0.0;
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            total += w[leaf][s];
            degree[leaf] = 0;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        total += w[rest[0]][rest[1]];
        if total < best {
            best = total;
        }
        // Next sequence in base n.
        let mut i = 0;
        loop {
            if i == len {
                return best;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}
