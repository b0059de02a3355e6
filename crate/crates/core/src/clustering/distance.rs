use super::ClusterError;

/// Dense symmetric distance matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix { n, data: vec![0.0; n * n] }
    }

    /// Builds a matrix from a closure evaluated once per unordered pair.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DistanceMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                m.data[i * n + j] = d;
                m.data[j * n + i] = d;
            }
        }
        m
    }

    pub fn euclidean(vectors: &[Vec<f64>]) -> Self {
        DistanceMatrix::from_fn(vectors.len(), |i, j| euclidean(&vectors[i], &vectors[j]))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scales every vector to unit Euclidean norm.
pub fn normalize(vectors: &[Vec<f64>], ids: &[String]) -> Result<Vec<Vec<f64>>, ClusterError> {
    let mut zero = Vec::new();
    let out = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                zero.push(ids.get(i).cloned().unwrap_or_else(|| i.to_string()));
                return v.clone();
            }
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    if zero.is_empty() {
        Ok(out)
    } else {
        Err(ClusterError::ZeroVector(zero))
    }
}

/// Distance from each point to its k-th nearest other point.
pub fn core_distances(dist: &DistanceMatrix, k: usize) -> Result<Vec<f64>, ClusterError> {
    let n = dist.len();
    if k == 0 || n <= k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = dist.row(i).iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| *d).collect();
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(dist: &DistanceMatrix, core: &[f64]) -> DistanceMatrix {
    DistanceMatrix::from_fn(dist.len(), |i, j| dist.get(i, j).max(core[i]).max(core[j]))
}
