use serde::{Deserialize, Serialize};

use super::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    /// Orders by weight, then smaller endpoint, then larger endpoint.
    pub fn key(&self) -> (f64, usize, usize) {
        (self.weight, self.a.min(self.b), self.a.max(self.b))
    }
}

fn key_lt(x: (f64, usize, usize), y: (f64, usize, usize)) -> bool {
    match x.0.total_cmp(&y.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (x.1, x.2) < (y.1, y.2),
    }
}

/// Prim's algorithm over the dense matrix. Edge keys are totally ordered by
/// `Edge::key`, so the tree is unique and equals the Kruskal tree under the
/// same order. Edges come back sorted by key.
pub fn minimum_spanning_tree(dist: &DistanceMatrix) -> Vec<Edge> {
    let n = dist.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Edge>> = vec![None; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let cand = Edge { a: current, b: j, weight: dist.get(current, j) };
            if best[j].is_none_or(|e| key_lt(cand.key(), e.key())) {
                best[j] = Some(cand);
            }
        }
        let next = (0..n)
            .filter(|j| !in_tree[*j])
            .min_by(|x, y| {
                let (kx, ky) = (best[*x].unwrap().key(), best[*y].unwrap().key());
                if key_lt(kx, ky) {
                    std::cmp::Ordering::Less
                } else if key_lt(ky, kx) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .expect("vertex left outside the tree");
        let e = best[next].unwrap();
        edges.push(Edge { a: e.a.min(e.b), b: e.a.max(e.b), weight: e.weight });
        in_tree[next] = true;
        current = next;
    }
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then((x.a, x.b).cmp(&(y.a, y.b))));
    edges
}

pub fn total_weight(edges: &[Edge]) -> f64 {
    edges.iter().map(|e| e.weight).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_points() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0].iter().map(|x| vec![*x]).collect();
        let mst = minimum_spanning_tree(&DistanceMatrix::euclidean(&pts));
        let pairs: Vec<(usize, usize)> = mst.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn two_points() {
        let mst = minimum_spanning_tree(&DistanceMatrix::euclidean(&[vec![0.0], vec![2.0]]));
        assert_eq!(mst, vec![Edge { a: 0, b: 1, weight: 2.0 }]);
    }

    #[test]
    fn square_ties_break_by_ids() {
        // Unit square: four sides weigh 1, diagonals sqrt(2).
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let mst = minimum_spanning_tree(&DistanceMatrix::euclidean(&pts));
        let pairs: Vec<(usize, usize)> = mst.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 3), (1, 2)]);
        assert_eq!(total_weight(&mst), 3.0);
    }
}
