//! Class-conditional mutual-kNN graphs with cosine edge weights, plus the
//! PageRank centrality and hubness statistics read off them.
//!
//! Hubness is counted on the directed kNN lists (how often a node appears in
//! other nodes' neighbor lists, before mutualization); PageRank runs on the
//! symmetric mutual graph with negative weights floored at zero for the
//! transition probabilities.

use crate::linalg::{dot, normalized_rows, Mat};

/// Directed kNN lists plus the mutualized edge set over one class's rows.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    n: usize,
    k: usize,
    /// Per-node top-k neighbors, sorted by similarity descending then index.
    directed: Vec<Vec<(usize, f64)>>,
    /// Symmetric adjacency: (u, v) present iff each lists the other.
    mutual: Vec<Vec<(usize, f64)>>,
}

impl SimilarityGraph {
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// The effective neighbor count, `min(k, n-1)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn directed_neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.directed[u]
    }

    pub fn mutual_neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.mutual[u]
    }

    /// All mutual edges with `u < v`, for debugging dumps.
    pub fn mutual_edge_list(&self) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        for u in 0..self.n {
            for &(v, w) in &self.mutual[u] {
                if u < v {
                    edges.push((u, v, w));
                }
            }
        }
        edges
    }
}

/// Builds the mutual-kNN graph over the given rows.
///
/// Cosine similarity on the raw rows; zero-norm rows are similar to nothing
/// (similarity 0). Neighbor ties break by ascending row index. Fewer than
/// two rows yields a degenerate graph with no edges.
pub fn build_mutual_knn(rows: &Mat, k: usize) -> SimilarityGraph {
    let n = rows.rows();
    if n < 2 {
        return SimilarityGraph { n, k: 0, directed: vec![Vec::new(); n], mutual: vec![Vec::new(); n] };
    }
    let k_eff = k.min(n - 1).max(1);
    let unit = normalized_rows(rows);

    let mut directed: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let ui = unit.row(i);
        let mut sims: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, dot(ui, unit.row(j))))
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sims.truncate(k_eff);
        directed.push(sims);
    }

    let mut mutual: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for u in 0..n {
        for &(v, w) in &directed[u] {
            if u < v && directed[v].iter().any(|&(back, _)| back == u) {
                mutual[u].push((v, w));
                mutual[v].push((u, w));
            }
        }
    }
    for adj in &mut mutual {
        adj.sort_by_key(|&(v, _)| v);
    }

    SimilarityGraph { n, k: k_eff, directed, mutual }
}

/// PageRank scores plus a convergence flag.
#[derive(Debug, Clone)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub converged: bool,
}

/// Power iteration on the mutual graph with uniform teleport.
///
/// Transition weights are the mutual edge similarities floored at zero;
/// nodes without positive out-strength are dangling and redistribute their
/// mass uniformly. Stops when the L1 change drops below `tol`; returns the
/// last iterate with `converged = false` if `max_iter` is exhausted.
pub fn pagerank(g: &SimilarityGraph, damping: f64, tol: f64, max_iter: usize) -> PageRank {
    let n = g.node_count();
    if n == 0 {
        return PageRank { scores: Vec::new(), converged: true };
    }
    let out_strength: Vec<f64> = (0..n)
        .map(|u| g.mutual[u].iter().map(|&(_, w)| w.max(0.0)).sum())
        .collect();

    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut converged = false;

    for _ in 0..max_iter {
        let mut next = vec![(1.0 - damping) * uniform; n];
        let mut dangling_mass = 0.0;
        for u in 0..n {
            if out_strength[u] <= 0.0 {
                dangling_mass += rank[u];
                continue;
            }
            let share = damping * rank[u] / out_strength[u];
            for &(v, w) in &g.mutual[u] {
                let w = w.max(0.0);
                if w > 0.0 {
                    next[v] += share * w;
                }
            }
        }
        if dangling_mass > 0.0 {
            let spread = damping * dangling_mass * uniform;
            for v in next.iter_mut() {
                *v += spread;
            }
        }
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    PageRank { scores: rank, converged }
}

/// Hubness counts on the directed lists: `H(i) = |{ j : i in knn(j) }|`.
pub fn hubness(g: &SimilarityGraph) -> Vec<usize> {
    let mut counts = vec![0usize; g.node_count()];
    for u in 0..g.node_count() {
        for &(v, _) in &g.directed[u] {
            counts[v] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn identical_vectors_tie_break_by_index() {
        let rows = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let g = build_mutual_knn(&rows, 1);
        assert_eq!(g.directed_neighbors(0)[0].0, 1);
        assert_eq!(g.directed_neighbors(1)[0].0, 0);
        assert_eq!(g.directed_neighbors(2)[0].0, 0);
        // 0 and 1 reciprocate.
        assert_eq!(g.mutual_edge_list(), vec![(0, 1, 1.0)]);
        assert_eq!(hubness(&g), vec![2, 1, 0]);
    }

    #[test]
    fn two_tight_pairs_give_two_mutual_edges() {
        // Hand geometry: {0,1} nearly parallel, {2,3} nearly parallel,
        // the pairs close to orthogonal to each other.
        let rows = Mat::from_rows(&[
            vec![1.0, 0.00],
            vec![1.0, 0.05],
            vec![0.0, 1.00],
            vec![0.05, 1.0],
        ]);
        let g = build_mutual_knn(&rows, 1);
        let edges = g.mutual_edge_list();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].0, 0);
        assert_eq!(edges[0].1, 1);
        assert_eq!(edges[1].0, 2);
        assert_eq!(edges[1].1, 3);
    }

    #[test]
    fn saturated_k_yields_complete_mutual_graph() {
        let rows = Mat::from_rows(&[
            vec![1.0, 0.2],
            vec![0.4, 1.0],
            vec![-0.3, 0.9],
            vec![0.8, -0.1],
        ]);
        let g = build_mutual_knn(&rows, 10);
        assert_eq!(g.k(), 3);
        for u in 0..4 {
            assert_eq!(g.mutual_neighbors(u).len(), 3);
        }
    }

    #[test]
    fn mutual_graph_is_subgraph_of_directed() {
        let rows = random_rows(12, 4, 99);
        let g = build_mutual_knn(&rows, 3);
        for u in 0..g.node_count() {
            for &(v, _) in g.mutual_neighbors(u) {
                let reciprocated = g.directed_neighbors(u).iter().any(|&(x, _)| x == v)
                    || g.directed_neighbors(v).iter().any(|&(x, _)| x == u);
                assert!(reciprocated);
            }
        }
    }

    #[test]
    fn hubness_total_equals_directed_edge_count() {
        let rows = random_rows(15, 5, 3);
        let g = build_mutual_knn(&rows, 4);
        let total: usize = hubness(&g).iter().sum();
        let edges: usize = (0..g.node_count()).map(|u| g.directed_neighbors(u).len()).sum();
        assert_eq!(total, edges);
    }

    #[test]
    fn hubness_collinear_points_prefer_the_middle() {
        // p0=(1,0), p1=(1,1), p2=(1,2) are collinear; both ends pick the
        // middle as their nearest neighbor by cosine, and the middle picks
        // the closer end (p2). Every node emits exactly one edge, so the
        // counts sum to 3.
        let rows = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let g = build_mutual_knn(&rows, 1);
        assert_eq!(g.directed_neighbors(0)[0].0, 1);
        assert_eq!(g.directed_neighbors(2)[0].0, 1);
        assert_eq!(g.directed_neighbors(1)[0].0, 2);
        assert_eq!(hubness(&g), vec![0, 2, 1]);
    }

    #[test]
    fn hubness_regular_simplex_is_uniform() {
        // One-hot rows: all pairwise similarities are 0; with k = n-1 every
        // node lists every other, so all counts equal n-1.
        let n = 5;
        let rows = Mat::from_rows(
            &(0..n)
                .map(|i| {
                    let mut r = vec![0.0; n];
                    r[i] = 1.0;
                    r
                })
                .collect::<Vec<_>>(),
        );
        let g = build_mutual_knn(&rows, n - 1);
        assert!(hubness(&g).iter().all(|&h| h == n - 1));
    }

    #[test]
    fn hubness_mutual_pair() {
        let rows = Mat::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1]]);
        let g = build_mutual_knn(&rows, 1);
        assert_eq!(hubness(&g), vec![1, 1]);
    }

    #[test]
    fn pagerank_uniform_on_complete_graph() {
        let rows = Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ]);
        let g = build_mutual_knn(&rows, 3);
        let pr = pagerank(&g, 0.85, 1e-10, 200);
        assert!(pr.converged);
        for s in &pr.scores {
            assert!((s - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn pagerank_two_node_pair_is_half_half() {
        let rows = Mat::from_rows(&[vec![1.0, 0.0], vec![0.8, 0.1]]);
        let g = build_mutual_knn(&rows, 1);
        let pr = pagerank(&g, 0.85, 1e-10, 200);
        assert!((pr.scores[0] - 0.5).abs() < 1e-9);
        assert!((pr.scores[1] - 0.5).abs() < 1e-9);
    }

    /// Dense-matrix fixed-point oracle with identical dangling handling.
    fn dense_pagerank_oracle(g: &SimilarityGraph, damping: f64) -> Vec<f64> {
        let n = g.node_count();
        let mut t = vec![vec![0.0; n]; n];
        for u in 0..n {
            let strength: f64 = g.mutual_neighbors(u).iter().map(|&(_, w)| w.max(0.0)).sum();
            if strength <= 0.0 {
                for v in 0..n {
                    t[u][v] = 1.0 / n as f64;
                }
            } else {
                for &(v, w) in g.mutual_neighbors(u) {
                    t[u][v] = w.max(0.0) / strength;
                }
            }
        }
        let mut r = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![(1.0 - damping) / n as f64; n];
            for u in 0..n {
                for v in 0..n {
                    next[v] += damping * r[u] * t[u][v];
                }
            }
            let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
            r = next;
            if delta < 1e-14 {
                break;
            }
        }
        r
    }

    #[test]
    fn pagerank_path_matches_dense_oracle() {
        // Path 0-1-2: endpoints feed the middle.
        let rows = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let g = build_mutual_knn(&rows, 2);
        let pr = pagerank(&g, 0.85, 1e-10, 200);
        let oracle = dense_pagerank_oracle(&g, 0.85);
        for (a, b) in pr.scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let sum: f64 = pr.scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Mat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_rows(
            &(0..n)
                .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn pagerank_random_graphs_match_oracle_and_sum_to_one() {
        for seed in 0..10u64 {
            let n = 5 + (seed as usize * 3) % 16;
            let rows = random_rows(n, 4, seed);
            let g = build_mutual_knn(&rows, 3);
            let pr = pagerank(&g, 0.85, 1e-12, 500);
            let oracle = dense_pagerank_oracle(&g, 0.85);
            for (a, b) in pr.scores.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8);
            }
            let sum: f64 = pr.scores.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pagerank_is_permutation_equivariant() {
        let rows = random_rows(9, 3, 7);
        let g = build_mutual_knn(&rows, 3);
        let pr = pagerank(&g, 0.85, 1e-12, 500).scores;

        // Reverse the row order and map the scores back.
        let perm: Vec<usize> = (0..9).rev().collect();
        let permuted = rows.select_rows(&perm);
        let g2 = build_mutual_knn(&permuted, 3);
        let pr2 = pagerank(&g2, 0.85, 1e-12, 500).scores;
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            assert!((pr2[new_idx] - pr[old_idx]).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_graphs_are_fine() {
        let empty = build_mutual_knn(&Mat::zeros(0, 3), 5);
        assert_eq!(pagerank(&empty, 0.85, 1e-10, 100).scores.len(), 0);

        let single = build_mutual_knn(&Mat::from_rows(&[vec![1.0, 2.0]]), 5);
        let pr = pagerank(&single, 0.85, 1e-10, 100);
        assert_eq!(pr.scores, vec![1.0]);
        assert_eq!(hubness(&single), vec![0]);
    }

    #[test]
    fn zero_norm_rows_have_zero_similarity() {
        let rows = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.9, 0.2]]);
        let g = build_mutual_knn(&rows, 2);
        for &(_, w) in g.directed_neighbors(0) {
            assert_eq!(w, 0.0);
        }
    }
}
