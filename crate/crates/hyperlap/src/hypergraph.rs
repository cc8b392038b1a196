//! Weighted hypergraph model: a vertex set split into free and controlled
//! blocks, plus hyperedges of size >= 2 with positive weights.
//!
//! Vertices are 0-based here; file formats use 1-based indices and the
//! conversion lives entirely in [`crate::io`]. Edges are stored with sorted
//! vertex lists and in sorted edge order so that every iteration (and hence
//! every floating-point reduction) is deterministic.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypergraphError {
    #[error("vertex set is empty (n + m = 0)")]
    EmptyVertexSet,
    #[error("edge {index} has {size} distinct vertices, need at least 2")]
    EdgeTooSmall { index: usize, size: usize },
    #[error("edge {index} has non-positive weight {weight}")]
    NonpositiveWeight { index: usize, weight: f64 },
    #[error("edge {index} references vertex {vertex} outside the vertex set")]
    VertexOutOfRange { index: usize, vertex: usize },
    #[error("edge {index} lists vertex {vertex} more than once")]
    DuplicateVertex { index: usize, vertex: usize },
    #[error("hypergraph is not connected")]
    Disconnected,
}

/// A hyperedge: a sorted set of vertex indices and a weight w(e) > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: Vec<usize>,
    pub weight: f64,
}

impl Edge {
    /// #e (#e - 1) / 2, the pair count of the clique on e.
    pub fn pair_count(&self) -> usize {
        let k = self.vertices.len();
        k * (k - 1) / 2
    }
}

/// Immutable validated hypergraph G = (V, E, w) with N = n + m vertices:
/// indices `0..n` are free, `n..n+m` are controlled.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    n_free: usize,
    m_controlled: usize,
    edges: Vec<Edge>,
    /// vertex -> indices of incident edges
    incidence: Vec<Vec<usize>>,
}

impl Hypergraph {
    /// Validates and builds a hypergraph from 0-based edge lists.
    ///
    /// Rejects empty vertex sets, edges with fewer than two distinct
    /// vertices, duplicate vertices inside an edge, out-of-range indices and
    /// non-positive weights.
    pub fn new(
        n_free: usize,
        m_controlled: usize,
        raw_edges: Vec<(Vec<usize>, f64)>,
    ) -> Result<Self, HypergraphError> {
        let total = n_free + m_controlled;
        if total == 0 {
            return Err(HypergraphError::EmptyVertexSet);
        }
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (index, (mut vertices, weight)) in raw_edges.into_iter().enumerate() {
            vertices.sort_unstable();
            for pair in vertices.windows(2) {
                if pair[0] == pair[1] {
                    return Err(HypergraphError::DuplicateVertex { index, vertex: pair[0] });
                }
            }
            if vertices.len() < 2 {
                return Err(HypergraphError::EdgeTooSmall { index, size: vertices.len() });
            }
            if let Some(&v) = vertices.iter().find(|&&v| v >= total) {
                return Err(HypergraphError::VertexOutOfRange { index, vertex: v });
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(HypergraphError::NonpositiveWeight { index, weight });
            }
            edges.push(Edge { vertices, weight });
        }
        edges.sort_by(|a, b| {
            a.vertices
                .cmp(&b.vertices)
                .then(a.weight.partial_cmp(&b.weight).expect("finite weights"))
        });
        let mut incidence = vec![Vec::new(); total];
        for (id, e) in edges.iter().enumerate() {
            for &v in &e.vertices {
                incidence[v].push(id);
            }
        }
        Ok(Self { n_free, m_controlled, edges, incidence })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn m_controlled(&self) -> usize {
        self.m_controlled
    }

    /// N = n + m.
    pub fn vertex_count(&self) -> usize {
        self.n_free + self.m_controlled
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incident_edges(&self, vertex: usize) -> &[usize] {
        &self.incidence[vertex]
    }

    /// Breadth-first distances (in edge-chain length) from `start` to all
    /// vertices; `usize::MAX` marks unreachable vertices.
    fn bfs_distances(&self, start: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &eid in &self.incidence[v] {
                for &u in &self.edges[eid].vertices {
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
        }
        dist
    }

    /// True iff every pair of vertices is joined by a chain of edges.
    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// diam_G: the largest minimal edge-chain length over all vertex pairs.
    pub fn diameter(&self) -> Result<usize, HypergraphError> {
        let mut best = 0;
        for v in 0..self.vertex_count() {
            let dist = self.bfs_distances(v);
            for &d in &dist {
                if d == usize::MAX {
                    return Err(HypergraphError::Disconnected);
                }
                best = best.max(d);
            }
        }
        Ok(best)
    }

    /// nu_E = max_e #e (#e - 1) / 2.
    pub fn nu_e(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.pair_count())
            .max()
            .unwrap_or(0) as f64
    }

    /// Weights w_ij of the clique expansion: the sum of w(e) over edges
    /// containing both i and j, zero on the diagonal.
    pub fn clique_weights(&self) -> CliqueWeights {
        let total = self.vertex_count();
        let mut data = vec![0.0; total * total];
        for e in &self.edges {
            for (a, &i) in e.vertices.iter().enumerate() {
                for &j in &e.vertices[a + 1..] {
                    data[i * total + j] += e.weight;
                    data[j * total + i] += e.weight;
                }
            }
        }
        CliqueWeights { total, data }
    }
}

/// Symmetric N x N matrix of clique-expansion weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueWeights {
    total: usize,
    data: Vec<f64>,
}

impl CliqueWeights {
    pub fn vertex_count(&self) -> usize {
        self.total
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.total + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, m: usize, edges: &[(&[usize], f64)]) -> Hypergraph {
        Hypergraph::new(
            n,
            m,
            edges.iter().map(|(v, w)| (v.to_vec(), *w)).collect(),
        )
        .expect("valid hypergraph")
    }

    #[test]
    fn validates_simple_triangle() {
        let g = graph(2, 1, &[(&[0, 1, 2], 1.0)]);
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn rejects_small_edges() {
        let err = Hypergraph::new(1, 0, vec![(vec![0], 1.0)]).unwrap_err();
        assert_eq!(err, HypergraphError::EdgeTooSmall { index: 0, size: 1 });
    }

    #[test]
    fn rejects_nonpositive_weight() {
        let err = Hypergraph::new(2, 0, vec![(vec![0, 1], -1.0)]).unwrap_err();
        assert!(matches!(err, HypergraphError::NonpositiveWeight { .. }));
        let err = Hypergraph::new(2, 0, vec![(vec![0, 1], 0.0)]).unwrap_err();
        assert!(matches!(err, HypergraphError::NonpositiveWeight { .. }));
    }

    #[test]
    fn rejects_out_of_range_vertex() {
        let err = Hypergraph::new(2, 0, vec![(vec![0, 2], 1.0)]).unwrap_err();
        assert_eq!(err, HypergraphError::VertexOutOfRange { index: 0, vertex: 2 });
    }

    #[test]
    fn rejects_duplicate_vertices() {
        let err = Hypergraph::new(3, 0, vec![(vec![0, 1, 1], 1.0)]).unwrap_err();
        assert_eq!(err, HypergraphError::DuplicateVertex { index: 0, vertex: 1 });
    }

    #[test]
    fn rejects_empty_vertex_set() {
        let err = Hypergraph::new(0, 0, vec![]).unwrap_err();
        assert_eq!(err, HypergraphError::EmptyVertexSet);
    }

    #[test]
    fn connectivity() {
        assert!(graph(3, 0, &[(&[0, 1, 2], 1.0)]).is_connected());
        assert!(!graph(4, 0, &[(&[0, 1], 1.0), (&[2, 3], 1.0)]).is_connected());
        assert!(graph(3, 0, &[(&[0, 1], 1.0), (&[1, 2], 1.0)]).is_connected());
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(graph(3, 0, &[(&[0, 1, 2], 1.0)]).diameter().unwrap(), 1);
        assert_eq!(
            graph(3, 0, &[(&[0, 1], 1.0), (&[1, 2], 1.0)]).diameter().unwrap(),
            2
        );
        let path5 = graph(
            5,
            0,
            &[(&[0, 1], 1.0), (&[1, 2], 1.0), (&[2, 3], 1.0), (&[3, 4], 1.0)],
        );
        assert_eq!(path5.diameter().unwrap(), 4);
        let err = graph(4, 0, &[(&[0, 1], 1.0), (&[2, 3], 1.0)])
            .diameter()
            .unwrap_err();
        assert_eq!(err, HypergraphError::Disconnected);
    }

    #[test]
    fn nu_e_examples() {
        assert_eq!(graph(2, 0, &[(&[0, 1], 1.0)]).nu_e(), 1.0);
        assert_eq!(graph(3, 0, &[(&[0, 1, 2], 1.0)]).nu_e(), 3.0);
        assert_eq!(
            graph(4, 0, &[(&[0, 1], 1.0), (&[0, 1, 2, 3], 1.0)]).nu_e(),
            6.0
        );
    }

    #[test]
    fn clique_weight_examples() {
        let w = graph(3, 0, &[(&[0, 1, 2], 1.0)]).clique_weights();
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(0, 2), 1.0);
        assert_eq!(w.get(1, 2), 1.0);
        assert_eq!(w.get(0, 0), 0.0);

        let w = graph(3, 0, &[(&[0, 1], 2.0), (&[0, 1, 2], 1.0)]).clique_weights();
        assert_eq!(w.get(0, 1), 3.0);
        assert_eq!(w.get(0, 2), 1.0);
        assert_eq!(w.get(1, 2), 1.0);

        let w = graph(3, 0, &[(&[0, 1], 1.0)]).clique_weights();
        assert_eq!(w.get(0, 2), 0.0);
        assert_eq!(w.get(1, 2), 0.0);
    }

    /// Oracle: diameter must match Floyd-Warshall on the share-an-edge graph.
    #[test]
    fn diameter_matches_brute_force_on_small_graphs() {
        let cases: Vec<Hypergraph> = vec![
            graph(4, 0, &[(&[0, 1], 1.0), (&[1, 2], 1.0), (&[2, 3], 1.0)]),
            graph(4, 1, &[(&[0, 1, 2], 1.0), (&[2, 3, 4], 1.0)]),
            graph(6, 0, &[(&[0, 1, 2], 1.0), (&[2, 3], 1.0), (&[3, 4, 5], 1.0)]),
            graph(5, 0, &[(&[0, 1, 2, 3, 4], 1.0)]),
            graph(
                6,
                0,
                &[(&[0, 1], 1.0), (&[1, 2], 1.0), (&[2, 3], 1.0), (&[3, 4], 1.0), (&[4, 5], 1.0)],
            ),
        ];
        for g in cases {
            let total = g.vertex_count();
            let inf = usize::MAX / 2;
            let mut d = vec![vec![inf; total]; total];
            for (i, row) in d.iter_mut().enumerate() {
                row[i] = 0;
            }
            for e in g.edges() {
                for (a, &i) in e.vertices.iter().enumerate() {
                    for &j in &e.vertices[a + 1..] {
                        d[i][j] = 1;
                        d[j][i] = 1;
                    }
                }
            }
            for k in 0..total {
                for i in 0..total {
                    for j in 0..total {
                        d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                    }
                }
            }
            let brute = d.iter().flatten().copied().max().unwrap();
            assert_eq!(g.diameter().unwrap(), brute);
        }
    }
}
