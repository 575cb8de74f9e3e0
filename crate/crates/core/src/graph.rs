//! Undirected communication graphs and their Laplacians.
//!
//! Nodes are 0-based internally. The edge-list text format and the config
//! layer are 1-based; conversion happens in [`CommGraph::from_edge_list`].

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Retry budget for [`make_random_connected`].
pub const MAX_CONNECT_RETRIES: usize = 1000;

/// Off-diagonal Frobenius norm at which the Jacobi sweep stops.
pub const JACOBI_TOL: f64 = 1e-10;

/// Simple undirected graph: no self-loops, no parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    /// Builds a graph from 0-based edges. Edge orientation is ignored;
    /// self-loops and duplicates are rejected.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidGraph("graph has zero nodes".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={}",
                    a + 1,
                    b + 1,
                    n_nodes
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", a + 1)));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.0 + 1,
                    e.1 + 1
                )));
            }
        }
        Ok(Self {
            n_nodes,
            edges: set,
        })
    }

    /// Parses `i j` pairs, one per line, 1-based. Blank lines and `#`
    /// comments are skipped. When `n_nodes` is `None` the largest index
    /// seen determines the node count.
    pub fn from_edge_list(text: &str, n_nodes: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_node = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::InvalidGraph(format!(
                    "line {}: expected `i j`, got `{}`",
                    lineno + 1,
                    line
                )));
            }
            let mut parse = |s: &str| -> Result<usize> {
                let v: usize = s.parse().map_err(|_| {
                    Error::InvalidGraph(format!("line {}: `{}` is not a node index", lineno + 1, s))
                })?;
                if v == 0 {
                    return Err(Error::InvalidGraph(format!(
                        "line {}: node indices are 1-based",
                        lineno + 1
                    )));
                }
                max_node = max_node.max(v);
                Ok(v - 1)
            };
            let a = parse(fields[0])?;
            let b = parse(fields[1])?;
            edges.push((a, b));
        }
        let n = n_nodes.unwrap_or(max_node);
        Self::new(n, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Edges as 0-based `(lo, hi)` pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n_nodes
    }

    /// Edge list in the 1-based text format accepted by [`Self::from_edge_list`].
    pub fn to_edge_list(&self) -> String {
        self.edges
            .iter()
            .map(|(a, b)| format!("{} {}\n", a + 1, b + 1))
            .collect()
    }
}

/// Ring over `n` nodes. For `n = 2` this is the single edge.
pub fn make_cycle(n: usize) -> Result<CommGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("cycle needs at least 2 nodes, got {n}"),
        });
    }
    let edges: BTreeSet<(usize, usize)> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (i.min(j), i.max(j))
        })
        .collect();
    CommGraph::new(n, edges)
}

pub fn make_complete(n: usize) -> Result<CommGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("complete graph needs at least 2 nodes, got {n}"),
        });
    }
    let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
    CommGraph::new(n, edges)
}

/// Erdős–Rényi `G(n, p)` resampled until connected.
///
/// The stream is a ChaCha8 generator seeded with `seed`, so the result is
/// reproducible across platforms.
pub fn make_random_connected(n: usize, edge_prob: f64, seed: u64) -> Result<CommGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("random graph needs at least 2 nodes, got {n}"),
        });
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "edge_prob",
            reason: format!("must lie in (0, 1], got {edge_prob}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_CONNECT_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        let g = CommGraph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetriesExhausted {
        n,
        p: edge_prob,
        retries: MAX_CONNECT_RETRIES,
    })
}

/// Laplacian of a [`CommGraph`] together with its spectral summary.
#[derive(Debug, Clone)]
pub struct LaplacianInfo {
    n: usize,
    /// Row-major dense Laplacian.
    matrix: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    /// Ascending eigenvalues.
    eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub d_star: usize,
}

impl LaplacianInfo {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    /// Dense rows, mostly for display and tests.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// `L v` for a node vector `v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_augmented(v, 1)
    }

    /// `(L ⊗ I_m) x` where `x` stacks `n_nodes` blocks of width `block`.
    pub fn apply_augmented(&self, x: &[f64], block: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_augmented_into(x, block, &mut out)?;
        Ok(out)
    }

    pub fn apply_augmented_into(&self, x: &[f64], block: usize, out: &mut [f64]) -> Result<()> {
        check_len("augmented Laplacian input", self.n * block, x.len())?;
        check_len("augmented Laplacian output", x.len(), out.len())?;
        for i in 0..self.n {
            let deg = self.neighbors[i].len() as f64;
            let (lo, hi) = (i * block, (i + 1) * block);
            for (o, &xi) in out[lo..hi].iter_mut().zip(&x[lo..hi]) {
                *o = deg * xi;
            }
            for &j in &self.neighbors[i] {
                let xj = &x[j * block..(j + 1) * block];
                for (o, &v) in out[lo..hi].iter_mut().zip(xj) {
                    *o -= v;
                }
            }
        }
        Ok(())
    }

    /// `xᵀ L x` over node vectors.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        let lv = self.apply(v)?;
        Ok(v.iter().zip(&lv).map(|(a, b)| a * b).sum())
    }
}

/// Laplacian with spectrum from a Jacobi eigensolve.
pub fn build_laplacian(g: &CommGraph) -> Result<LaplacianInfo> {
    let n = g.n_nodes();
    if n < 2 {
        return Err(Error::InvalidGraph(format!(
            "Laplacian spectrum needs at least 2 nodes, got {n}"
        )));
    }
    let neighbors = g.neighbors();
    let mut matrix = vec![0.0; n * n];
    for (i, nb) in neighbors.iter().enumerate() {
        matrix[i * n + i] = nb.len() as f64;
        for &j in nb {
            matrix[i * n + j] = -1.0;
        }
    }
    let mut eigenvalues = jacobi_eigenvalues(&matrix, n);
    // PSD up to round-off
    for ev in &mut eigenvalues {
        if ev.abs() < 1e-12 {
            *ev = 0.0;
        }
    }
    let d_star = neighbors.iter().map(Vec::len).max().unwrap_or(0);
    Ok(LaplacianInfo {
        n,
        lambda2: eigenvalues[1],
        lambda_n: eigenvalues[n - 1],
        matrix,
        neighbors,
        eigenvalues,
        d_star,
    })
}

/// Eigenvalues of a symmetric row-major `n × n` matrix by cyclic Jacobi
/// rotations, in ascending order.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), n * n, "matrix must be n × n");
    let mut a = matrix.to_vec();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&a) <= JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // signum(+0.0) is 1, so theta = 0 gives the 45° rotation
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}
