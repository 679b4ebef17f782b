//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use graphnorm::graph::{Graph, GraphTopology, Labels};
use graphnorm::Tensor;
use rand::Rng;

/// Layer normalization of every row with unit scale and zero shift:
/// `(x - mean) / (sqrt(var) + eps)` with the biased variance.
pub fn layer_norm_oracle(x: &Tensor, eps: f64) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        for (c, v) in row.iter().enumerate() {
            out.set(r, c, (v - mean) / (sd + eps));
        }
    }
    out
}

/// Mean and biased standard deviation of `values`, summed left to right.
pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for &v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &v in values {
        sq += (v - mean) * (v - mean);
    }
    (mean, (sq / n).sqrt())
}

/// Members of each row's self-inclusive neighborhood, ascending, found by
/// scanning every pair of rows.
pub fn brute_force_scopes(n: usize, adjacent: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    (0..n)
        .map(|v| (0..n).filter(|&u| u == v || adjacent(u, v)).collect())
        .collect()
}

/// Node scope: one (mean, std) per row over its feature columns.
pub fn node_stats(x: &Tensor) -> Vec<(f64, f64)> {
    (0..x.rows()).map(|r| moments(x.row(r))).collect()
}

/// Adjacency scope: one (mean, std) per row over every element of its
/// neighborhood's rows, visited member by member.
pub fn adjacency_stats(x: &Tensor, scopes: &[Vec<usize>]) -> Vec<(f64, f64)> {
    scopes
        .iter()
        .map(|members| {
            let mut values = Vec::new();
            for &u in members {
                values.extend_from_slice(x.row(u));
            }
            moments(&values)
        })
        .collect()
}

/// Column scope over a set of rows: one (mean, std) per column.
pub fn column_stats(x: &Tensor, rows: &[usize]) -> Vec<(f64, f64)> {
    (0..x.cols())
        .map(|c| moments(&rows.iter().map(|&r| x.get(r, c)).collect::<Vec<_>>()))
        .collect()
}

/// A random undirected graph with up to `max_nodes` nodes.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    max_nodes: usize,
    d: usize,
    edge_dim: Option<usize>,
) -> Graph {
    let n = rng.random_range(1..=max_nodes);
    let p: f64 = rng.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let features = random_tensor(rng, n, d, 3.0);
    let edge_features = edge_dim.map(|de| random_tensor(rng, edges.len(), de, 3.0));
    Graph::new(n, edges, features, edge_features, Labels::default()).unwrap()
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

pub fn topology(g: &Graph) -> &GraphTopology {
    g.topology()
}
