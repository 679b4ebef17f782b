use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::GraphTopology;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A candidate node pair for link prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPair {
    pub u: usize,
    pub v: usize,
    pub label: bool,
}

/// Task labels carried by a single graph. Which fields are present depends on
/// the task the dataset was generated for.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<LinkPair>>,
}

/// One undirected graph with node features and optional edge features.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    topology: GraphTopology,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    edge_features: Option<Tensor>,
    labels: Labels,
}

impl Graph {
    /// `edges` are undirected pairs; `edge_features` rows align with them.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        edge_features: Option<Tensor>,
        labels: Labels,
    ) -> Result<Self> {
        let topology = GraphTopology::build(num_nodes, &edges, true)?;
        if features.rows() != num_nodes {
            return Err(Error::Validation(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut seen = HashMap::with_capacity(edges.len());
        for (k, &(u, v)) in edges.iter().enumerate() {
            if seen.insert((u.min(v), u.max(v)), k).is_some() {
                return Err(Error::Validation(format!(
                    "edge {k} ({u}, {v}) is a duplicate"
                )));
            }
        }
        if let Some(ef) = &edge_features {
            if ef.rows() != edges.len() {
                return Err(Error::Validation(format!(
                    "{} edge feature rows for {} edges",
                    ef.rows(),
                    edges.len()
                )));
            }
        }
        if let Some(node) = &labels.node {
            if node.len() != num_nodes {
                return Err(Error::Validation(format!(
                    "{} node labels for {num_nodes} nodes",
                    node.len()
                )));
            }
        }
        if let Some(links) = &labels.links {
            if let Some(p) = links.iter().find(|p| p.u >= num_nodes || p.v >= num_nodes) {
                return Err(Error::Validation(format!(
                    "link pair ({}, {}) out of range",
                    p.u, p.v
                )));
            }
        }
        Ok(Graph {
            topology,
            edges,
            features,
            edge_features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn edge_features(&self) -> Option<&Tensor> {
        self.edge_features.as_ref()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edge_feature_dim(&self) -> Option<usize> {
        self.edge_features.as_ref().map(Tensor::cols)
    }

    /// Edge features expanded to one row per stored adjacency entry, in CSR
    /// order (row `v`, then each `u` in `N(v)`).
    pub(crate) fn directed_edge_features(&self) -> Option<Tensor> {
        let ef = self.edge_features.as_ref()?;
        let index: HashMap<(usize, usize), usize> = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, &(u, v))| ((u.min(v), u.max(v)), k))
            .collect();
        let mut rows = Vec::with_capacity(self.topology.num_entries());
        for v in 0..self.num_nodes() {
            for &u in self.topology.neighbors(v) {
                rows.push(index[&(u.min(v), u.max(v))]);
            }
        }
        Some(ef.select_rows(&rows))
    }
}
