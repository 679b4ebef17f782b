use std::sync::Arc;

use crate::autodiff::Segments;
use crate::error::{Error, Result};
use crate::graph::{line_graph, GraphBatch};
use crate::norm::{NeighborScope, ScopeContext};

/// Directed edge rows and the structures the edge stream needs.
#[derive(Clone, Debug)]
pub struct EdgeContext {
    /// Sender of each edge row.
    pub src: Arc<[usize]>,
    /// Receiver of each edge row; nondecreasing.
    pub dst: Arc<[usize]>,
    /// Edge rows grouped by receiver, one segment per node.
    pub by_dst: Arc<Segments>,
    /// Normalization scopes over edge rows.
    pub scopes: ScopeContext,
}

impl EdgeContext {
    /// `edge_graphs` maps each edge row to its graph.
    pub fn new(
        num_nodes: usize,
        src: Vec<usize>,
        dst: Vec<usize>,
        edge_graphs: Arc<Segments>,
    ) -> Result<Self> {
        if src.len() != dst.len() || edge_graphs.len() != src.len() {
            return Err(Error::Graph("edge arrays differ in length".into()));
        }
        let endpoints: Vec<(usize, usize)> = src.iter().copied().zip(dst.iter().copied()).collect();
        let by_dst = Arc::new(
            Segments::new(dst.clone(), num_nodes)
                .map_err(|e| Error::Graph(format!("edge receivers: {e}")))?,
        );
        let lg = line_graph(num_nodes, &endpoints)?;
        Ok(EdgeContext {
            src: src.into(),
            dst: dst.into(),
            by_dst,
            scopes: ScopeContext::new(NeighborScope::from_topology(&lg, true), edge_graphs),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Everything a layer needs to pass messages over one batch.
#[derive(Clone, Debug)]
pub struct MessageContext {
    /// Self-inclusive neighborhoods and node normalization scopes.
    pub nodes: ScopeContext,
    /// Owner row of each neighborhood entry, aligned with `nodes.neighbors.member()`.
    pub owner_index: Arc<[usize]>,
    pub edges: Option<EdgeContext>,
}

impl MessageContext {
    /// Node context for `batch`; the edge context is built only when
    /// `with_edges` is set.
    pub fn new(batch: &GraphBatch, with_edges: bool) -> Result<Self> {
        let nodes = ScopeContext::for_nodes(batch, true);
        let edges = if with_edges {
            Some(EdgeContext::new(
                batch.num_nodes(),
                batch.edge_src.clone(),
                batch.edge_dst.clone(),
                batch.edge_segment.clone(),
            )?)
        } else {
            None
        };
        Ok(MessageContext::from_parts(nodes, edges))
    }

    pub fn from_parts(nodes: ScopeContext, edges: Option<EdgeContext>) -> Self {
        let owner_index = nodes.neighbors.owner().ids().into();
        MessageContext {
            nodes,
            owner_index,
            edges,
        }
    }

    /// Same context with the neighborhood entries replaced.
    pub fn with_neighbors(&self, neighbors: NeighborScope) -> Self {
        let nodes = ScopeContext {
            neighbors,
            graphs: self.nodes.graphs.clone(),
            batch: self.nodes.batch.clone(),
        };
        MessageContext::from_parts(nodes, self.edges.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.rows()
    }

    pub fn edges(&self) -> Result<&EdgeContext> {
        self.edges
            .as_ref()
            .ok_or_else(|| Error::Config("layer needs edge rows but the context has none".into()))
    }
}
