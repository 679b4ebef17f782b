use std::sync::Arc;

use super::{Graph, GraphTopology, LinkPair};
use crate::autodiff::Segments;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labels of every graph in a batch, with node ids already offset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchLabels {
    pub node: Option<Vec<usize>>,
    pub graph_class: Option<Vec<usize>>,
    pub graph_target: Option<Vec<f64>>,
    pub links: Option<Vec<LinkPair>>,
}

/// Several graphs concatenated into one disjoint graph.
///
/// Edge rows are the directed adjacency entries in CSR order: row `k` carries
/// the message from `edge_src[k]` into `edge_dst[k]`, and `edge_dst` is
/// nondecreasing.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub topology: GraphTopology,
    /// Node to graph map.
    pub segment: Arc<Segments>,
    pub features: Tensor,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    /// Edge row to graph map.
    pub edge_segment: Arc<Segments>,
    pub edge_features: Option<Tensor>,
    pub labels: BatchLabels,
}

impl GraphBatch {
    /// Concatenates graphs, offsetting node ids per graph.
    pub fn concat(graphs: &[&Graph]) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::Validation("cannot batch zero graphs".into()));
        };
        let d = first.feature_dim();
        let de = first.edge_feature_dim();
        for (k, g) in graphs.iter().enumerate() {
            if g.feature_dim() != d {
                return Err(Error::Validation(format!(
                    "graph {k} has feature dim {}, expected {d}",
                    g.feature_dim()
                )));
            }
            if g.edge_feature_dim() != de {
                return Err(Error::Validation(format!(
                    "graph {k} has edge feature dim {:?}, expected {de:?}",
                    g.edge_feature_dim()
                )));
            }
        }

        let topology =
            GraphTopology::disjoint_union(&graphs.iter().map(|g| g.topology()).collect::<Vec<_>>());
        let node_sizes: Vec<usize> = graphs.iter().map(|g| g.num_nodes()).collect();
        let edge_sizes: Vec<usize> = graphs.iter().map(|g| g.topology().num_entries()).collect();
        let features = Tensor::vstack(&graphs.iter().map(|g| g.features()).collect::<Vec<_>>())?;
        let edge_features = match de {
            Some(_) => {
                let parts: Vec<Tensor> = graphs
                    .iter()
                    .map(|g| g.directed_edge_features().expect("edge features present"))
                    .collect();
                Some(Tensor::vstack(&parts.iter().collect::<Vec<_>>())?)
            }
            None => None,
        };

        let mut edge_src = Vec::with_capacity(topology.num_entries());
        let mut edge_dst = Vec::with_capacity(topology.num_entries());
        for v in 0..topology.num_nodes() {
            for &u in topology.neighbors(v) {
                edge_src.push(u);
                edge_dst.push(v);
            }
        }

        Ok(GraphBatch {
            segment: Arc::new(Segments::from_sizes(&node_sizes)),
            edge_segment: Arc::new(Segments::from_sizes(&edge_sizes)),
            labels: collect_labels(graphs)?,
            topology,
            features,
            edge_src,
            edge_dst,
            edge_features,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.segment.count()
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_src.len()
    }

    /// Node id range of graph `k`.
    pub fn graph_nodes(&self, k: usize) -> std::ops::Range<usize> {
        self.segment.range(k)
    }
}

fn collect_labels(graphs: &[&Graph]) -> Result<BatchLabels> {
    fn all_or_none<T>(
        graphs: &[&Graph],
        what: &str,
        get: impl Fn(&Graph) -> Option<T>,
    ) -> Result<Option<Vec<T>>> {
        let items: Vec<Option<T>> = graphs.iter().map(|g| get(g)).collect();
        let present = items.iter().filter(|i| i.is_some()).count();
        if present == 0 {
            Ok(None)
        } else if present == items.len() {
            Ok(Some(items.into_iter().flatten().collect()))
        } else {
            Err(Error::Validation(format!(
                "{what} labels present on only some graphs"
            )))
        }
    }

    let mut offset = 0;
    let mut shifted_links = Vec::with_capacity(graphs.len());
    for g in graphs {
        shifted_links.push(g.labels().links.as_ref().map(|ls| {
            ls.iter()
                .map(|p| LinkPair {
                    u: p.u + offset,
                    v: p.v + offset,
                    label: p.label,
                })
                .collect::<Vec<_>>()
        }));
        offset += g.num_nodes();
    }
    let links_present = shifted_links.iter().filter(|l| l.is_some()).count();
    let links = match links_present {
        0 => None,
        n if n == graphs.len() => Some(shifted_links.into_iter().flatten().flatten().collect()),
        _ => {
            return Err(Error::Validation(
                "link labels present on only some graphs".into(),
            ))
        }
    };

    Ok(BatchLabels {
        node: all_or_none(graphs, "node", |g| g.labels().node.clone())?
            .map(|v| v.into_iter().flatten().collect()),
        graph_class: all_or_none(graphs, "graph class", |g| g.labels().graph_class)?,
        graph_target: all_or_none(graphs, "graph target", |g| g.labels().graph_target)?,
        links,
    })
}
