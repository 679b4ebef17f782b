use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Segments;
use crate::error::Result;
use crate::graph::{line_graph, GraphBatch, GraphTopology};

/// The four statistic scopes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Each row on its own.
    Node,
    /// Every element of the rows in a row's neighborhood.
    Adjacency,
    /// Per column, over the rows of one graph.
    Graph,
    /// Per column, over every row of the batch.
    Batch,
}

impl Scope {
    pub const ALL: [Scope; 4] = [Scope::Node, Scope::Adjacency, Scope::Graph, Scope::Batch];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Scope::Node => 'n',
            Scope::Adjacency => 'a',
            Scope::Graph => 'g',
            Scope::Batch => 'b',
        }
    }

    pub fn from_letter(c: char) -> Option<Scope> {
        Scope::ALL.into_iter().find(|s| s.letter() == c)
    }
}

/// Row/member pairs describing each row's neighborhood, grouped by owner
/// row. Members of one owner are in ascending order unless permuted.
#[derive(Clone, Debug)]
pub struct NeighborScope {
    owner: Arc<Segments>,
    member: Arc<[usize]>,
}

impl NeighborScope {
    /// With `self_inclusive`, each row's scope is `{v} ∪ N(v)`. Without it,
    /// the scope is `N(v)`, except that an isolated row falls back to itself.
    pub fn from_topology(topology: &GraphTopology, self_inclusive: bool) -> Self {
        let n = topology.num_nodes();
        let mut owner = Vec::with_capacity(topology.num_entries() + n);
        let mut member = Vec::with_capacity(topology.num_entries() + n);
        for v in 0..n {
            let ns = topology.neighbors(v);
            let include_self = self_inclusive || ns.is_empty();
            let mut pushed_self = !include_self;
            for &u in ns {
                if !pushed_self && u > v {
                    owner.push(v);
                    member.push(v);
                    pushed_self = true;
                }
                owner.push(v);
                member.push(u);
            }
            if !pushed_self {
                owner.push(v);
                member.push(v);
            }
        }
        NeighborScope {
            owner: Arc::new(Segments::new(owner, n).expect("owners sorted")),
            member: member.into(),
        }
    }

    pub fn owner(&self) -> &Arc<Segments> {
        &self.owner
    }

    pub fn member(&self) -> &Arc<[usize]> {
        &self.member
    }

    pub fn members_of(&self, v: usize) -> &[usize] {
        &self.member[self.owner.range(v)]
    }

    pub fn num_rows(&self) -> usize {
        self.owner.count()
    }

    /// Same neighborhoods, members shuffled within each owner.
    pub fn permuted<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut member = self.member.to_vec();
        for v in 0..self.num_rows() {
            member[self.owner.range(v)].shuffle(rng);
        }
        NeighborScope {
            owner: self.owner.clone(),
            member: member.into(),
        }
    }
}

/// Everything the four scopes need for one set of rows (nodes or edges).
#[derive(Clone, Debug)]
pub struct ScopeContext {
    pub neighbors: NeighborScope,
    /// Row to graph map.
    pub graphs: Arc<Segments>,
    /// Every row in one segment.
    pub batch: Arc<Segments>,
}

impl ScopeContext {
    pub fn new(neighbors: NeighborScope, graphs: Arc<Segments>) -> Self {
        let rows = graphs.len();
        ScopeContext {
            neighbors,
            graphs,
            batch: Arc::new(Segments::single(rows)),
        }
    }

    /// Scopes over the batch's nodes.
    pub fn for_nodes(batch: &GraphBatch, self_inclusive: bool) -> Self {
        ScopeContext::new(
            NeighborScope::from_topology(&batch.topology, self_inclusive),
            batch.segment.clone(),
        )
    }

    /// Scopes over the batch's edge rows; adjacency comes from the line graph.
    pub fn for_edges(batch: &GraphBatch, self_inclusive: bool) -> Result<Self> {
        let endpoints: Vec<(usize, usize)> = batch
            .edge_src
            .iter()
            .copied()
            .zip(batch.edge_dst.iter().copied())
            .collect();
        let lg = line_graph(batch.num_nodes(), &endpoints)?;
        Ok(ScopeContext::new(
            NeighborScope::from_topology(&lg, self_inclusive),
            batch.edge_segment.clone(),
        ))
    }

    pub fn rows(&self) -> usize {
        self.graphs.len()
    }
}
