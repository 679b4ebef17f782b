use crate::error::{Error, Result};

/// Compressed sparse row adjacency. Row `v` lists the nodes that send
/// messages to `v`; for an undirected graph that is its neighbor set.
///
/// Self loops are never stored. Scopes that include the node itself add it
/// explicitly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphTopology {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degrees: Vec<usize>,
    undirected: bool,
}

impl GraphTopology {
    /// Builds a topology from `(source, target)` pairs. Duplicates are
    /// dropped; with `undirected` the symmetric closure is stored.
    pub fn build(num_nodes: usize, edges: &[(usize, usize)], undirected: bool) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Graph(format!(
                    "edge {k} ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::Graph(format!("edge {k} is a self loop on node {u}")));
            }
            lists[v].push(u);
            if undirected {
                lists[u].push(v);
            }
        }
        Ok(Self::from_lists(lists, undirected))
    }

    /// Builds from per-node neighbor lists, sorting and deduplicating them.
    pub(crate) fn from_lists(mut lists: Vec<Vec<usize>>, undirected: bool) -> Self {
        let num_nodes = lists.len();
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        let mut degrees = Vec::with_capacity(num_nodes);
        offsets.push(0);
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            degrees.push(list.len());
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        GraphTopology {
            num_nodes,
            offsets,
            neighbors,
            degrees,
            undirected,
        }
    }

    /// Disjoint union; node ids of each part are shifted past the previous ones.
    pub fn disjoint_union(parts: &[&GraphTopology]) -> Self {
        let num_nodes = parts.iter().map(|p| p.num_nodes).sum();
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::with_capacity(parts.iter().map(|p| p.neighbors.len()).sum());
        let mut degrees = Vec::with_capacity(num_nodes);
        offsets.push(0);
        let mut shift = 0;
        for p in parts {
            for v in 0..p.num_nodes {
                neighbors.extend(p.neighbors(v).iter().map(|u| u + shift));
                offsets.push(neighbors.len());
                degrees.push(p.degrees[v]);
            }
            shift += p.num_nodes;
        }
        GraphTopology {
            num_nodes,
            offsets,
            neighbors,
            degrees,
            undirected: parts.iter().all(|p| p.undirected),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored (directed) adjacency entries.
    pub fn num_entries(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_indices(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.neighbors(to).binary_search(&from).is_ok()
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Graph(msg));
        if self.offsets.len() != self.num_nodes + 1 || self.degrees.len() != self.num_nodes {
            return bad("offset/degree arrays do not match node count".into());
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("offsets decrease".into());
        }
        if self.offsets[self.num_nodes] != self.neighbors.len() {
            return bad("last offset does not match neighbor count".into());
        }
        for v in 0..self.num_nodes {
            let ns = self.neighbors(v);
            if ns.len() != self.degrees[v] {
                return bad(format!("degree of node {v} is stale"));
            }
            if ns.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbors of node {v} unsorted or duplicated"));
            }
            for &u in ns {
                if u >= self.num_nodes || u == v {
                    return bad(format!("node {v} has invalid neighbor {u}"));
                }
                if self.undirected && !self.has_edge(v, u) {
                    return bad(format!("undirected adjacency not symmetric at ({u}, {v})"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_degrees() {
        let t = GraphTopology::build(3, &[(0, 1), (1, 2)], true).unwrap();
        assert_eq!(t.degrees(), &[1, 2, 1]);
        assert_eq!(t.neighbors(1), &[0, 2]);
        t.validate().unwrap();
    }

    #[test]
    fn empty_edge_set() {
        let t = GraphTopology::build(2, &[], true).unwrap();
        assert_eq!(t.degrees(), &[0, 0]);
    }

    #[test]
    fn out_of_range_and_self_loops_rejected() {
        assert!(GraphTopology::build(2, &[(0, 5)], true).is_err());
        assert!(GraphTopology::build(2, &[(0, 5)], false).is_err());
        assert!(GraphTopology::build(2, &[(1, 1)], true).is_err());
    }

    #[test]
    fn duplicates_removed_and_directed_rows() {
        let t = GraphTopology::build(3, &[(0, 1), (1, 0), (0, 1)], true).unwrap();
        assert_eq!(t.degrees(), &[1, 1, 0]);
        let d = GraphTopology::build(3, &[(0, 2), (1, 2)], false).unwrap();
        assert_eq!(d.neighbors(2), &[0, 1]);
        assert_eq!(d.degrees(), &[0, 0, 2]);
        d.validate().unwrap();
    }

    #[test]
    fn union_shifts_ids() {
        let a = GraphTopology::build(2, &[(0, 1)], true).unwrap();
        let b = GraphTopology::build(3, &[(0, 2)], true).unwrap();
        let u = GraphTopology::disjoint_union(&[&a, &b]);
        assert_eq!(u.num_nodes(), 5);
        assert_eq!(u.neighbors(2), &[4]);
        assert_eq!(u.neighbors(4), &[2]);
        u.validate().unwrap();
    }
}
