use super::GraphTopology;
use crate::error::{Error, Result};

/// The line graph over `endpoints`: one vertex per edge, two edges adjacent
/// when they share at least one endpoint.
pub fn line_graph(num_nodes: usize, endpoints: &[(usize, usize)]) -> Result<GraphTopology> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    for (e, &(a, b)) in endpoints.iter().enumerate() {
        if a >= num_nodes || b >= num_nodes {
            return Err(Error::Graph(format!(
                "edge {e} ({a}, {b}) out of range for {num_nodes} nodes"
            )));
        }
        incident[a].push(e);
        if b != a {
            incident[b].push(e);
        }
    }
    let lists = endpoints
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            incident[a]
                .iter()
                .chain(&incident[b])
                .copied()
                .filter(|&f| f != e)
                .collect()
        })
        .collect();
    Ok(GraphTopology::from_lists(lists, true))
}
