//! Stochastic block model graph generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Labels, LinkPair};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SbmTask {
    /// Label every node with its cluster. One seed node per cluster carries a
    /// one-hot cluster feature; every other node carries zeros.
    NodeCluster,
    /// Binary graph label: whether cluster 0 holds more than its even share
    /// of the nodes. Every node carries its one-hot cluster feature.
    GraphParity,
    /// Graph target: largest cluster size divided by node count.
    GraphRegression,
    /// Predict whether candidate node pairs are connected. Every node
    /// carries its one-hot cluster feature.
    Link,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_graphs: usize,
    pub nodes_min: usize,
    pub nodes_max: usize,
    pub num_clusters: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
    pub task: SbmTask,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            num_graphs: 200,
            nodes_min: 30,
            nodes_max: 50,
            num_clusters: 2,
            p_intra: 0.5,
            p_inter: 0.05,
            seed: 0,
            task: SbmTask::NodeCluster,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.p_intra) || !(0.0..=1.0).contains(&self.p_inter) {
            return bad("p-intra and p-inter must lie in [0, 1]".into());
        }
        if self.p_inter >= self.p_intra {
            return bad(format!(
                "p-inter ({}) must be below p-intra ({})",
                self.p_inter, self.p_intra
            ));
        }
        if self.num_clusters == 0 {
            return bad("clusters must be at least 1".into());
        }
        if self.nodes_min < self.num_clusters {
            return bad(format!(
                "nodes-min ({}) must be at least clusters ({})",
                self.nodes_min, self.num_clusters
            ));
        }
        if self.nodes_max < self.nodes_min {
            return bad("nodes-max must be at least nodes-min".into());
        }
        Ok(())
    }

    /// Node feature width of generated graphs.
    pub fn feature_dim(&self) -> usize {
        self.num_clusters
    }
}

/// Width of the constant edge feature attached to every generated edge.
pub const SBM_EDGE_FEATURE_DIM: usize = 1;

/// Generates `config.num_graphs` graphs. Graph `i` uses its own stream of
/// the master seed, so it does not depend on how many graphs precede it.
pub fn sbm_generate(config: &SbmConfig) -> Result<Vec<Graph>> {
    config.validate()?;
    (0..config.num_graphs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            generate_one(config, &mut rng)
        })
        .collect()
}

/// Cluster id of every node.
fn assign_clusters(config: &SbmConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let c = config.num_clusters;
    match config.task {
        SbmTask::NodeCluster | SbmTask::Link => {
            // contiguous, as balanced as possible
            (0..n).map(|i| i * c / n).collect()
        }
        SbmTask::GraphParity | SbmTask::GraphRegression => {
            let mut ids: Vec<usize> = (0..n)
                .map(|i| if i < c { i } else { rng.random_range(0..c) })
                .collect();
            ids.shuffle(rng);
            ids
        }
    }
}

fn generate_one(config: &SbmConfig, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = rng.random_range(config.nodes_min..=config.nodes_max);
    let c = config.num_clusters;
    let cluster = assign_clusters(config, n, rng);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if cluster[u] == cluster[v] {
                config.p_intra
            } else {
                config.p_inter
            };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let mut features = Tensor::zeros(n, c);
    let mut labels = Labels::default();
    let mut sizes = vec![0usize; c];
    for &k in &cluster {
        sizes[k] += 1;
    }
    match config.task {
        SbmTask::NodeCluster => {
            for k in 0..c {
                let members: Vec<usize> = (0..n).filter(|&v| cluster[v] == k).collect();
                let seed_node = members[rng.random_range(0..members.len())];
                features.set(seed_node, k, 1.0);
            }
            labels.node = Some(cluster.clone());
        }
        SbmTask::GraphParity => {
            one_hot_all(&mut features, &cluster);
            labels.graph_class = Some(usize::from(sizes[0] * c > n));
        }
        SbmTask::GraphRegression => {
            one_hot_all(&mut features, &cluster);
            labels.graph_target = Some(*sizes.iter().max().expect("clusters") as f64 / n as f64);
        }
        SbmTask::Link => {
            one_hot_all(&mut features, &cluster);
            labels.links = Some(sample_links(n, &edges, rng));
        }
    }

    let edge_features = Tensor::ones(edges.len(), SBM_EDGE_FEATURE_DIM);
    Graph::new(n, edges, features, Some(edge_features), labels)
}

fn one_hot_all(features: &mut Tensor, cluster: &[usize]) {
    for (v, &k) in cluster.iter().enumerate() {
        features.set(v, k, 1.0);
    }
}

/// Equal numbers of connected and unconnected pairs, capped by the smaller
/// population.
fn sample_links(n: usize, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<LinkPair> {
    let edge_set: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut non_edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .filter(|p| !edge_set.contains(p))
        .collect();
    let mut pos = edges.to_vec();
    pos.shuffle(rng);
    non_edges.shuffle(rng);
    let k = pos.len().min(non_edges.len()).min(n);
    let mut out: Vec<LinkPair> = pos[..k]
        .iter()
        .map(|&(u, v)| LinkPair { u, v, label: true })
        .chain(
            non_edges[..k]
                .iter()
                .map(|&(u, v)| LinkPair { u, v, label: false }),
        )
        .collect();
    out.shuffle(rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_probabilities_give_disjoint_cliques() {
        let cfg = SbmConfig {
            num_graphs: 1,
            nodes_min: 6,
            nodes_max: 6,
            num_clusters: 2,
            p_intra: 1.0,
            p_inter: 0.0,
            seed: 3,
            task: SbmTask::NodeCluster,
        };
        let g = &sbm_generate(&cfg).unwrap()[0];
        let mut edges = g.edges().to_vec();
        edges.sort_unstable();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(g.labels().node.as_deref(), Some(&[0, 0, 0, 1, 1, 1][..]));
        // one seed per cluster
        let hot: f64 = g.features().data().iter().sum();
        assert_eq!(hot, 2.0);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = SbmConfig {
            num_graphs: 5,
            seed: 7,
            ..SbmConfig::default()
        };
        assert_eq!(sbm_generate(&cfg).unwrap(), sbm_generate(&cfg).unwrap());
    }

    #[test]
    fn config_invariants_enforced() {
        let swapped = SbmConfig {
            p_intra: 0.1,
            p_inter: 0.5,
            ..SbmConfig::default()
        };
        assert!(sbm_generate(&swapped).is_err());
        let tiny = SbmConfig {
            nodes_min: 1,
            num_clusters: 2,
            ..SbmConfig::default()
        };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn intra_edge_fraction_matches_expectation() {
        let cfg = SbmConfig {
            num_graphs: 100,
            nodes_min: 30,
            nodes_max: 50,
            num_clusters: 2,
            p_intra: 0.9,
            p_inter: 0.1,
            seed: 19,
            task: SbmTask::NodeCluster,
        };
        let graphs = sbm_generate(&cfg).unwrap();
        let (mut intra, mut total, mut exp_intra, mut exp_total) = (0.0, 0.0, 0.0, 0.0);
        for g in &graphs {
            let labels = g.labels().node.as_ref().unwrap();
            for &(u, v) in g.edges() {
                total += 1.0;
                if labels[u] == labels[v] {
                    intra += 1.0;
                }
            }
            let n = g.num_nodes();
            let s0 = labels.iter().filter(|&&l| l == 0).count() as f64;
            let s1 = n as f64 - s0;
            let same = s0 * (s0 - 1.0) / 2.0 + s1 * (s1 - 1.0) / 2.0;
            let cross = s0 * s1;
            exp_intra += 0.9 * same;
            exp_total += 0.9 * same + 0.1 * cross;
        }
        let observed = intra / total;
        let expected = exp_intra / exp_total;
        assert!(
            (observed - expected).abs() / expected < 0.05,
            "{observed} vs {expected}"
        );
    }

    #[test]
    fn graph_tasks_carry_graph_labels() {
        for task in [
            SbmTask::GraphParity,
            SbmTask::GraphRegression,
            SbmTask::Link,
        ] {
            let cfg = SbmConfig {
                num_graphs: 3,
                nodes_min: 10,
                nodes_max: 12,
                num_clusters: 3,
                task,
                ..SbmConfig::default()
            };
            for g in sbm_generate(&cfg).unwrap() {
                let l = g.labels();
                match task {
                    SbmTask::GraphParity => assert!(l.graph_class.unwrap() <= 1),
                    SbmTask::GraphRegression => {
                        let t = l.graph_target.unwrap();
                        assert!(t > 0.0 && t <= 1.0);
                    }
                    _ => {
                        let links = l.links.as_ref().unwrap();
                        let pos = links.iter().filter(|p| p.label).count();
                        assert_eq!(pos * 2, links.len());
                        for p in links {
                            assert_eq!(g.topology().has_edge(p.u, p.v), p.label);
                        }
                    }
                }
                // every node is one-hot
                for r in 0..g.num_nodes() {
                    assert_eq!(g.features().row(r).iter().sum::<f64>(), 1.0);
                }
            }
        }
    }
}
