//! Generates a small stochastic block model dataset for each task and
//! round-trips one split through the on-disk format.

use graphnorm::graph::{dataset_read, dataset_write, sbm_generate, SbmConfig, SbmTask, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for task in [
        SbmTask::NodeCluster,
        SbmTask::GraphParity,
        SbmTask::GraphRegression,
        SbmTask::Link,
    ] {
        let config = SbmConfig {
            num_graphs: 10,
            nodes_min: 8,
            nodes_max: 12,
            seed: 3,
            task,
            ..SbmConfig::default()
        };
        let graphs = sbm_generate(&config)?;
        let g = &graphs[0];
        println!(
            "{task:?}: first graph has {} nodes, {} edges, d = {}, labels {:?}",
            g.num_nodes(),
            g.edges().len(),
            g.feature_dim(),
            g.labels()
                .graph_class
                .map(|c| c as f64)
                .or(g.labels().graph_target),
        );
    }

    let graphs = sbm_generate(&SbmConfig {
        num_graphs: 10,
        ..SbmConfig::default()
    })?;
    let dir = std::env::temp_dir().join("graphnorm-example");
    std::fs::create_dir_all(&dir)?;
    let path = Split::Train.path(&dir, "sbm");
    dataset_write(&path, &graphs)?;
    let back = dataset_read(&path)?;
    println!(
        "wrote {} graphs to {}, read back identical: {}",
        graphs.len(),
        path.display(),
        back == graphs
    );
    Ok(())
}
