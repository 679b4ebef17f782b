//! Graph topology, batching, the line graph, synthetic SBM data and dataset files.

mod batch;
#[allow(clippy::module_inception)]
mod graph;
mod io;
mod line;
mod sbm;
mod topology;

pub use batch::{BatchLabels, GraphBatch};
pub use graph::{Graph, Labels, LinkPair};
pub use io::{dataset_read, dataset_write, Split, DATASET_FORMAT, DATASET_VERSION};
pub use line::line_graph;
pub use sbm::{sbm_generate, SbmConfig, SbmTask, SBM_EDGE_FEATURE_DIM};
pub use topology::GraphTopology;
