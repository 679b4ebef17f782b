//! Line-delimited JSON dataset files.
//!
//! Line 0 is a header record `{"format", "version", "d", "d_edge"}`; each
//! following line holds one graph `{"n", "edges", "features",
//! "edge_features"?, "labels"}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Graph, Labels};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_FORMAT: &str = "graphnorm-graphs";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    d: usize,
    d_edge: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    n: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_features: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    labels: Labels,
}

/// Dataset split file names: `<name>.train.graphs` and so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn path(self, dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.{}.graphs", self.as_str()))
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

pub fn dataset_write(path: &Path, graphs: &[Graph]) -> Result<()> {
    let d = graphs.first().map_or(0, Graph::feature_dim);
    let d_edge = graphs.first().and_then(Graph::edge_feature_dim);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        d,
        d_edge,
    };
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for g in graphs {
        let record = Record {
            n: g.num_nodes(),
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
            features: g.features().to_rows(),
            edge_features: g.edge_features().map(Tensor::to_rows),
            labels: g.labels().clone(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn dataset_read(path: &Path) -> Result<Vec<Graph>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse = |record: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        record,
        detail,
    };
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse(0, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| parse(0, e.to_string()))?;
    if header.format != DATASET_FORMAT {
        return Err(parse(0, format!("unknown format {:?}", header.format)));
    }
    if header.version != DATASET_VERSION {
        return Err(parse(
            0,
            format!(
                "version {} unsupported, expected {DATASET_VERSION}",
                header.version
            ),
        ));
    }

    let mut graphs = Vec::new();
    for (i, line) in lines.enumerate() {
        let record_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse(record_no, e.to_string()))?;
        let features =
            Tensor::from_rows(&rec.features).map_err(|e| parse(record_no, e.to_string()))?;
        if rec.n > 0 && features.cols() != header.d {
            return Err(Error::Validation(format!(
                "{}: record {record_no}: feature dim {} does not match header d = {}",
                path.display(),
                features.cols(),
                header.d
            )));
        }
        let edge_features = match rec.edge_features {
            Some(rows) => {
                let t = Tensor::from_rows(&rows).map_err(|e| parse(record_no, e.to_string()))?;
                if !rows.is_empty() && Some(t.cols()) != header.d_edge {
                    return Err(Error::Validation(format!(
                        "{}: record {record_no}: edge feature dim {} does not match header {:?}",
                        path.display(),
                        t.cols(),
                        header.d_edge
                    )));
                }
                let cols = header.d_edge.unwrap_or(0);
                Some(if rows.is_empty() {
                    Tensor::zeros(0, cols)
                } else {
                    t
                })
            }
            None => None,
        };
        let features = if rec.n == 0 {
            Tensor::zeros(0, header.d)
        } else {
            features
        };
        let edges = rec.edges.iter().map(|&[u, v]| (u, v)).collect();
        let g = Graph::new(rec.n, edges, features, edge_features, rec.labels)
            .map_err(|e| parse(record_no, e.to_string()))?;
        graphs.push(g);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sbm_generate, SbmConfig, SbmTask};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.train.graphs");
        for task in [
            SbmTask::NodeCluster,
            SbmTask::GraphRegression,
            SbmTask::Link,
        ] {
            let mut graphs = sbm_generate(&SbmConfig {
                num_graphs: 4,
                nodes_min: 5,
                nodes_max: 9,
                task,
                ..SbmConfig::default()
            })
            .unwrap();
            // awkward floats must survive bit-exactly
            let mut f = graphs[0].features().clone();
            f.set(0, 0, 0.1 + 0.2);
            f.set(1, 1, -1.0e-300);
            let g0 = &graphs[0];
            graphs[0] = Graph::new(
                g0.num_nodes(),
                g0.edges().to_vec(),
                f,
                g0.edge_features().cloned(),
                g0.labels().clone(),
            )
            .unwrap();
            dataset_write(&path, &graphs).unwrap();
            assert_eq!(dataset_read(&path).unwrap(), graphs);
        }
    }

    #[test]
    fn truncated_file_reports_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.graphs");
        let graphs = sbm_generate(&SbmConfig {
            num_graphs: 3,
            ..SbmConfig::default()
        })
        .unwrap();
        dataset_write(&path, &graphs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 40]).unwrap();
        match dataset_read(&path) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn feature_dim_mismatch_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.graphs");
        std::fs::write(
            &path,
            concat!(
                r#"{"format":"graphnorm-graphs","version":1,"d":2,"d_edge":null}"#,
                "\n",
                r#"{"n":1,"edges":[],"features":[[1.0,2.0]]}"#,
                "\n",
                r#"{"n":1,"edges":[],"features":[[1.0,2.0,3.0]]}"#,
                "\n"
            ),
        )
        .unwrap();
        let err = dataset_read(&path).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("record 2")),
            "{err}"
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.graphs");
        std::fs::write(
            &path,
            r#"{"format":"graphnorm-graphs","version":9,"d":2,"d_edge":null}"#,
        )
        .unwrap();
        assert!(matches!(
            dataset_read(&path),
            Err(Error::Parse { record: 0, .. })
        ));
    }
}
