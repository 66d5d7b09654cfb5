use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GraphError, NodeId, Result, TextGraph};

pub const META_FILE: &str = "meta.json";
pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.f32le";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub emb_dim: usize,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub directed: bool,
    /// Name of the sentence encoder that produced `embeddings.f32le`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
}

/// One line of `nodes.jsonl`. Field order is the on-disk order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub label: Option<i64>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitFile {
    pub train_pool: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl SplitFile {
    /// Reads `splits.json` if the dataset ships one.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(SPLITS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path)?;
        Ok(Some(serde_json::from_str(&raw)?))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(SPLITS_FILE), serde_json::to_string(self)?)?;
        Ok(())
    }
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(GraphError::MissingFile(path))
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<TextGraph> {
    let dir = dir.as_ref();
    let meta_path = require(dir, META_FILE)?;
    let nodes_path = require(dir, NODES_FILE)?;
    let edges_path = require(dir, EDGES_FILE)?;
    let emb_path = require(dir, EMBEDDINGS_FILE)?;

    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    if meta.class_names.len() != meta.num_classes {
        return Err(GraphError::ShapeMismatch(format!(
            "num_classes = {} but {} class names",
            meta.num_classes,
            meta.class_names.len()
        )));
    }
    if meta.directed {
        log::warn!("dataset declares directed edges; symmetrizing");
    }

    let mut labels = Vec::with_capacity(meta.num_nodes);
    let mut texts = Vec::with_capacity(meta.num_nodes);
    let reader = BufReader::new(fs::File::open(&nodes_path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
            path: nodes_path.clone(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if rec.id != labels.len() {
            return Err(GraphError::Parse {
                path: nodes_path.clone(),
                line: lineno + 1,
                msg: format!("expected id {}, found {}", labels.len(), rec.id),
            });
        }
        let label = match rec.label {
            None => None,
            Some(l) if l >= 0 && (l as usize) < meta.num_classes => Some(l as usize),
            Some(l) => {
                return Err(GraphError::BadLabel {
                    node: rec.id,
                    label: l,
                    num_classes: meta.num_classes,
                })
            }
        };
        labels.push(label);
        texts.push(rec.text);
    }
    if labels.len() != meta.num_nodes {
        return Err(GraphError::ShapeMismatch(format!(
            "meta declares {} nodes, nodes.jsonl has {}",
            meta.num_nodes,
            labels.len()
        )));
    }

    let mut edges = Vec::new();
    let reader = BufReader::new(fs::File::open(&edges_path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| GraphError::Parse {
            path: edges_path.clone(),
            line: lineno + 1,
            msg,
        };
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected \"src,dst\", got {line:?}")))?;
        let src: usize = a.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let dst: usize = b.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        if src >= meta.num_nodes || dst >= meta.num_nodes {
            return Err(GraphError::DanglingEdge {
                src,
                dst,
                num_nodes: meta.num_nodes,
            });
        }
        edges.push((src, dst));
    }

    let bytes = fs::read(&emb_path)?;
    let expected = meta.num_nodes * meta.emb_dim * 4;
    if bytes.len() != expected {
        return Err(GraphError::ShapeMismatch(format!(
            "embeddings.f32le has {} bytes, expected {} ({} x {} x 4)",
            bytes.len(),
            expected,
            meta.num_nodes,
            meta.emb_dim
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let embeddings = Array2::from_shape_vec((meta.num_nodes, meta.emb_dim), values)
        .map_err(|e| GraphError::ShapeMismatch(e.to_string()))?;

    Ok(
        TextGraph::new(meta.class_names, edges, embeddings, labels, texts)?
            .with_encoder(meta.encoder),
    )
}

/// Writes the four dataset files. Embeddings are narrowed to f32.
pub fn write_dataset(g: &TextGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        num_nodes: g.num_nodes(),
        num_classes: g.num_classes(),
        emb_dim: g.emb_dim(),
        class_names: g.class_names().to_vec(),
        directed: false,
        encoder: g.encoder().map(str::to_owned),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;

    let mut nodes = BufWriter::new(fs::File::create(dir.join(NODES_FILE))?);
    for v in 0..g.num_nodes() {
        let rec = NodeRecord {
            id: v,
            label: g.label(v).map(|l| l as i64),
            text: g.text(v).map(str::to_owned),
        };
        serde_json::to_writer(&mut nodes, &rec)?;
        nodes.write_all(b"\n")?;
    }
    nodes.flush()?;

    let mut edges = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    for &(a, b) in g.edges() {
        writeln!(edges, "{a},{b}")?;
    }
    edges.flush()?;

    let mut emb = BufWriter::new(fs::File::create(dir.join(EMBEDDINGS_FILE))?);
    for x in g.embeddings().iter() {
        emb.write_all(&(*x as f32).to_le_bytes())?;
    }
    emb.flush()?;
    Ok(())
}
