//! Few-shot node classification: a GCN student trained on a handful of
//! labels, distilled from an LLM teacher's soft labels and rationales, with a
//! graph-aware active selector choosing which nodes to send to the teacher.

pub mod active;
pub mod gnn;
pub mod graph;
mod optim;
pub mod pipeline;
pub mod teacher;
