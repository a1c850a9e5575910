//! The network as a layer DAG: construction, execution, summary and persistence.

pub mod archive;
pub mod blocks;
pub mod model;
pub mod node;
pub mod summary;
pub mod table;

pub use archive::{decode, encode, load_weights, save_weights, ArchiveLayout};
pub use model::{
    build_model, build_topology, default_class_names, ForwardCache, Gradients, ModelConfig,
    ModelGraph, NodeParams, DEFAULT_CLASS_NAMES, DEFAULT_DROPOUT, INPUT_SHAPE,
};
pub use node::{GraphBuilder, LayerKind, LayerNode, NodeActivation};
pub use summary::{group_thousands, summary, Summary, SummaryRow};
pub use table::{table_mismatches, TableRow, REFERENCE_ROWS, REFERENCE_TOTAL};
