//! Multimodal spatiotemporal forecaster: closeness and period branches of
//! ST-blocks (gated traffic/text attention fused with GCN and CNN spatial
//! streams) followed by a linear output head.

mod config;
pub mod layers;
mod net;
mod params;

pub use config::{HeadKind, ModelConfig};
pub use net::{
    apply_head, body_graph, forward_graph, predict, BodyPass, HeadBatch, HeadInputs, HeadLoss, Leaves, Mode, ModelLoss,
    WindowBatch,
};
pub use params::{body_slots, head_slots, load_checkpoint, save_checkpoint, ParameterSet, BRANCHES};
