//! Radius graphs, edge embeddings and the message-passing network built from EST layers.

mod embed;
mod graph;
mod network;
mod xyz;

pub use embed::{cosine_cutoff, radial_basis, sh_edge_embedding};
pub use graph::{build_radius_graph, Edge, PointCloudGraph};
pub use network::{build_transform, forward_network, EstNetwork, MessageBlock, ModelConfig, NetworkOutput, NetworkTrace, UpdateBlock};
pub use xyz::{atomic_number, parse_xyz, read_xyz, read_xyz_dir, Molecule, ELEMENTS};
