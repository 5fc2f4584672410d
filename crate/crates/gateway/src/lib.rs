//! Simplified single-port control plane: a chat/task channel, an external
//! planner adapter, and device-node capability registration multiplexed
//! over one newline-delimited framed protocol.

pub mod client;
pub mod frame;
pub mod server;

pub use client::Client;
pub use frame::{decode_frame, encode_frame, CapDescriptor, Frame, FrameBody, FrameError};
pub use server::Gateway;
