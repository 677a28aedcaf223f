//! Core building blocks of the PEEPLL event-pseudonymisation framework:
//! keyed crypto primitives, Bloom-filter secure indexes, 1-out-of-N oblivious
//! transfer, and the Depositor/PVault wire protocol.

pub mod crypto;
pub mod group;
pub mod ot;
pub mod protocol;
pub mod secure_index;
pub mod transport;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration or parameter.
    #[error("config: {0}")]
    Config(String),
    /// Input that violates a wire or serialization schema.
    #[error("malformed: {0}")]
    Malformed(String),
    /// Bytes that do not decode to a member of the configured group.
    #[error("invalid group element: {0}")]
    InvalidGroupElement(String),
    /// A peer broke the protocol contract.
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// The pseudonym mapping is full.
    #[error("mapping capacity exceeded")]
    Capacity,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// The peer hung up.
    #[error("channel closed")]
    ChannelClosed,
}
