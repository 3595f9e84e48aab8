//! Client-aided evaluation of comparison ops. The server ships ciphertexts
//! to the key-holding client, which decrypts, applies the op slot-wise,
//! re-encrypts at the fresh level and sends the result back.
//!
//! Messages (`HETP`, little-endian) are framed on the stream by a u64
//! length prefix:
//!
//! ```text
//! magic "HETP" | version u16 | kind u8 | op u8 | bound f64 |
//! kernel u32x2 | stride u32x2 | padding u32x2 | shape C,H,W u32x3 |
//! count u32 | payload_len u64 | payload
//! ```
//!
//! A request/response payload is `count` concatenated CKRS ciphertexts; an
//! error payload is a u16 code followed by UTF-8 text.

mod message;
mod service;
mod transport;

pub use message::{ClientOp, ErrorCode, MessageKind, ProtocolMessage, MESSAGE_HEADER_LEN, PROTOCOL_MAGIC, PROTOCOL_VERSION};
pub use service::{apply_op, ClientService};
pub use transport::{
    delegate, read_frame, serve, spawn_server, write_frame, Delegate, LoopbackDelegate, ServerHandle, TcpDelegate,
    MAX_FRAME_LEN,
};
