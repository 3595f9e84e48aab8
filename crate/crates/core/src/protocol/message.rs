use crate::error::{Error, Result};

pub const PROTOCOL_MAGIC: [u8; 4] = *b"HETP";
pub const PROTOCOL_VERSION: u16 = 1;
pub const MESSAGE_HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Request = 1,
    Response = 2,
    Error = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    Malformed = 1,
    UnsupportedVersion = 2,
    ContextMismatch = 3,
    LevelMismatch = 4,
    UnsupportedOp = 5,
    Internal = 6,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        use ErrorCode::*;
        [Malformed, UnsupportedVersion, ContextMismatch, LevelMismatch, UnsupportedOp, Internal]
            .into_iter()
            .find(|c| *c as u16 == v)
    }
}

/// Comparison op evaluated by the client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientOp {
    BoundedRelu { bound: f64 },
    Relu,
    MaxPool { kernel: [u32; 2], stride: [u32; 2], padding: [u32; 2] },
}

impl ClientOp {
    pub const BOUNDED_RELU: u8 = 1;
    pub const RELU: u8 = 2;
    pub const MAXPOOL: u8 = 3;

    pub fn code(&self) -> u8 {
        match self {
            ClientOp::BoundedRelu { .. } => Self::BOUNDED_RELU,
            ClientOp::Relu => Self::RELU,
            ClientOp::MaxPool { .. } => Self::MAXPOOL,
        }
    }

    /// Output `(C, H, W)` for an input of `shape`.
    pub fn output_shape(&self, shape: [u32; 3]) -> Result<[u32; 3]> {
        match *self {
            ClientOp::MaxPool { kernel, stride, padding } => {
                let mut out = [shape[0], 0, 0];
                for d in 0..2 {
                    let padded = shape[d + 1] as u64 + 2 * padding[d] as u64;
                    if kernel[d] == 0 || stride[d] == 0 || padded < kernel[d] as u64 || padding[d] >= kernel[d] {
                        return Err(Error::Shape(format!(
                            "max pool kernel {kernel:?} stride {stride:?} padding {padding:?} does not fit {shape:?}"
                        )));
                    }
                    out[d + 1] = ((padded - kernel[d] as u64) / stride[d] as u64 + 1) as u32;
                }
                Ok(out)
            }
            _ => Ok(shape),
        }
    }
}

/// A decoded HETP message. Op fields are kept raw so that decoding then
/// encoding reproduces the original bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub op: u8,
    pub bound: f64,
    pub kernel: [u32; 2],
    pub stride: [u32; 2],
    pub padding: [u32; 2],
    pub shape: [u32; 3],
    pub count: u32,
    pub payload: Vec<u8>,
}

impl ProtocolMessage {
    pub fn new(kind: MessageKind, op: &ClientOp, shape: [u32; 3], count: u32, payload: Vec<u8>) -> Self {
        let (bound, kernel, stride, padding) = match *op {
            ClientOp::BoundedRelu { bound } => (bound, [0; 2], [0; 2], [0; 2]),
            ClientOp::Relu => (0.0, [0; 2], [0; 2], [0; 2]),
            ClientOp::MaxPool { kernel, stride, padding } => (0.0, kernel, stride, padding),
        };
        ProtocolMessage { kind, op: op.code(), bound, kernel, stride, padding, shape, count, payload }
    }

    pub fn error(code: ErrorCode, text: &str) -> Self {
        let mut payload = (code as u16).to_le_bytes().to_vec();
        payload.extend_from_slice(text.as_bytes());
        ProtocolMessage {
            kind: MessageKind::Error,
            op: 0,
            bound: 0.0,
            kernel: [0; 2],
            stride: [0; 2],
            padding: [0; 2],
            shape: [0; 3],
            count: 0,
            payload,
        }
    }

    pub fn client_op(&self) -> Option<ClientOp> {
        match self.op {
            ClientOp::BOUNDED_RELU if self.bound.is_finite() && self.bound >= 0.0 => {
                Some(ClientOp::BoundedRelu { bound: self.bound })
            }
            ClientOp::RELU => Some(ClientOp::Relu),
            ClientOp::MAXPOOL => Some(ClientOp::MaxPool { kernel: self.kernel, stride: self.stride, padding: self.padding }),
            _ => None,
        }
    }

    /// Code and text of an error message.
    pub fn error_info(&self) -> Option<(u16, String)> {
        if self.kind != MessageKind::Error || self.payload.len() < 2 {
            return None;
        }
        let code = u16::from_le_bytes([self.payload[0], self.payload[1]]);
        Some((code, String::from_utf8_lossy(&self.payload[2..]).into_owned()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MESSAGE_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&PROTOCOL_MAGIC);
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(self.op);
        out.extend_from_slice(&self.bound.to_le_bytes());
        for v in self.kernel.iter().chain(&self.stride).chain(&self.padding).chain(&self.shape) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Errors carry the code the service should answer with.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, (ErrorCode, String)> {
        let malformed = |m: String| (ErrorCode::Malformed, m);
        if bytes.len() < MESSAGE_HEADER_LEN {
            return Err(malformed(format!("message of {} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..4] != PROTOCOL_MAGIC {
            return Err(malformed("bad magic, expected HETP".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != PROTOCOL_VERSION {
            return Err((ErrorCode::UnsupportedVersion, format!("unsupported protocol version {version}")));
        }
        let kind = match bytes[6] {
            1 => MessageKind::Request,
            2 => MessageKind::Response,
            3 => MessageKind::Error,
            k => return Err(malformed(format!("unknown message kind {k}"))),
        };
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let payload_len = u64::from_le_bytes(bytes[56..64].try_into().unwrap());
        let actual = (bytes.len() - MESSAGE_HEADER_LEN) as u64;
        if payload_len != actual {
            return Err(malformed(format!("payload length field says {payload_len} bytes, message carries {actual}")));
        }
        Ok(ProtocolMessage {
            kind,
            op: bytes[7],
            bound: f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            kernel: [u32_at(16), u32_at(20)],
            stride: [u32_at(24), u32_at(28)],
            padding: [u32_at(32), u32_at(36)],
            shape: [u32_at(40), u32_at(44), u32_at(48)],
            count: u32_at(52),
            payload: bytes[MESSAGE_HEADER_LEN..].to_vec(),
        })
    }
}
