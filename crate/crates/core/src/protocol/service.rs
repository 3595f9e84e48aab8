use std::hash::{DefaultHasher, Hasher};
use std::sync::Arc;
use std::time::Duration;

use super::message::{ClientOp, ErrorCode, MessageKind, ProtocolMessage};
use crate::ckks::{CkksContext, PublicKey, SecretKey, HEADER_LEN};
use crate::error::{Error, Result};
use crate::packing::element_rng;
use crate::par;

/// Applies `op` slot-wise. `inputs[i]` holds the decoded slots of grid
/// element `i` of a `(C, H, W)` tensor.
pub fn apply_op(op: &ClientOp, shape: [u32; 3], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    match *op {
        ClientOp::BoundedRelu { bound } => {
            Ok(inputs.iter().map(|v| v.iter().map(|&x| x.max(0.0).min(bound)).collect()).collect())
        }
        ClientOp::Relu => Ok(inputs.iter().map(|v| v.iter().map(|&x| x.max(0.0)).collect()).collect()),
        ClientOp::MaxPool { kernel, stride, padding } => {
            let out = op.output_shape(shape)?;
            let [c, h, w] = shape.map(|d| d as usize);
            if inputs.len() != c * h * w {
                return Err(Error::Shape(format!("{} inputs for tensor {shape:?}", inputs.len())));
            }
            let slots = inputs.first().map_or(0, |v| v.len());
            let (oh, ow) = (out[1] as usize, out[2] as usize);
            let mut result = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = vec![f64::NEG_INFINITY; slots];
                        for ky in 0..kernel[0] as usize {
                            for kx in 0..kernel[1] as usize {
                                let y = (oy * stride[0] as usize + ky).wrapping_sub(padding[0] as usize);
                                let x = (ox * stride[1] as usize + kx).wrapping_sub(padding[1] as usize);
                                if y >= h || x >= w {
                                    continue;
                                }
                                for (b, &v) in best.iter_mut().zip(&inputs[(ch * h + y) * w + x]) {
                                    *b = b.max(v);
                                }
                            }
                        }
                        result.push(best);
                    }
                }
            }
            Ok(result)
        }
    }
}

/// The key-holding side of the protocol.
pub struct ClientService {
    ctx: Arc<CkksContext>,
    sk: SecretKey,
    pk: PublicKey,
    seed: u64,
    latency: Duration,
    workers: usize,
}

impl ClientService {
    pub fn new(ctx: Arc<CkksContext>, sk: SecretKey, pk: PublicKey, seed: u64) -> Self {
        ClientService { ctx, sk, pk, seed, latency: Duration::ZERO, workers: 1 }
    }

    /// Artificial delay added to every request, standing in for a network.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn context(&self) -> &Arc<CkksContext> {
        &self.ctx
    }

    /// Answers one request; failures become ERROR messages.
    pub fn handle_bytes(&self, request: &[u8]) -> Vec<u8> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let reply = match ProtocolMessage::from_bytes(request) {
            Ok(msg) => self.handle(&msg).unwrap_or_else(|(code, text)| ProtocolMessage::error(code, &text)),
            Err((code, text)) => ProtocolMessage::error(code, &text),
        };
        reply.to_bytes()
    }

    fn handle(&self, msg: &ProtocolMessage) -> std::result::Result<ProtocolMessage, (ErrorCode, String)> {
        let malformed = |m: String| (ErrorCode::Malformed, m);
        if msg.kind != MessageKind::Request {
            return Err(malformed(format!("expected a request, got {:?}", msg.kind)));
        }
        let op = msg.client_op().ok_or((ErrorCode::UnsupportedOp, format!("unsupported op code {}", msg.op)))?;
        let count = msg.count as usize;
        let elements = msg.shape.iter().map(|&d| d as u64).product::<u64>();
        if elements != count as u64 {
            return Err(malformed(format!("shape {:?} does not hold {count} ciphertexts", msg.shape)));
        }
        let out_shape = op.output_shape(msg.shape).map_err(|e| malformed(e.to_string()))?;
        if count == 0 {
            if !msg.payload.is_empty() {
                return Err(malformed("non-empty payload for zero ciphertexts".into()));
            }
            return Ok(ProtocolMessage::new(MessageKind::Response, &op, out_shape, 0, Vec::new()));
        }
        if msg.payload.len() < HEADER_LEN {
            return Err(malformed("payload shorter than one ciphertext header".into()));
        }
        let level = msg.payload[11] as usize;
        let each = HEADER_LEN + 2 * (level + 1) * self.ctx.degree() * 8;
        if msg.payload.len() != count * each {
            return Err(malformed(format!(
                "payload is {} bytes, expected {count} ciphertexts of {each} bytes at level {level}",
                msg.payload.len()
            )));
        }
        let outcome = par::with_workers(self.workers, || -> Result<(usize, Vec<u8>)> {
            let slots = par::try_map(count, |i| {
                let ct = self.ctx.deserialize_ciphertext(&msg.payload[i * each..(i + 1) * each])?;
                if ct.level() != level {
                    return Err(Error::LevelMismatch(level, ct.level()));
                }
                self.ctx.decode(&self.ctx.decrypt(&self.sk, &ct)?)
            })?;
            let outputs = apply_op(&op, msg.shape, &slots)?;
            let mut h = DefaultHasher::new();
            h.write_u64(self.seed);
            h.write(&msg.to_bytes()[..super::MESSAGE_HEADER_LEN]);
            h.write(&msg.payload);
            let stream_seed = h.finish();
            let encrypted = par::try_map(outputs.len(), |i| {
                let pt = self.ctx.encode(&outputs[i], self.ctx.scale())?;
                let ct = self.ctx.encrypt(&self.pk, &pt, &mut element_rng(stream_seed, i))?;
                Ok::<_, Error>(self.ctx.serialize_ciphertext(&ct))
            })?;
            Ok((encrypted.len(), encrypted.concat()))
        });
        match outcome {
            Ok((n, payload)) => Ok(ProtocolMessage::new(MessageKind::Response, &op, out_shape, n as u32, payload)),
            Err(e) => Err(match e {
                Error::ContextMismatch(m) => (ErrorCode::ContextMismatch, m),
                Error::LevelMismatch(..) => (ErrorCode::LevelMismatch, e.to_string()),
                Error::Format(m) => (ErrorCode::Malformed, m),
                other => (ErrorCode::Internal, other.to_string()),
            }),
        }
    }
}
