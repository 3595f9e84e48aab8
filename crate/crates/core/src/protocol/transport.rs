use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::message::{ClientOp, ErrorCode, MessageKind, ProtocolMessage};
use super::service::ClientService;
use crate::ckks::{Ciphertext, CkksContext};
use crate::error::{Error, Result};
use crate::memsim::record::AccessKind;
use crate::par;

/// Frames larger than this are refused before allocation.
pub const MAX_FRAME_LEN: u64 = 1 << 36;

pub fn write_frame<W: Write>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 8];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u64::from_le_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(Error::Protocol { code: ErrorCode::Malformed as u16, message: format!("frame of {len} bytes") });
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// Sends one request and returns the peer's reply.
pub trait Delegate: Send + Sync {
    fn round_trip(&self, request: &ProtocolMessage) -> Result<ProtocolMessage>;
}

/// In-process transport that still goes through the byte format.
pub struct LoopbackDelegate {
    service: Arc<ClientService>,
}

impl LoopbackDelegate {
    pub fn new(service: Arc<ClientService>) -> Self {
        LoopbackDelegate { service }
    }
}

impl Delegate for LoopbackDelegate {
    fn round_trip(&self, request: &ProtocolMessage) -> Result<ProtocolMessage> {
        let reply = self.service.handle_bytes(&request.to_bytes());
        ProtocolMessage::from_bytes(&reply).map_err(|(code, message)| Error::Protocol { code: code as u16, message })
    }
}

/// TCP client keeping idle connections for reuse. Transport failures are
/// reported immediately without retrying.
pub struct TcpDelegate {
    addr: SocketAddr,
    idle: Mutex<Vec<TcpStream>>,
}

impl TcpDelegate {
    pub fn new(endpoint: impl ToSocketAddrs) -> Result<Self> {
        let addr = endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Config("endpoint resolves to no address".into()))?;
        Ok(TcpDelegate { addr, idle: Mutex::new(Vec::new()) })
    }
}

impl Delegate for TcpDelegate {
    fn round_trip(&self, request: &ProtocolMessage) -> Result<ProtocolMessage> {
        let pooled = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let mut stream = match pooled {
            Some(s) => s,
            None => {
                let s = TcpStream::connect(self.addr)?;
                s.set_nodelay(true)?;
                s
            }
        };
        write_frame(&mut stream, &request.to_bytes())?;
        let reply = read_frame(&mut stream)?.ok_or_else(|| Error::Protocol {
            code: ErrorCode::Internal as u16,
            message: "client closed the connection".into(),
        })?;
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).push(stream);
        ProtocolMessage::from_bytes(&reply).map_err(|(code, message)| Error::Protocol { code: code as u16, message })
    }
}

fn handle_connection(mut stream: TcpStream, service: &ClientService) -> Result<()> {
    stream.set_nodelay(true)?;
    while let Some(frame) = read_frame(&mut stream)? {
        write_frame(&mut stream, &service.handle_bytes(&frame))?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener, service: Arc<ClientService>) -> Result<()> {
    for conn in listener.incoming() {
        let stream = conn?;
        let service = service.clone();
        std::thread::spawn(move || {
            let _ = handle_connection(stream, &service);
        });
    }
    Ok(())
}

/// A background server that stops accepting on [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

pub fn spawn_server(endpoint: impl ToSocketAddrs, service: Arc<ClientService>) -> Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            if let Ok(stream) = conn {
                let service = service.clone();
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &service);
                });
            }
        }
    });
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}

/// Ships `inputs` (a `shape` tensor) to the client for `op` and returns the
/// freshly encrypted outputs with their shape.
pub fn delegate(
    d: &dyn Delegate,
    ctx: &CkksContext,
    op: &ClientOp,
    shape: [u32; 3],
    inputs: &[Ciphertext],
) -> Result<([u32; 3], Vec<Ciphertext>)> {
    let expected_shape = op.output_shape(shape)?;
    for c in inputs {
        c.record_all(AccessKind::Load);
    }
    let payload: Vec<u8> = inputs.iter().flat_map(|c| ctx.serialize_ciphertext(c)).collect();
    let request = ProtocolMessage::new(MessageKind::Request, op, shape, inputs.len() as u32, payload);
    let reply = d.round_trip(&request)?;
    match reply.kind {
        MessageKind::Error => {
            let (code, message) = reply.error_info().unwrap_or((ErrorCode::Malformed as u16, "empty error".into()));
            return Err(Error::Protocol { code, message });
        }
        MessageKind::Request => {
            return Err(Error::Protocol { code: ErrorCode::Malformed as u16, message: "client sent a request".into() })
        }
        MessageKind::Response => {}
    }
    let count = expected_shape.iter().map(|&d| d as usize).product::<usize>();
    if reply.shape != expected_shape || reply.count as usize != count {
        return Err(Error::Protocol {
            code: ErrorCode::Malformed as u16,
            message: format!("client returned {} ciphertexts of shape {:?}, expected {expected_shape:?}", reply.count, reply.shape),
        });
    }
    if count == 0 {
        return Ok((expected_shape, Vec::new()));
    }
    if reply.payload.len() % count != 0 {
        return Err(Error::Format("response payload is not evenly divisible".into()));
    }
    let each = reply.payload.len() / count;
    let outputs = par::try_map(count, |i| ctx.deserialize_ciphertext(&reply.payload[i * each..(i + 1) * each]))?;
    for c in &outputs {
        if c.level() != ctx.max_level() {
            return Err(Error::LevelMismatch(ctx.max_level(), c.level()));
        }
    }
    for c in &outputs {
        c.record_all(AccessKind::Store);
    }
    Ok((expected_shape, outputs))
}
