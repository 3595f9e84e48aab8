//! `HETR` trace files:
//!
//! ```text
//! magic "HETR" | version u16 | address_space u64 | count u64 |
//! count * (addr u64 | len u32 | kind u8 | tag u32)
//! ```
//!
//! little-endian throughout.

use std::io::{Read, Write};

use super::record::{AccessEvent, AccessKind, AccessTrace};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: [u8; 4] = *b"HETR";
pub const TRACE_VERSION: u16 = 1;
const RECORD_LEN: usize = 17;

impl AccessTrace {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = Vec::with_capacity(22);
        head.extend_from_slice(&TRACE_MAGIC);
        head.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        head.extend_from_slice(&self.address_space.to_le_bytes());
        head.extend_from_slice(&(self.events.len() as u64).to_le_bytes());
        w.write_all(&head)?;
        let mut buf = Vec::with_capacity(RECORD_LEN * 4096);
        for chunk in self.events.chunks(4096) {
            buf.clear();
            for e in chunk {
                buf.extend_from_slice(&e.addr.to_le_bytes());
                buf.extend_from_slice(&e.len.to_le_bytes());
                buf.push(e.kind as u8);
                buf.extend_from_slice(&e.tag.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + RECORD_LEN * self.events.len());
        self.write_to(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<AccessTrace> {
        let mut head = [0u8; 22];
        r.read_exact(&mut head).map_err(|_| Error::Format("truncated trace header".into()))?;
        if head[..4] != TRACE_MAGIC {
            return Err(Error::Format("bad magic, expected HETR".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != TRACE_VERSION {
            return Err(Error::Format(format!("unsupported HETR version {version}")));
        }
        let address_space = u64::from_le_bytes(head[6..14].try_into().unwrap());
        let count = u64::from_le_bytes(head[14..22].try_into().unwrap());
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() as u64 != count.saturating_mul(RECORD_LEN as u64) {
            return Err(Error::Format(format!("trace body is {} bytes for {count} events", body.len())));
        }
        let mut events = Vec::with_capacity(count as usize);
        for rec in body.chunks_exact(RECORD_LEN) {
            let kind = AccessKind::from_u8(rec[12]).ok_or_else(|| Error::Format(format!("bad access kind {}", rec[12])))?;
            events.push(AccessEvent {
                addr: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
                len: u32::from_le_bytes(rec[8..12].try_into().unwrap()),
                kind,
                tag: u32::from_le_bytes(rec[13..17].try_into().unwrap()),
            });
        }
        Ok(AccessTrace { address_space, events })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<AccessTrace> {
        Self::read_from(bytes)
    }
}
