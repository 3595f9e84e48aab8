//! Logical-address recording of the engine's buffer sweeps.
//!
//! Recording is per thread: [`start_recording`] installs a recorder on the
//! calling thread, homomorphic kernels report one event per limb sweep, and
//! [`finish_recording`] returns the trace. Buffers receive logical addresses
//! from a deterministic allocator (bump pointer with exact-size LIFO reuse), so
//! the same program produces the same trace on every run.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU16, AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Allocation granularity; matches the cache line.
const ALIGN: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AccessKind {
    Load = 0,
    Store = 1,
}

impl AccessKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(AccessKind::Load),
            1 => Some(AccessKind::Store),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub addr: u64,
    pub len: u32,
    pub kind: AccessKind,
    pub tag: u32,
}

/// Recorded events plus the size of the logical address space they live in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    pub address_space: u64,
    pub events: Vec<AccessEvent>,
}

impl AccessTrace {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }
}

struct Recorder {
    epoch: u16,
    next: u64,
    free: BTreeMap<u64, Vec<u64>>,
    live: HashMap<u64, u64>,
    events: Vec<AccessEvent>,
    tag: u32,
}

impl Recorder {
    fn alloc(&mut self, bytes: u64) -> u64 {
        let size = bytes.div_ceil(ALIGN) * ALIGN;
        let addr = match self.free.get_mut(&size).and_then(|v| v.pop()) {
            Some(a) => a,
            None => {
                let a = self.next;
                self.next += size;
                a
            }
        };
        self.live.insert(addr, size);
        addr
    }

    fn free(&mut self, addr: u64) {
        if let Some(size) = self.live.remove(&addr) {
            self.free.entry(size).or_default().push(addr);
        }
    }
}

thread_local! {
    static RECORDER: RefCell<Option<Recorder>> = const { RefCell::new(None) };
}

static EPOCH: AtomicU16 = AtomicU16::new(1);

const ADDR_BITS: u32 = 48;
const ADDR_MASK: u64 = (1 << ADDR_BITS) - 1;
const UNASSIGNED: u64 = u64::MAX;

/// Starts recording on the current thread.
pub fn start_recording() -> Result<()> {
    RECORDER.with(|r| {
        let mut r = r.borrow_mut();
        if r.is_some() {
            return Err(Error::Trace("recording already active on this thread".into()));
        }
        let mut epoch = EPOCH.fetch_add(1, Ordering::Relaxed);
        if epoch == 0 {
            epoch = EPOCH.fetch_add(1, Ordering::Relaxed);
        }
        *r = Some(Recorder {
            epoch,
            next: 0,
            free: BTreeMap::new(),
            live: HashMap::new(),
            events: Vec::new(),
            tag: 0,
        });
        Ok(())
    })
}

/// Stops recording and returns everything captured since [`start_recording`].
pub fn finish_recording() -> Result<AccessTrace> {
    RECORDER.with(|r| {
        let rec = r.borrow_mut().take().ok_or_else(|| Error::Trace("no active recording".into()))?;
        Ok(AccessTrace { address_space: rec.next, events: rec.events })
    })
}

pub fn is_recording() -> bool {
    RECORDER.with(|r| r.borrow().is_some())
}

/// Attributes subsequent events to `tag`.
pub fn set_tag(tag: u32) {
    RECORDER.with(|r| {
        if let Some(rec) = r.borrow_mut().as_mut() {
            rec.tag = tag;
        }
    });
}

/// Logical address of one engine buffer, assigned on first recorded access.
#[derive(Debug)]
pub struct Region(AtomicU64);

impl Region {
    pub const fn new() -> Self {
        Region(AtomicU64::new(UNASSIGNED))
    }

    fn address(&self, rec: &mut Recorder, bytes: u64) -> u64 {
        let packed = self.0.load(Ordering::Relaxed);
        if packed != UNASSIGNED && (packed >> ADDR_BITS) as u16 == rec.epoch {
            return packed & ADDR_MASK;
        }
        let addr = rec.alloc(bytes);
        self.0.store(((rec.epoch as u64) << ADDR_BITS) | addr, Ordering::Relaxed);
        addr
    }

    /// Assigns the buffer an address without recording an access, for data
    /// that is already resident when recording starts.
    pub fn place(&self, bytes: u64) {
        RECORDER.with(|r| {
            if let Some(rec) = r.borrow_mut().as_mut() {
                self.address(rec, bytes);
            }
        });
    }

    /// Records an access of `len` bytes at `offset` within a buffer of
    /// `bytes` total. No-op unless recording is active.
    pub fn sweep(&self, bytes: u64, offset: u64, len: u64, kind: AccessKind) {
        debug_assert!(offset + len <= bytes && len > 0);
        RECORDER.with(|r| {
            if let Some(rec) = r.borrow_mut().as_mut() {
                let base = self.address(rec, bytes);
                let tag = rec.tag;
                rec.events.push(AccessEvent { addr: base + offset, len: len as u32, kind, tag });
            }
        });
    }
}

impl Default for Region {
    fn default() -> Self {
        Region::new()
    }
}

impl Clone for Region {
    /// A copy of a buffer lives at a different address.
    fn clone(&self) -> Self {
        Region::new()
    }
}

impl Drop for Region {
    fn drop(&mut self) {
        let packed = *self.0.get_mut();
        if packed == UNASSIGNED {
            return;
        }
        let _ = RECORDER.try_with(|r| {
            if let Ok(mut guard) = r.try_borrow_mut() {
                if let Some(rec) = guard.as_mut() {
                    if (packed >> ADDR_BITS) as u16 == rec.epoch {
                        rec.free(packed & ADDR_MASK);
                    }
                }
            }
        });
    }
}
