use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::record::{AccessKind, AccessTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemSimConfig {
    pub capacity: u64,
    pub line_size: u64,
    pub block_size: u64,
    pub prefetch_depth: usize,
    /// Prefetch-buffer lookups per timeline sample.
    pub window: u64,
}

impl Default for MemSimConfig {
    fn default() -> Self {
        MemSimConfig { capacity: 32 << 20, line_size: 64, block_size: 256, prefetch_depth: 1, window: 4096 }
    }
}

impl MemSimConfig {
    pub fn with_capacity(capacity: u64) -> Self {
        MemSimConfig { capacity, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.line_size == 0 || self.capacity == 0 || !self.capacity.is_multiple_of(self.line_size) {
            return Err(Error::Config(format!(
                "cache capacity {} must be a positive multiple of the line size {}",
                self.capacity, self.line_size
            )));
        }
        if self.block_size == 0 || !self.block_size.is_multiple_of(self.line_size) {
            return Err(Error::Config(format!(
                "media block {} must be a positive multiple of the line size {}",
                self.block_size, self.line_size
            )));
        }
        if self.prefetch_depth == 0 || self.window == 0 {
            return Err(Error::Config("prefetch depth and window must be positive".into()));
        }
        Ok(())
    }
}

/// Line-granular counters for one op tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStats {
    pub dram_loads: u64,
    pub pmem_loads: u64,
    pub stores: u64,
    pub media_read_bytes: u64,
    pub media_write_bytes: u64,
}

impl TagStats {
    fn merge(&mut self, o: &TagStats) {
        self.dram_loads += o.dram_loads;
        self.pmem_loads += o.pmem_loads;
        self.stores += o.stores;
        self.media_read_bytes += o.media_read_bytes;
        self.media_write_bytes += o.media_write_bytes;
    }

    /// DRAM loads per PMem load; infinite when nothing came from PMem.
    pub fn ratio(&self) -> f64 {
        if self.pmem_loads == 0 {
            f64::INFINITY
        } else {
            self.dram_loads as f64 / self.pmem_loads as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemSimReport {
    pub config: MemSimConfig,
    pub per_tag: BTreeMap<u32, TagStats>,
    pub prefetch_hits: u64,
    pub prefetch_lookups: u64,
    /// Prefetch hit ratio per window of lookups; the last sample may cover
    /// a partial window.
    pub timeline: Vec<f64>,
}

impl MemSimReport {
    pub fn totals(&self) -> TagStats {
        let mut t = TagStats::default();
        for s in self.per_tag.values() {
            t.merge(s);
        }
        t
    }

    pub fn prefetch_hit_ratio(&self) -> f64 {
        if self.prefetch_lookups == 0 {
            0.0
        } else {
            self.prefetch_hits as f64 / self.prefetch_lookups as f64
        }
    }

    pub fn media_read_bytes(&self) -> u64 {
        self.totals().media_read_bytes
    }

    pub fn media_write_bytes(&self) -> u64 {
        self.totals().media_write_bytes
    }
}

const EMPTY: u64 = u64::MAX;

struct Machine<'a> {
    cfg: &'a MemSimConfig,
    sets: u64,
    lines: Vec<u64>,
    dirty: Vec<bool>,
    buffer: VecDeque<u64>,
    hits: u64,
    lookups: u64,
    window_hits: u64,
    window_lookups: u64,
    timeline: Vec<f64>,
}

impl Machine<'_> {
    /// Brings a missing line in from media, returning true on a prefetch hit.
    fn fill(&mut self, line: u64, stats: &mut TagStats) {
        let block = line * self.cfg.line_size / self.cfg.block_size;
        self.lookups += 1;
        self.window_lookups += 1;
        if self.buffer.contains(&block) {
            self.hits += 1;
            self.window_hits += 1;
        } else {
            stats.media_read_bytes += self.cfg.block_size;
            if self.buffer.len() == self.cfg.prefetch_depth {
                self.buffer.pop_front();
            }
            self.buffer.push_back(block);
        }
        if self.window_lookups == self.cfg.window {
            self.timeline.push(self.window_hits as f64 / self.window_lookups as f64);
            self.window_hits = 0;
            self.window_lookups = 0;
        }
    }

    fn access(&mut self, line: u64, kind: AccessKind, stats: &mut TagStats) {
        let set = (line % self.sets) as usize;
        let hit = self.lines[set] == line;
        if !hit {
            if self.lines[set] != EMPTY && self.dirty[set] {
                stats.media_write_bytes += self.cfg.line_size;
            }
            self.lines[set] = line;
            self.dirty[set] = false;
            self.fill(line, stats);
        }
        match kind {
            AccessKind::Load if hit => stats.dram_loads += 1,
            AccessKind::Load => stats.pmem_loads += 1,
            AccessKind::Store => {
                stats.stores += 1;
                self.dirty[set] = true;
            }
        }
    }
}

/// Replays `trace` line by line through the cache model.
pub fn simulate(trace: &AccessTrace, cfg: &MemSimConfig) -> Result<MemSimReport> {
    cfg.validate()?;
    let sets = cfg.capacity / cfg.line_size;
    let mut m = Machine {
        cfg,
        sets,
        lines: vec![EMPTY; sets as usize],
        dirty: vec![false; sets as usize],
        buffer: VecDeque::with_capacity(cfg.prefetch_depth),
        hits: 0,
        lookups: 0,
        window_hits: 0,
        window_lookups: 0,
        timeline: Vec::new(),
    };
    let mut per_tag: BTreeMap<u32, TagStats> = BTreeMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.len == 0 || e.addr.checked_add(e.len as u64).is_none_or(|end| end > trace.address_space) {
            return Err(Error::Trace(format!(
                "event {i} [{:#x}, +{}) lies outside the {}-byte address space",
                e.addr, e.len, trace.address_space
            )));
        }
        let stats = per_tag.entry(e.tag).or_default();
        let first = e.addr / cfg.line_size;
        let last = (e.addr + e.len as u64 - 1) / cfg.line_size;
        for line in first..=last {
            m.access(line, e.kind, stats);
        }
    }
    if m.window_lookups > 0 {
        m.timeline.push(m.window_hits as f64 / m.window_lookups as f64);
    }
    Ok(MemSimReport {
        config: cfg.clone(),
        per_tag,
        prefetch_hits: m.hits,
        prefetch_lookups: m.lookups,
        timeline: m.timeline,
    })
}
