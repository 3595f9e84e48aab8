use std::collections::BTreeMap;
use std::fmt::Write;

use super::sim::{MemSimReport, TagStats};
use super::{tag_kind, OpKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub function: String,
    pub stats: TagStats,
    /// Percent of all DRAM-hit loads.
    pub dram_share: f64,
    /// Percent of all PMem loads.
    pub pmem_share: f64,
}

impl ReportRow {
    pub fn ratio(&self) -> f64 {
        self.stats.ratio()
    }
}

/// Per-op-kind load counts; `totals` is the column sum of `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub totals: ReportRow,
}

fn share(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn fmt_ratio(r: f64) -> String {
    if r.is_infinite() {
        "inf".to_string()
    } else {
        format!("{r:.2}")
    }
}

pub fn report_table(report: &MemSimReport) -> ReportTable {
    let mut by_kind: BTreeMap<OpKind, TagStats> = BTreeMap::new();
    for (&tag, s) in &report.per_tag {
        let e = by_kind.entry(tag_kind(tag)).or_default();
        e.dram_loads += s.dram_loads;
        e.pmem_loads += s.pmem_loads;
        e.stores += s.stores;
        e.media_read_bytes += s.media_read_bytes;
        e.media_write_bytes += s.media_write_bytes;
    }
    let total = report.totals();
    let rows = by_kind
        .into_iter()
        .map(|(kind, stats)| ReportRow {
            function: kind.name().to_string(),
            stats,
            dram_share: share(stats.dram_loads, total.dram_loads),
            pmem_share: share(stats.pmem_loads, total.pmem_loads),
        })
        .collect();
    let totals = ReportRow {
        function: "Total".to_string(),
        stats: total,
        dram_share: if total.dram_loads > 0 { 100.0 } else { 0.0 },
        pmem_share: if total.pmem_loads > 0 { 100.0 } else { 0.0 },
    };
    ReportTable { rows, totals }
}

impl ReportTable {
    pub fn row(&self, function: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.function == function)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,dram_loads,dram_share_pct,pmem_loads,pmem_share_pct,stores,ratio\n");
        for r in self.rows.iter().chain(std::iter::once(&self.totals)) {
            let _ = writeln!(
                out,
                "{},{},{:.2},{},{:.2},{},{}",
                r.function,
                r.stats.dram_loads,
                r.dram_share,
                r.stats.pmem_loads,
                r.pmem_share,
                r.stats.stores,
                fmt_ratio(r.ratio())
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<12} {:>14} {:>8} {:>14} {:>8} {:>10}\n",
            "Function", "DRAM (K-Loads)", "%", "PMem (K-Loads)", "%", "Ratio"
        );
        let all: Vec<&ReportRow> = self.rows.iter().chain(std::iter::once(&self.totals)).collect();
        for (i, r) in all.iter().enumerate() {
            if i + 1 == all.len() {
                out.push_str(&"-".repeat(71));
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "{:<12} {:>14.1} {:>8.2} {:>14.1} {:>8.2} {:>10}",
                r.function,
                r.stats.dram_loads as f64 / 1e3,
                r.dram_share,
                r.stats.pmem_loads as f64 / 1e3,
                r.pmem_share,
                fmt_ratio(r.ratio())
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memsim::{make_tag, simulate, AccessEvent, AccessKind, AccessTrace, MemSimConfig};

    #[test]
    fn single_tag_gives_one_full_row() {
        let t = AccessTrace {
            address_space: 4096,
            events: vec![AccessEvent { addr: 0, len: 4096, kind: AccessKind::Load, tag: make_tag(3, OpKind::Add) }; 2],
        };
        let table = report_table(&simulate(&t, &MemSimConfig::with_capacity(8192)).unwrap());
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.function, "Add");
        assert_eq!((row.dram_share, row.pmem_share), (100.0, 100.0));
        assert_eq!(row.ratio(), 1.0);
        assert!(table.to_csv().lines().nth(1).unwrap().starts_with("Add,64,100.00,64,100.00,0,1.00"));
    }

    #[test]
    fn totals_are_column_sums() {
        let mut events = Vec::new();
        for (i, kind) in [OpKind::Convolution, OpKind::Add, OpKind::Multiply, OpKind::Convolution].iter().enumerate() {
            events.push(AccessEvent { addr: (i as u64 % 2) * 2048, len: 2048, kind: AccessKind::Load, tag: make_tag(i as u32, *kind) });
            events.push(AccessEvent { addr: 4096, len: 512, kind: AccessKind::Store, tag: make_tag(i as u32, *kind) });
        }
        let t = AccessTrace { address_space: 8192, events };
        let table = report_table(&simulate(&t, &MemSimConfig::with_capacity(2048)).unwrap());
        assert_eq!(table.rows.len(), 3);
        let sum = |f: fn(&ReportRow) -> u64| table.rows.iter().map(f).sum::<u64>();
        assert_eq!(sum(|r| r.stats.dram_loads), table.totals.stats.dram_loads);
        assert_eq!(sum(|r| r.stats.pmem_loads), table.totals.stats.pmem_loads);
        assert_eq!(sum(|r| r.stats.stores), table.totals.stats.stores);
        let shares: f64 = table.rows.iter().map(|r| r.pmem_share).sum();
        assert!((shares - 100.0).abs() < 1e-9);
        let text = table.to_text();
        assert!(text.lines().last().unwrap().starts_with("Total"));
        assert_eq!(table.to_csv().lines().count(), 5);
    }
}
