//! Access-trace recording and a two-tier Memory Mode simulator: a
//! direct-mapped write-back DRAM cache in front of persistent media that
//! transfers 256-byte blocks through a small prefetch buffer.

pub mod record;
mod report;
mod sim;
mod tracefile;

pub use record::{AccessEvent, AccessKind, AccessTrace};
pub use report::{report_table, ReportRow, ReportTable};
pub use sim::{simulate, MemSimConfig, MemSimReport, TagStats};

/// Operation kind carried in the low byte of an event tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum OpKind {
    Other = 0,
    Input = 1,
    Convolution = 2,
    Add = 3,
    Multiply = 4,
    AvgPool = 5,
    MaxPool = 6,
    BoundedRelu = 7,
    Concat = 8,
    Reshape = 9,
    Slice = 10,
    Constant = 11,
    Result = 12,
}

impl OpKind {
    pub const ALL: [OpKind; 13] = [
        OpKind::Other,
        OpKind::Input,
        OpKind::Convolution,
        OpKind::Add,
        OpKind::Multiply,
        OpKind::AvgPool,
        OpKind::MaxPool,
        OpKind::BoundedRelu,
        OpKind::Concat,
        OpKind::Reshape,
        OpKind::Slice,
        OpKind::Constant,
        OpKind::Result,
    ];

    pub fn from_u8(v: u8) -> OpKind {
        OpKind::ALL.get(v as usize).copied().unwrap_or(OpKind::Other)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Other => "Other",
            OpKind::Input => "Input",
            OpKind::Convolution => "Convolution",
            OpKind::Add => "Add",
            OpKind::Multiply => "Multiply",
            OpKind::AvgPool => "AvgPool",
            OpKind::MaxPool => "MaxPool",
            OpKind::BoundedRelu => "BoundedRelu",
            OpKind::Concat => "Concat",
            OpKind::Reshape => "Reshape",
            OpKind::Slice => "Slice",
            OpKind::Constant => "Constant",
            OpKind::Result => "Result",
        }
    }
}

/// `tag = node_id << 8 | op kind`.
pub fn make_tag(node_id: u32, kind: OpKind) -> u32 {
    (node_id << 8) | kind as u32
}

pub fn tag_node(tag: u32) -> u32 {
    tag >> 8
}

pub fn tag_kind(tag: u32) -> OpKind {
    OpKind::from_u8((tag & 0xff) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_round_trip() {
        for kind in OpKind::ALL {
            let t = make_tag(1234, kind);
            assert_eq!(tag_node(t), 1234);
            assert_eq!(tag_kind(t), kind);
        }
        assert_eq!(OpKind::from_u8(200), OpKind::Other);
    }
}
