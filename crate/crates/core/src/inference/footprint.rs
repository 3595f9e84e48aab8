//! Symbolic level tracking and the memory-footprint estimate.

use super::model::{ModelGraph, OpSpec, Src, ValueKind};
use crate::ckks::CkksContext;
use crate::error::{Error, Result};

/// Level of every cipher value when the input enters at the top level;
/// `None` for plain values. The context scale is restored by every
/// multiplicative node, so all cipher values carry the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub input: usize,
    pub nodes: Vec<Option<usize>>,
}

pub fn plan_levels(g: &ModelGraph, ctx: &CkksContext) -> Result<LevelPlan> {
    let top = ctx.max_level();
    let mut nodes: Vec<Option<usize>> = Vec::with_capacity(g.nodes.len());
    for n in &g.nodes {
        let level_of = |s: &Src| match s {
            Src::Input => Some(top),
            Src::Node(j) => nodes[*j],
        };
        let ins: Vec<Option<usize>> = n.inputs.iter().map(level_of).collect();
        let min_cipher = ins.iter().flatten().copied().min();
        let level = match &n.op {
            OpSpec::Convolution { .. } | OpSpec::Multiply { .. } | OpSpec::AvgPool { .. } => {
                let l = ins[0].expect("validated as cipher");
                if !ctx.can_multiply(l) {
                    return Err(Error::LevelExhausted(format!("no multiplicative level left at level {l}")).at_node(&n.name));
                }
                Some(l - 1)
            }
            OpSpec::BoundedRelu { .. } | OpSpec::MaxPool { .. } => Some(top),
            OpSpec::Constant { .. } => None,
            _ if n.value == ValueKind::Plain => None,
            _ => min_cipher,
        };
        nodes.push(level);
    }
    Ok(LevelPlan { input: top, nodes })
}

/// Byte counts of one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Footprint {
    /// Peak over nodes of live ciphertext bytes before the node plus the
    /// bytes of its output.
    pub peak_ciphertext_bytes: u64,
    /// All encoded plaintext scalars used by the graph.
    pub weight_bytes: u64,
}

impl Footprint {
    pub fn total(&self) -> u64 {
        self.peak_ciphertext_bytes + self.weight_bytes
    }
}

fn numel(s: [usize; 3]) -> u64 {
    (s[0] * s[1] * s[2]) as u64
}

/// Number of scalar plaintexts a node encodes, and the level they are
/// encoded at (bias scalars sit one level lower and are counted separately).
pub(crate) fn encoded_scalars(g: &ModelGraph, i: usize, plan: &LevelPlan) -> Vec<(u64, usize)> {
    let n = &g.nodes[i];
    let in_level = |k: usize| match n.inputs[k] {
        Src::Input => Some(plan.input),
        Src::Node(j) => plan.nodes[j],
    };
    let shape_of = |k: usize| match n.inputs[k] {
        Src::Input => g.input_shape,
        Src::Node(j) => g.nodes[j].shape,
    };
    match &n.op {
        OpSpec::Convolution { out_channels, kernel, groups, bias, .. } => {
            let l = in_level(0).unwrap();
            let c = shape_of(0)[0];
            let w = (out_channels * (c / groups) * kernel[0] * kernel[1]) as u64;
            let mut v = vec![(w, l)];
            if bias.is_some() {
                v.push((*out_channels as u64, l - 1));
            }
            v
        }
        OpSpec::Multiply { weights } => {
            let l = in_level(0).unwrap();
            let count = match weights {
                Some(super::model::Weights::Values(v)) => v.len() as u64,
                Some(super::model::Weights::Random { .. }) => shape_of(0)[0] as u64,
                None => numel(shape_of(1)),
            };
            vec![(count, l)]
        }
        OpSpec::AvgPool { .. } => vec![(1, in_level(0).unwrap())],
        OpSpec::Add if n.value == ValueKind::Cipher => {
            match (in_level(0), in_level(1)) {
                (Some(_), Some(_)) => vec![],
                (Some(l), None) | (None, Some(l)) => vec![(numel(n.shape), l)],
                (None, None) => unreachable!("cipher Add has a cipher operand"),
            }
        }
        _ => vec![],
    }
}

pub(crate) fn ciphertext_bytes(ctx: &CkksContext, level: usize, batch: usize) -> u64 {
    ctx.ciphertext_bytes(level) * batch.div_ceil(ctx.slots()).max(1) as u64
}

/// Lifetime end of every value: the last reader, or the end of the schedule
/// for the value the Result node exposes.
pub(crate) fn lifetimes(g: &ModelGraph) -> (Option<usize>, Vec<Option<usize>>) {
    let (mut input, mut nodes) = g.last_uses();
    let end = g.nodes.len();
    match g.nodes[g.result].inputs[0] {
        Src::Input => input = Some(end),
        Src::Node(j) => nodes[j] = Some(end),
    }
    (input, nodes)
}

/// Predicted bytes for a batch of `batch` samples. Batches larger than the
/// slot count take `ceil(batch / slots)` ciphertexts per element.
pub fn footprint_estimate(g: &ModelGraph, batch: usize, ctx: &CkksContext) -> Result<Footprint> {
    let plan = plan_levels(g, ctx)?;
    let (input_end, ends) = lifetimes(g);
    let output_bytes = |i: usize| -> u64 {
        let n = &g.nodes[i];
        match (&n.op, plan.nodes[i]) {
            (OpSpec::Result, _) | (_, None) => 0,
            (_, Some(l)) => numel(n.shape) * ciphertext_bytes(ctx, l, batch),
        }
    };
    let mut live: u64 = if input_end.is_some() { numel(g.input_shape) * ciphertext_bytes(ctx, plan.input, batch) } else { 0 };
    let mut peak = 0u64;
    let mut weight_bytes = 0u64;
    for i in 0..g.nodes.len() {
        let out = output_bytes(i);
        peak = peak.max(live + out);
        live += out;
        if ends[i].is_none() {
            live -= out;
        }
        if input_end == Some(i) {
            live -= numel(g.input_shape) * ciphertext_bytes(ctx, plan.input, batch);
        }
        for (j, end) in ends.iter().enumerate().take(i) {
            if *end == Some(i) {
                live -= output_bytes(j);
            }
        }
        for (count, level) in encoded_scalars(g, i, &plan) {
            weight_bytes += count * (level as u64 + 1) * 8;
        }
    }
    Ok(Footprint { peak_ciphertext_bytes: peak, weight_bytes })
}
