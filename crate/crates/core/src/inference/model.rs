//! Model documents and the validated graph.
//!
//! A document is JSON:
//!
//! ```json
//! { "version": 1, "name": "toy", "input_shape": [1, 8, 8],
//!   "nodes": [
//!     { "name": "c1", "op": "Convolution", "inputs": ["input"], "out_channels": 4,
//!       "kernel": [3, 3], "padding": [1, 1], "weights": { "seed": 1, "std": 0.3 } },
//!     { "name": "out", "op": "Result", "inputs": ["c1"] } ] }
//! ```
//!
//! `input` names the graph input. Weights are either inline arrays or a
//! `{seed, std}` request for seeded Gaussian values.

use std::collections::{HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memsim::OpKind;

pub const MODEL_VERSION: u32 = 1;
pub const INPUT_NAME: &str = "input";
pub const DEFAULT_RELU_BOUND: f64 = 6.0;

const KNOWN_OPS: [&str; 11] = [
    "Add", "AvgPool", "BoundedRelu", "Concat", "Constant", "Convolution", "Multiply", "Reshape", "Result", "Slice",
    "MaxPool",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Values(Vec<f64>),
    Random { seed: u64, std: f64 },
}

impl Weights {
    pub fn materialize(&self, len: usize) -> Result<Vec<f64>> {
        match self {
            Weights::Values(v) if v.len() == len => Ok(v.clone()),
            Weights::Values(v) => Err(Error::Shape(format!("{} weights given, {len} expected", v.len()))),
            Weights::Random { seed, std } => {
                let normal = Normal::new(0.0, *std).map_err(|e| Error::Model(format!("bad weight std {std}: {e}")))?;
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        match self {
            Weights::Values(v) if v.len() != len => {
                Err(Error::Shape(format!("{} weights given, {len} expected", v.len())))
            }
            Weights::Random { std, .. } if !(std.is_finite() && *std >= 0.0) => {
                Err(Error::Model(format!("bad weight std {std}")))
            }
            _ => Ok(()),
        }
    }
}

fn one() -> [usize; 2] {
    [1, 1]
}

fn groups_default() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum OpSpec {
    Convolution {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "one")]
        stride: [usize; 2],
        #[serde(default)]
        padding: [usize; 2],
        #[serde(default = "groups_default")]
        groups: usize,
        /// `[out][in / groups][kh][kw]`.
        weights: Weights,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<Weights>,
    },
    /// Element-wise product with plaintext weights of length 1, C or C*H*W,
    /// or with a second (Constant) input under the same broadcasting.
    /// Seeded random weights are per channel.
    Multiply {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Weights>,
    },
    Add,
    AvgPool {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel: Option<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<[usize; 2]>,
    },
    MaxPool {
        kernel: [usize; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<[usize; 2]>,
        #[serde(default)]
        padding: [usize; 2],
    },
    /// `min(max(x, 0), bound)`; a `null` bound is plain ReLU.
    BoundedRelu {
        #[serde(default = "default_bound")]
        bound: Option<f64>,
    },
    Concat {
        #[serde(default)]
        axis: usize,
    },
    Reshape {
        shape: [usize; 3],
    },
    Slice {
        begin: [usize; 3],
        end: [usize; 3],
    },
    Constant {
        shape: [usize; 3],
        values: Weights,
    },
    Result,
}

fn default_bound() -> Option<f64> {
    Some(DEFAULT_RELU_BOUND)
}

impl OpSpec {
    pub fn kind(&self) -> OpKind {
        match self {
            OpSpec::Convolution { .. } => OpKind::Convolution,
            OpSpec::Multiply { .. } => OpKind::Multiply,
            OpSpec::Add => OpKind::Add,
            OpSpec::AvgPool { .. } => OpKind::AvgPool,
            OpSpec::MaxPool { .. } => OpKind::MaxPool,
            OpSpec::BoundedRelu { .. } => OpKind::BoundedRelu,
            OpSpec::Concat { .. } => OpKind::Concat,
            OpSpec::Reshape { .. } => OpKind::Reshape,
            OpSpec::Slice { .. } => OpKind::Slice,
            OpSpec::Constant { .. } => OpKind::Constant,
            OpSpec::Result => OpKind::Result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub name: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(flatten)]
    pub op: OpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub name: String,
    pub input_shape: [usize; 3],
    pub nodes: Vec<NodeDoc>,
}

impl ModelDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        if let Some(nodes) = raw.get("nodes").and_then(|n| n.as_array()) {
            for (i, n) in nodes.iter().enumerate() {
                match n.get("op").and_then(|o| o.as_str()) {
                    Some(op) if KNOWN_OPS.contains(&op) => {}
                    Some(op) => return Err(Error::Model(format!("node {i}: unknown op kind '{op}'"))),
                    None => return Err(Error::Model(format!("node {i}: missing op kind"))),
                }
            }
        }
        serde_json::from_value(raw).map_err(|e| Error::Model(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Src {
    Input,
    Node(usize),
}

/// Whether a value is encrypted (one ciphertext per element) or a
/// plaintext constant shared by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Cipher,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: OpSpec,
    pub inputs: Vec<Src>,
    pub shape: [usize; 3],
    pub value: ValueKind,
}

impl Node {
    pub fn kind(&self) -> OpKind {
        self.op.kind()
    }
}

/// A validated model: nodes in topological order with inferred shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub name: String,
    pub input_shape: [usize; 3],
    pub nodes: Vec<Node>,
    pub result: usize,
}

fn numel(s: [usize; 3]) -> usize {
    s[0] * s[1] * s[2]
}

fn window_out(len: usize, k: usize, s: usize, p: usize, what: &str) -> Result<usize> {
    if k == 0 || s == 0 || len + 2 * p < k {
        return Err(Error::Shape(format!("{what}: kernel {k}, stride {s}, padding {p} does not fit extent {len}")));
    }
    Ok((len + 2 * p - k) / s + 1)
}

fn broadcast_ok(len: usize, shape: [usize; 3]) -> bool {
    len == 1 || len == shape[0] || len == numel(shape)
}

pub fn load_model(doc: &ModelDoc) -> Result<ModelGraph> {
    if doc.version != MODEL_VERSION {
        return Err(Error::Model(format!("unsupported model version {}", doc.version)));
    }
    if numel(doc.input_shape) == 0 {
        return Err(Error::Shape(format!("empty input shape {:?}", doc.input_shape)));
    }
    let mut index = HashMap::new();
    for (i, n) in doc.nodes.iter().enumerate() {
        if n.name == INPUT_NAME {
            return Err(Error::Model(format!("node name '{INPUT_NAME}' is reserved")));
        }
        if index.insert(n.name.as_str(), i).is_some() {
            return Err(Error::Model(format!("duplicate node name '{}'", n.name)));
        }
    }
    let mut deps = vec![Vec::new(); doc.nodes.len()];
    let mut users = vec![Vec::new(); doc.nodes.len()];
    for (i, n) in doc.nodes.iter().enumerate() {
        for inp in &n.inputs {
            let src = if inp == INPUT_NAME {
                Src::Input
            } else {
                let j = *index
                    .get(inp.as_str())
                    .ok_or_else(|| Error::Model(format!("node '{}' reads unknown value '{inp}'", n.name)))?;
                users[j].push(i);
                Src::Node(j)
            };
            deps[i].push(src);
        }
    }

    // Kahn's algorithm, ties broken by document order.
    let mut pending: Vec<usize> = deps.iter().map(|d| d.iter().filter(|s| matches!(s, Src::Node(_))).count()).collect();
    let mut ready: VecDeque<usize> = (0..doc.nodes.len()).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(doc.nodes.len());
    while let Some(i) = ready.pop_front() {
        order.push(i);
        let mut newly: Vec<usize> = Vec::new();
        for &u in &users[i] {
            pending[u] -= 1;
            if pending[u] == 0 {
                newly.push(u);
            }
        }
        newly.sort_unstable();
        newly.dedup();
        let mut merged: Vec<usize> = ready.drain(..).chain(newly).collect();
        merged.sort_unstable();
        ready.extend(merged);
    }
    if order.len() != doc.nodes.len() {
        let stuck: Vec<&str> = (0..doc.nodes.len()).filter(|&i| pending[i] > 0).map(|i| doc.nodes[i].name.as_str()).collect();
        return Err(Error::Model(format!("graph has a cycle through {stuck:?}")));
    }
    let mut position = vec![0usize; doc.nodes.len()];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }

    let mut nodes: Vec<Node> = Vec::with_capacity(order.len());
    for &i in &order {
        let d = &doc.nodes[i];
        let inputs: Vec<Src> = deps[i]
            .iter()
            .map(|s| match s {
                Src::Input => Src::Input,
                Src::Node(j) => Src::Node(position[*j]),
            })
            .collect();
        let info = |s: &Src| match s {
            Src::Input => (doc.input_shape, ValueKind::Cipher),
            Src::Node(j) => (nodes[*j].shape, nodes[*j].value),
        };
        let (shape, value) = infer(d, &inputs.iter().map(info).collect::<Vec<_>>()).map_err(|e| e.at_node(&d.name))?;
        nodes.push(Node { name: d.name.clone(), op: d.op.clone(), inputs, shape, value });
    }
    let results: Vec<usize> = (0..nodes.len()).filter(|&i| matches!(nodes[i].op, OpSpec::Result)).collect();
    if results.len() != 1 {
        return Err(Error::Model(format!("expected exactly one Result node, found {}", results.len())));
    }
    Ok(ModelGraph { name: doc.name.clone(), input_shape: doc.input_shape, nodes, result: results[0] })
}

fn arity(d: &NodeDoc, n: usize) -> Result<()> {
    if d.inputs.len() != n {
        return Err(Error::Model(format!("{:?} takes {n} input(s), got {}", d.op.kind(), d.inputs.len())));
    }
    Ok(())
}

fn need_cipher(v: ValueKind, what: &str) -> Result<()> {
    if v != ValueKind::Cipher {
        return Err(Error::Model(format!("{what} needs an encrypted input")));
    }
    Ok(())
}

fn infer(d: &NodeDoc, ins: &[([usize; 3], ValueKind)]) -> Result<([usize; 3], ValueKind)> {
    match &d.op {
        OpSpec::Convolution { out_channels, kernel, stride, padding, groups, weights, bias } => {
            arity(d, 1)?;
            let ([c, h, w], v) = ins[0];
            need_cipher(v, "Convolution")?;
            let g = *groups;
            if g == 0 || c % g != 0 || out_channels % g != 0 || *out_channels == 0 {
                return Err(Error::Shape(format!(
                    "groups {g} must divide input channels {c} and output channels {out_channels}"
                )));
            }
            weights.check_len(out_channels * (c / g) * kernel[0] * kernel[1])?;
            if let Some(b) = bias {
                b.check_len(*out_channels)?;
            }
            let oh = window_out(h, kernel[0], stride[0], padding[0], "convolution")?;
            let ow = window_out(w, kernel[1], stride[1], padding[1], "convolution")?;
            if padding[0] >= kernel[0] || padding[1] >= kernel[1] {
                return Err(Error::Shape("convolution padding must be smaller than the kernel".into()));
            }
            Ok(([*out_channels, oh, ow], ValueKind::Cipher))
        }
        OpSpec::Multiply { weights } => {
            let (shape, v) = ins.first().copied().ok_or_else(|| Error::Model("Multiply needs an input".into()))?;
            need_cipher(v, "Multiply")?;
            match (weights, ins.len()) {
                (Some(Weights::Values(vals)), 1) => {
                    if !broadcast_ok(vals.len(), shape) {
                        return Err(Error::Shape(format!("{} multiply weights do not broadcast to {shape:?}", vals.len())));
                    }
                }
                (Some(w), 1) => w.check_len(shape[0])?,
                (None, 2) => {
                    let (s2, v2) = ins[1];
                    if v2 != ValueKind::Plain || !broadcast_ok(numel(s2), shape) {
                        return Err(Error::Shape(format!("second Multiply operand {s2:?} must be a broadcastable constant")));
                    }
                }
                _ => return Err(Error::Model("Multiply takes weights or a constant second input".into())),
            }
            Ok((shape, ValueKind::Cipher))
        }
        OpSpec::Add => {
            arity(d, 2)?;
            if ins[0].0 != ins[1].0 {
                return Err(Error::Shape(format!("Add operands {:?} and {:?} differ", ins[0].0, ins[1].0)));
            }
            let v = if ins[0].1 == ValueKind::Plain && ins[1].1 == ValueKind::Plain { ValueKind::Plain } else { ValueKind::Cipher };
            Ok((ins[0].0, v))
        }
        OpSpec::AvgPool { kernel, stride } => {
            arity(d, 1)?;
            let ([c, h, w], v) = ins[0];
            need_cipher(v, "AvgPool")?;
            let k = kernel.unwrap_or([h, w]);
            let s = stride.unwrap_or(k);
            Ok(([c, window_out(h, k[0], s[0], 0, "avgpool")?, window_out(w, k[1], s[1], 0, "avgpool")?], ValueKind::Cipher))
        }
        OpSpec::MaxPool { kernel, stride, padding } => {
            arity(d, 1)?;
            let ([c, h, w], v) = ins[0];
            need_cipher(v, "MaxPool")?;
            let s = stride.unwrap_or(*kernel);
            if padding[0] >= kernel[0] || padding[1] >= kernel[1] {
                return Err(Error::Shape("max pool padding must be smaller than the kernel".into()));
            }
            Ok((
                [c, window_out(h, kernel[0], s[0], padding[0], "maxpool")?, window_out(w, kernel[1], s[1], padding[1], "maxpool")?],
                ValueKind::Cipher,
            ))
        }
        OpSpec::BoundedRelu { bound } => {
            arity(d, 1)?;
            need_cipher(ins[0].1, "BoundedRelu")?;
            if let Some(b) = bound {
                if !(b.is_finite() && *b >= 0.0) {
                    return Err(Error::Model(format!("bad bound {b}")));
                }
            }
            Ok(ins[0])
        }
        OpSpec::Concat { axis } => {
            if ins.is_empty() {
                return Err(Error::Model("Concat needs inputs".into()));
            }
            if *axis > 2 {
                return Err(Error::Shape(format!("concat axis {axis} out of range")));
            }
            let mut out = ins[0].0;
            for (s, v) in &ins[1..] {
                for k in 0..3 {
                    if k != *axis && s[k] != out[k] {
                        return Err(Error::Shape(format!("cannot concat {s:?} onto {out:?} along axis {axis}")));
                    }
                }
                out[*axis] += s[*axis];
                if *v != ins[0].1 {
                    return Err(Error::Model("Concat inputs mix encrypted and plain values".into()));
                }
            }
            Ok((out, ins[0].1))
        }
        OpSpec::Reshape { shape } => {
            arity(d, 1)?;
            if numel(*shape) != numel(ins[0].0) {
                return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", ins[0].0)));
            }
            Ok((*shape, ins[0].1))
        }
        OpSpec::Slice { begin, end } => {
            arity(d, 1)?;
            let s = ins[0].0;
            let mut out = [0; 3];
            for k in 0..3 {
                if begin[k] >= end[k] || end[k] > s[k] {
                    return Err(Error::Shape(format!("slice {begin:?}..{end:?} out of range for {s:?}")));
                }
                out[k] = end[k] - begin[k];
            }
            Ok((out, ins[0].1))
        }
        OpSpec::Constant { shape, values } => {
            arity(d, 0)?;
            if numel(*shape) == 0 {
                return Err(Error::Shape("empty constant".into()));
            }
            values.check_len(numel(*shape))?;
            Ok((*shape, ValueKind::Plain))
        }
        OpSpec::Result => {
            arity(d, 1)?;
            Ok(ins[0])
        }
    }
}

impl ModelGraph {
    pub fn from_json(text: &str) -> Result<Self> {
        load_model(&ModelDoc::from_json(text)?)
    }

    /// Index of the last node reading each value; `None` when unread.
    pub fn last_uses(&self) -> (Option<usize>, Vec<Option<usize>>) {
        let mut input = None;
        let mut nodes = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for s in &n.inputs {
                match s {
                    Src::Input => input = Some(i),
                    Src::Node(j) => nodes[*j] = Some(i),
                }
            }
        }
        (input, nodes)
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.nodes[self.result].shape
    }
}
