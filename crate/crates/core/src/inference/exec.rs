//! Graph execution over batch-packed ciphertext tensors.
//!
//! Nodes run one after another in topological order; within a node the
//! output ciphertexts are computed fork-join across the worker pool. Every
//! output element depends only on its inputs, so results are bit-identical
//! for any worker count.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;
use std::time::Instant;

use super::footprint::{lifetimes, plan_levels, LevelPlan};
use super::model::{ModelGraph, Node, OpSpec, Src, Weights};
use crate::ckks::{Ciphertext, CkksContext, ScalarPlaintext, SecretKey};
use crate::error::{Error, Result};
use crate::memsim::record::{self, AccessTrace};
use crate::memsim::{make_tag, OpKind};
use crate::packing::{decrypt_tensor, BatchedTensor, CipherTensor};
use crate::par;
use crate::protocol::{delegate, ClientOp, Delegate};

/// Plaintext tensor shared by every sample of the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainTensor {
    pub shape: [usize; 3],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Cipher(CipherTensor),
    Plain(PlainTensor),
}

impl Value {
    pub fn shape(&self) -> [usize; 3] {
        match self {
            Value::Cipher(c) => c.shape(),
            Value::Plain(p) => p.shape,
        }
    }

    /// Ciphertext bytes held by this value.
    pub fn byte_size(&self) -> u64 {
        match self {
            Value::Cipher(c) => c.byte_size(),
            Value::Plain(_) => 0,
        }
    }

    pub fn as_cipher(&self) -> Option<&CipherTensor> {
        match self {
            Value::Cipher(c) => Some(c),
            Value::Plain(_) => None,
        }
    }
}

pub struct RunConfig<'a> {
    pub workers: usize,
    /// Client endpoint for BoundedRelu and MaxPool.
    pub delegate: Option<&'a dyn Delegate>,
    /// Test mode: decrypt the Result value.
    pub secret_key: Option<&'a SecretKey>,
    /// Record an access trace; needs a single worker.
    pub record: bool,
    /// Upper bound on ciphertexts per client request.
    pub max_request: usize,
}

impl Default for RunConfig<'_> {
    fn default() -> Self {
        RunConfig { workers: 1, delegate: None, secret_key: None, record: false, max_request: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub name: String,
    pub kind: OpKind,
    pub seconds: f64,
    pub level: Option<usize>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub output: Value,
    pub decrypted: Option<BatchedTensor>,
    pub nodes: Vec<NodeRecord>,
    pub total_seconds: f64,
    /// Measured peak of live ciphertext bytes, same schedule rules as the
    /// estimator.
    pub peak_ciphertext_bytes: u64,
    /// Bytes of every scalar plaintext the run encoded.
    pub weight_bytes: u64,
    pub trace: Option<AccessTrace>,
}

/// One row of the per-function summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionRow {
    pub function: &'static str,
    pub count: usize,
    pub seconds: f64,
    pub share: f64,
}

impl ExecutionReport {
    pub fn peak_bytes(&self) -> u64 {
        self.peak_ciphertext_bytes + self.weight_bytes
    }

    /// Time per op kind; shares are percentages of the summed node time.
    pub fn by_function(&self) -> Vec<FunctionRow> {
        let mut acc: BTreeMap<OpKind, (usize, f64)> = BTreeMap::new();
        for n in &self.nodes {
            let e = acc.entry(n.kind).or_default();
            e.0 += 1;
            e.1 += n.seconds;
        }
        let total: f64 = self.nodes.iter().map(|n| n.seconds).sum();
        acc.into_iter()
            .map(|(k, (count, seconds))| FunctionRow {
                function: k.name(),
                count,
                seconds,
                share: if total > 0.0 { 100.0 * seconds / total } else { 0.0 },
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,count,time_s,share_pct\n");
        for r in self.by_function() {
            let _ = writeln!(out, "{},{},{:.6},{:.2}", r.function, r.count, r.seconds, r.share);
        }
        let _ = writeln!(out, "Total,{},{:.6},100.00", self.nodes.len(), self.total_seconds);
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12} {:>6} {:>12} {:>8}\n", "Function", "Count", "Time (s)", "%");
        for r in self.by_function() {
            let _ = writeln!(out, "{:<12} {:>6} {:>12.3} {:>8.2}", r.function, r.count, r.seconds, r.share);
        }
        out.push_str(&"-".repeat(41));
        out.push('\n');
        let _ = writeln!(out, "{:<12} {:>6} {:>12.3} {:>8}", "Total", self.nodes.len(), self.total_seconds, "");
        let _ = writeln!(out, "peak memory: {} bytes", self.peak_bytes());
        out
    }
}

struct Exec<'a> {
    ctx: &'a CkksContext,
    cfg: &'a RunConfig<'a>,
    batch: usize,
    weight_bytes: u64,
}

fn numel(s: [usize; 3]) -> usize {
    s[0] * s[1] * s[2]
}

fn broadcast(len: usize, shape: [usize; 3], i: usize) -> usize {
    if len == 1 {
        0
    } else if len == numel(shape) {
        i
    } else {
        i / (shape[1] * shape[2])
    }
}

impl Exec<'_> {
    fn encode_all(&mut self, values: &[f64], scale: f64, level: usize) -> Result<Vec<ScalarPlaintext>> {
        let out = par::try_map(values.len(), |i| self.ctx.encode_scalar(values[i], scale, level))?;
        self.weight_bytes += out.iter().map(|p| p.byte_size()).sum::<u64>();
        Ok(out)
    }

    fn tensor(&self, shape: [usize; 3], cts: Vec<Ciphertext>) -> Result<Value> {
        Ok(Value::Cipher(CipherTensor::new(shape, self.batch, cts)?))
    }

    fn need_level(&self, x: &CipherTensor) -> Result<usize> {
        let l = x.level().unwrap_or(self.ctx.max_level());
        if !self.ctx.can_multiply(l) {
            return Err(Error::LevelExhausted(format!("no multiplicative level left at level {l}")));
        }
        Ok(l)
    }

    #[allow(clippy::too_many_arguments)]
    fn convolution(
        &mut self,
        x: &CipherTensor,
        out_shape: [usize; 3],
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
        groups: usize,
        weights: &[f64],
        bias: Option<&[f64]>,
    ) -> Result<Value> {
        let level = self.need_level(x)?;
        let ctx = self.ctx;
        let q = ctx.prime_at(level);
        let scale = x.scale().unwrap_or(ctx.scale());
        let enc_w = self.encode_all(weights, q, level)?;
        let enc_b = match bias {
            Some(b) => Some(self.encode_all(b, scale, level - 1)?),
            None => None,
        };
        let [c, h, w] = x.shape();
        let [oc, oh, ow] = out_shape;
        let cin = c / groups;
        let per_group = oc / groups;
        // Output channels innermost so a receptive field is reused while hot.
        let results = par::try_map(oc * oh * ow, |j| {
            let o = j % oc;
            let (oy, ox) = ((j / oc) / ow, (j / oc) % ow);
            let g = o / per_group;
            let mut acc: Option<Ciphertext> = None;
            for ic in 0..cin {
                for ky in 0..kernel[0] {
                    let iy = (oy * stride[0] + ky).wrapping_sub(padding[0]);
                    if iy >= h {
                        continue;
                    }
                    for kx in 0..kernel[1] {
                        let ix = (ox * stride[1] + kx).wrapping_sub(padding[1]);
                        if ix >= w {
                            continue;
                        }
                        let xc = x.get(g * cin + ic, iy, ix);
                        let wp = &enc_w[((o * cin + ic) * kernel[0] + ky) * kernel[1] + kx];
                        match acc.as_mut() {
                            None => acc = Some(ctx.mul_cipher_plain_scalar(xc, wp)?),
                            Some(a) => ctx.mul_acc_cipher_plain_scalar_assign(a, xc, wp)?,
                        }
                    }
                }
            }
            let acc = match acc {
                Some(a) => a,
                None => ctx.zero_ciphertext(level, scale * q)?,
            };
            let mut r = ctx.rescale(&acc)?;
            if let Some(b) = &enc_b {
                ctx.add_cipher_plain_scalar_assign(&mut r, &b[o])?;
            }
            Ok::<_, Error>(r)
        })?;
        let mut slots: Vec<Option<Ciphertext>> = vec![None; results.len()];
        for (j, r) in results.into_iter().enumerate() {
            let o = j % oc;
            slots[(o * oh + (j / oc) / ow) * ow + (j / oc) % ow] = Some(r);
        }
        self.tensor(out_shape, slots.into_iter().map(|s| s.expect("every output computed")).collect())
    }

    fn multiply(&mut self, x: &CipherTensor, weights: &[f64]) -> Result<Value> {
        let level = self.need_level(x)?;
        let ctx = self.ctx;
        let enc = self.encode_all(weights, ctx.prime_at(level), level)?;
        let shape = x.shape();
        let out = par::try_map(x.len(), |i| {
            let p = &enc[broadcast(enc.len(), shape, i)];
            ctx.rescale(&ctx.mul_cipher_plain_scalar(&x.ciphertexts()[i], p)?)
        })?;
        self.tensor(shape, out)
    }

    fn avgpool(&mut self, x: &CipherTensor, out_shape: [usize; 3], kernel: [usize; 2], stride: [usize; 2]) -> Result<Value> {
        let level = self.need_level(x)?;
        let ctx = self.ctx;
        let inv = 1.0 / (kernel[0] * kernel[1]) as f64;
        let enc = self.encode_all(&[inv], ctx.prime_at(level), level)?;
        let [_, oh, ow] = out_shape;
        let out = par::try_map(numel(out_shape), |j| {
            let (ch, oy, ox) = (j / (oh * ow), (j / ow) % oh, j % ow);
            let mut sum: Option<Ciphertext> = None;
            for ky in 0..kernel[0] {
                for kx in 0..kernel[1] {
                    let xc = x.get(ch, oy * stride[0] + ky, ox * stride[1] + kx);
                    match sum.as_mut() {
                        None => sum = Some(xc.clone()),
                        Some(s) => ctx.add_cipher_cipher_assign(s, xc)?,
                    }
                }
            }
            let mut s = sum.expect("non-empty window");
            ctx.mul_cipher_plain_scalar_assign(&mut s, &enc[0])?;
            ctx.rescale(&s)
        })?;
        self.tensor(out_shape, out)
    }

    fn add(&mut self, a: &Value, b: &Value) -> Result<Value> {
        let ctx = self.ctx;
        match (a, b) {
            (Value::Cipher(x), Value::Cipher(y)) => {
                let (lo, hi) = if y.level() < x.level() { (y, x) } else { (x, y) };
                let out = par::try_map(x.len(), |i| {
                    let mut s = lo.ciphertexts()[i].clone();
                    ctx.add_cipher_cipher_assign(&mut s, &hi.ciphertexts()[i])?;
                    Ok::<_, Error>(s)
                })?;
                self.tensor(x.shape(), out)
            }
            (Value::Cipher(x), Value::Plain(p)) | (Value::Plain(p), Value::Cipher(x)) => {
                let level = x.level().unwrap_or(ctx.max_level());
                let enc = self.encode_all(&p.values, x.scale().unwrap_or(ctx.scale()), level)?;
                let out = par::try_map(x.len(), |i| ctx.add_cipher_plain_scalar(&x.ciphertexts()[i], &enc[i]))?;
                self.tensor(x.shape(), out)
            }
            (Value::Plain(p), Value::Plain(q)) => Ok(Value::Plain(PlainTensor {
                shape: p.shape,
                values: p.values.iter().zip(&q.values).map(|(a, b)| a + b).collect(),
            })),
        }
    }

    fn client(&self, x: &CipherTensor, op: ClientOp) -> Result<Value> {
        let d = self
            .cfg
            .delegate
            .ok_or_else(|| Error::Config("graph needs a client endpoint for comparison ops".into()))?;
        let [c, h, w] = x.shape();
        let cts = x.ciphertexts();
        let max = self.cfg.max_request.max(1);
        // Pooling requests carry whole channel planes.
        let (unit, shape_of): (usize, Box<dyn Fn(usize) -> [u32; 3] + Sync>) = match op {
            ClientOp::MaxPool { .. } => (h * w, Box::new(move |n| [(n / (h * w)) as u32, h as u32, w as u32])),
            _ => (1, Box::new(|n| [n as u32, 1, 1])),
        };
        let per_request = (max / unit).max(1) * unit;
        let chunks: Vec<&[Ciphertext]> = cts.chunks(per_request).collect();
        let parts = par::try_map(chunks.len(), |k| delegate(d, self.ctx, &op, shape_of(chunks[k].len()), chunks[k]))?;
        let out_shape = op.output_shape([c as u32, h as u32, w as u32])?;
        let out: Vec<Ciphertext> = parts.into_iter().flat_map(|(_, v)| v).collect();
        self.tensor(out_shape.map(|d| d as usize), out)
    }

    fn gather(&self, x: &Value, shape: [usize; 3], index: impl Fn(usize) -> usize + Sync + Send) -> Result<Value> {
        match x {
            Value::Cipher(t) => {
                let level = t.level().unwrap_or(self.ctx.max_level());
                let out = par::try_map(numel(shape), |i| self.ctx.copy_to_level(&t.ciphertexts()[index(i)], level))?;
                self.tensor(shape, out)
            }
            Value::Plain(p) => Ok(Value::Plain(PlainTensor { shape, values: (0..numel(shape)).map(|i| p.values[index(i)]).collect() })),
        }
    }

    fn concat(&self, parts: &[&Value], axis: usize, shape: [usize; 3]) -> Result<Value> {
        let locate = |i: usize| -> (usize, usize) {
            let mut pos = [i / (shape[1] * shape[2]), (i / shape[2]) % shape[1], i % shape[2]];
            for (k, p) in parts.iter().enumerate() {
                let s = p.shape();
                if pos[axis] < s[axis] {
                    return (k, (pos[0] * s[1] + pos[1]) * s[2] + pos[2]);
                }
                pos[axis] -= s[axis];
            }
            unreachable!("index inside the concatenated shape")
        };
        match parts[0] {
            Value::Cipher(_) => {
                let ts: Vec<&CipherTensor> = parts.iter().map(|p| p.as_cipher().expect("validated")).collect();
                let level = ts.iter().filter_map(|t| t.level()).min().unwrap_or(self.ctx.max_level());
                let out = par::try_map(numel(shape), |i| {
                    let (k, j) = locate(i);
                    self.ctx.copy_to_level(&ts[k].ciphertexts()[j], level)
                })?;
                self.tensor(shape, out)
            }
            Value::Plain(_) => {
                let values = (0..numel(shape))
                    .map(|i| {
                        let (k, j) = locate(i);
                        match parts[k] {
                            Value::Plain(p) => p.values[j],
                            Value::Cipher(_) => unreachable!("validated"),
                        }
                    })
                    .collect();
                Ok(Value::Plain(PlainTensor { shape, values }))
            }
        }
    }

    fn run_node(&mut self, n: &Node, ins: &[&Value], weights: Option<Vec<f64>>, bias: Option<Vec<f64>>) -> Result<Value> {
        let cipher = |k: usize| ins[k].as_cipher().ok_or_else(|| Error::Model("expected an encrypted operand".into()));
        match &n.op {
            OpSpec::Convolution { kernel, stride, padding, groups, .. } => self.convolution(
                cipher(0)?,
                n.shape,
                *kernel,
                *stride,
                *padding,
                *groups,
                &weights.expect("materialized"),
                bias.as_deref(),
            ),
            OpSpec::Multiply { .. } => {
                let w = match (weights, ins.get(1)) {
                    (Some(w), _) => w,
                    (None, Some(Value::Plain(p))) => p.values.clone(),
                    _ => return Err(Error::Model("Multiply needs plaintext weights".into())),
                };
                self.multiply(cipher(0)?, &w)
            }
            OpSpec::AvgPool { kernel, stride } => {
                let x = cipher(0)?;
                let [_, h, w] = x.shape();
                let k = kernel.unwrap_or([h, w]);
                self.avgpool(x, n.shape, k, stride.unwrap_or(k))
            }
            OpSpec::Add => self.add(ins[0], ins[1]),
            OpSpec::BoundedRelu { bound } => {
                let op = match bound {
                    Some(b) => ClientOp::BoundedRelu { bound: *b },
                    None => ClientOp::Relu,
                };
                self.client(cipher(0)?, op)
            }
            OpSpec::MaxPool { kernel, stride, padding } => {
                let s = stride.unwrap_or(*kernel);
                let op = ClientOp::MaxPool {
                    kernel: kernel.map(|v| v as u32),
                    stride: s.map(|v| v as u32),
                    padding: padding.map(|v| v as u32),
                };
                self.client(cipher(0)?, op)
            }
            OpSpec::Concat { axis } => self.concat(ins, *axis, n.shape),
            OpSpec::Reshape { .. } => self.gather(ins[0], n.shape, |i| i),
            OpSpec::Slice { begin, .. } => {
                let src = ins[0].shape();
                let [_, oh, ow] = n.shape;
                self.gather(ins[0], n.shape, move |i| {
                    let (c, y, x) = (i / (oh * ow) + begin[0], (i / ow) % oh + begin[1], i % ow + begin[2]);
                    (c * src[1] + y) * src[2] + x
                })
            }
            OpSpec::Constant { shape, .. } => Ok(Value::Plain(PlainTensor { shape: *shape, values: weights.expect("materialized") })),
            OpSpec::Result => unreachable!("Result aliases its input"),
        }
    }
}

/// Weights and bias of a node, when it has them.
type Materialized = (Option<Vec<f64>>, Option<Vec<f64>>);

fn materialize(n: &Node, input_channels: usize) -> Result<Materialized> {
    Ok(match &n.op {
        OpSpec::Convolution { out_channels, kernel, groups, weights, bias, .. } => {
            let len = out_channels * (input_channels / groups) * kernel[0] * kernel[1];
            (Some(weights.materialize(len)?), bias.as_ref().map(|b| b.materialize(*out_channels)).transpose()?)
        }
        OpSpec::Multiply { weights: Some(w) } => {
            let len = match w {
                Weights::Values(v) => v.len(),
                Weights::Random { .. } => input_channels,
            };
            (Some(w.materialize(len)?), None)
        }
        OpSpec::Constant { shape, values } => (Some(values.materialize(numel(*shape))?), None),
        _ => (None, None),
    })
}

struct RecordingGuard(bool);

impl Drop for RecordingGuard {
    fn drop(&mut self) {
        if self.0 {
            let _ = record::finish_recording();
        }
    }
}

/// Runs `g` on an encrypted batch.
pub fn run_graph(ctx: &CkksContext, g: &ModelGraph, input: CipherTensor, cfg: &RunConfig) -> Result<ExecutionReport> {
    if cfg.record && cfg.workers > 1 {
        return Err(Error::Config("recording requires a single worker".into()));
    }
    if input.shape() != g.input_shape {
        return Err(Error::Shape(format!("input shape {:?}, model expects {:?}", input.shape(), g.input_shape)));
    }
    if input.batch() == 0 || input.batch() > ctx.slots() {
        return Err(Error::Shape(format!("batch {} outside 1..={}", input.batch(), ctx.slots())));
    }
    if let Some(l) = input.level() {
        if l != ctx.max_level() {
            return Err(Error::LevelMismatch(ctx.max_level(), l));
        }
    }
    let plan: LevelPlan = plan_levels(g, ctx)?;
    let input_batch = input.batch();
    let mut guard = RecordingGuard(false);
    if cfg.record {
        record::start_recording()?;
        guard.0 = true;
        for ct in input.ciphertexts() {
            ct.place();
        }
    }
    let result = par::with_workers(cfg.workers, || execute(ctx, g, input, cfg, &plan));
    let trace = if guard.0 {
        guard.0 = false;
        Some(record::finish_recording()?)
    } else {
        None
    };
    let mut report = result?;
    report.trace = trace;
    report.decrypted = match (cfg.secret_key, &report.output) {
        (Some(sk), Value::Cipher(t)) => Some(decrypt_tensor(ctx, sk, t)?),
        (Some(_), Value::Plain(p)) => {
            let batch = input_batch;
            let values = (0..batch).flat_map(|_| p.values.iter().copied()).collect();
            Some(BatchedTensor::new([batch, p.shape[0], p.shape[1], p.shape[2]], values)?)
        }
        (None, _) => None,
    };
    Ok(report)
}

fn execute(ctx: &CkksContext, g: &ModelGraph, input: CipherTensor, cfg: &RunConfig, plan: &LevelPlan) -> Result<ExecutionReport> {
    let start = Instant::now();
    let mut ex = Exec { ctx, cfg, batch: input.batch(), weight_bytes: 0 };
    let (input_end, ends) = lifetimes(g);
    let mut input_slot = input_end.map(|_| Arc::new(Value::Cipher(input)));
    let mut slots: Vec<Option<Arc<Value>>> = vec![None; g.nodes.len()];
    let mut live: u64 = input_slot.as_ref().map_or(0, |v| v.byte_size());
    let mut peak = 0u64;
    let mut records = Vec::with_capacity(g.nodes.len());
    for (i, n) in g.nodes.iter().enumerate() {
        let t0 = Instant::now();
        if record::is_recording() {
            record::set_tag(make_tag(i as u32 + 1, n.kind()));
        }
        let ins: Vec<Arc<Value>> = n
            .inputs
            .iter()
            .map(|s| match s {
                Src::Input => input_slot.clone().expect("input live until its last use"),
                Src::Node(j) => slots[*j].clone().expect("value live until its last use"),
            })
            .collect();
        let value = if let OpSpec::Result = n.op {
            ins[0].clone()
        } else {
            let channels = ins.first().map_or(0, |v| v.shape()[0]);
            let (w, b) = materialize(n, channels).map_err(|e| e.at_node(&n.name))?;
            let refs: Vec<&Value> = ins.iter().map(|v| v.as_ref()).collect();
            Arc::new(ex.run_node(n, &refs, w, b).map_err(|e| e.at_node(&n.name))?)
        };
        drop(ins);
        let (level, scale) = match value.as_cipher() {
            Some(t) => (t.level(), t.scale()),
            None => (None, None),
        };
        if level.is_some() && level != plan.nodes[i] {
            return Err(Error::Node {
                node: n.name.clone(),
                source: Box::new(Error::LevelMismatch(plan.nodes[i].unwrap_or(0), level.unwrap_or(0))),
            });
        }
        let out_bytes = if matches!(n.op, OpSpec::Result) { 0 } else { value.byte_size() };
        peak = peak.max(live + out_bytes);
        if ends[i].is_some() {
            live += out_bytes;
            slots[i] = Some(value);
        }
        if input_end == Some(i) {
            live -= input_slot.take().map_or(0, |v| v.byte_size());
        }
        for j in 0..i {
            if ends[j] == Some(i) {
                let bytes = if matches!(g.nodes[j].op, OpSpec::Result) { 0 } else { slots[j].as_ref().map_or(0, |v| v.byte_size()) };
                live -= bytes;
                slots[j] = None;
            }
        }
        records.push(NodeRecord { name: n.name.clone(), kind: n.kind(), seconds: t0.elapsed().as_secs_f64(), level, scale });
    }
    if record::is_recording() {
        record::set_tag(0);
    }
    let output = match g.nodes[g.result].inputs[0] {
        Src::Input => input_slot.take().expect("result input"),
        Src::Node(j) => slots[j].take().expect("result value"),
    };
    drop(slots);
    let output = Arc::try_unwrap(output).unwrap_or_else(|a| (*a).clone());
    Ok(ExecutionReport {
        output,
        decrypted: None,
        nodes: records,
        total_seconds: start.elapsed().as_secs_f64(),
        peak_ciphertext_bytes: peak,
        weight_bytes: ex.weight_bytes,
        trace: None,
    })
}
