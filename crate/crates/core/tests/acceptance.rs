//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use hemm_core::ckks::{kernels, Ciphertext, CkksContext, CkksParams};
use hemm_core::inference::{
    fixtures, footprint_estimate, load_model, run_graph, ModelDoc, OpSpec, RunConfig, Value, Weights,
};
use hemm_core::memsim::record::{self, AccessEvent, AccessKind, AccessTrace};
use hemm_core::memsim::{report_table, simulate, tag_kind, MemSimConfig, OpKind};
use hemm_core::packing::{decrypt_tensor, encrypt_batched, pack_batch_axis, BatchedTensor};
use hemm_core::protocol::{spawn_server, ClientService, LoopbackDelegate, TcpDelegate};
use hemm_core::rns::Modulus;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_ckks_correctness() -> Outcome {
    let ctx = CkksContext::new(CkksParams::standard()).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (sk, pk) = ctx.keygen(&mut rng);
    let (mut enc_err, mut mul_err) = (0f64, 0f64);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..ctx.slots()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w: Vec<f64> = (0..ctx.slots()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let pt = ctx.encode(&v, ctx.scale()).map_err(err)?;
        let ct = ctx.encrypt(&pk, &pt, &mut rng).map_err(err)?;
        let back = ctx.decode(&ctx.decrypt(&sk, &ct).map_err(err)?).map_err(err)?;
        enc_err = enc_err.max(max_err(&back, &v));

        let level = ct.level();
        let wp = ctx.encode_at(&w, ctx.prime_at(level), level).map_err(err)?;
        let prod = ctx.rescale(&ctx.mul_cipher_plain(&ct, &wp).map_err(err)?).map_err(err)?;
        let got = ctx.decode(&ctx.decrypt(&sk, &prod).map_err(err)?).map_err(err)?;
        let want: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
        mul_err = mul_err.max(max_err(&got, &want));
    }
    ensure!(enc_err <= 1e-4, "round-trip error {enc_err:.3e} > 1e-4");
    ensure!(mul_err <= 1e-3, "multiply+rescale error {mul_err:.3e} > 1e-3");
    Ok(format!("1000 vectors, round trip {enc_err:.2e}, multiply+rescale {mul_err:.2e}"))
}

fn big_add(c: u64, p: u64, q: u64) -> u64 {
    ((BigUint::from(c) + BigUint::from(p)) % BigUint::from(q)).try_into().unwrap()
}

fn big_mul(c: u64, p: u64, q: u64) -> u64 {
    ((BigUint::from(c) * BigUint::from(p)) % BigUint::from(q)).try_into().unwrap()
}

fn c2_algorithm_fidelity() -> Outcome {
    // Exhaustive N = 4 grid over a single modulus.
    let q17 = [Modulus::new(17)];
    let mut grid = 0u64;
    for code in 0..17u64.pow(4) {
        let c: Vec<u64> = (0..4).map(|i| (code / 17u64.pow(i)) % 17).collect();
        for p in 0..17 {
            let mut a = c.clone();
            kernels::add_cipher_plain_scalar(&mut a, 4, &[p], &q17);
            let mut m = c.clone();
            kernels::mul_cipher_plain_scalar(&mut m, 4, &[p], &q17);
            for i in 0..4 {
                ensure!(a[i] == big_add(c[i], p, 17), "add mismatch c={} p={p}", c[i]);
                ensure!(m[i] == big_mul(c[i], p, 17), "mul mismatch c={} p={p}", c[i]);
            }
            grid += 1;
        }
    }
    // Every residue pair of a 13-bit prime against wide division.
    let q = [Modulus::new(7681)];
    let ps: Vec<u64> = (0..7681).collect();
    for c in 0..7681u64 {
        let mut a = vec![c; 7681];
        let mut m = vec![c; 7681];
        for (i, &p) in ps.iter().enumerate() {
            kernels::add_cipher_plain_scalar(&mut a[i..i + 1], 1, &[p], &q);
            kernels::mul_cipher_plain_scalar(&mut m[i..i + 1], 1, &[p], &q);
            ensure!(a[i] as u128 == (c as u128 + p as u128) % 7681, "add mismatch {c} {p}");
            ensure!(m[i] as u128 == (c as u128 * p as u128) % 7681, "mul mismatch {c} {p}");
        }
    }
    // Random cases at full parameters, through the context API.
    let ctx = CkksContext::new(CkksParams::standard()).map_err(err)?;
    let moduli = ctx.rns().moduli().to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (_, pk) = ctx.keygen(&mut rng);
    let mut cases = 0u64;
    let zero = ctx.encode(&[0.0], ctx.scale()).map_err(err)?;
    let ct: Ciphertext = ctx.encrypt(&pk, &zero, &mut rng).map_err(err)?;
    let n = ctx.degree();
    let limbs = ct.level() + 1;
    let p_add = ctx.encode_scalar(0.73, ctx.scale(), ct.level()).map_err(err)?;
    let p_mul = ctx.encode_scalar(-0.41, ctx.prime_at(ct.level()), ct.level()).map_err(err)?;
    let added = ctx.add_cipher_plain_scalar(&ct, &p_add).map_err(err)?;
    let multiplied = ctx.mul_cipher_plain_scalar(&ct, &p_mul).map_err(err)?;
    for l in 0..limbs {
        let qv = moduli[l].value();
        for i in 0..n {
            let c0 = ct.c0().limb(l)[i];
            let c1 = ct.c1().limb(l)[i];
            ensure!(added.c0().limb(l)[i] == big_add(c0, p_add.residues()[l], qv), "context add c0 mismatch");
            ensure!(added.c1().limb(l)[i] == c1, "context add touched c1");
            ensure!(multiplied.c0().limb(l)[i] == big_mul(c0, p_mul.residues()[l], qv), "context mul c0 mismatch");
            ensure!(multiplied.c1().limb(l)[i] == big_mul(c1, p_mul.residues()[l], qv), "context mul c1 mismatch");
            cases += 1;
        }
    }
    for _ in 0..100_000 {
        let c: Vec<u64> = moduli.iter().flat_map(|m| (0..4).map(|_| rng.random_range(0..m.value())).collect::<Vec<_>>()).collect();
        let p: Vec<u64> = moduli.iter().map(|m| rng.random_range(0..m.value())).collect();
        let mut a = c.clone();
        kernels::add_cipher_plain_scalar(&mut a, 4, &p, &moduli);
        let mut m = c.clone();
        kernels::mul_cipher_plain_scalar(&mut m, 4, &p, &moduli);
        for (idx, &cv) in c.iter().enumerate() {
            let l = idx / 4;
            let qv = moduli[l].value();
            ensure!(a[idx] == big_add(cv, p[l], qv), "add mismatch c={cv} p={} q={qv}", p[l]);
            ensure!(m[idx] == big_mul(cv, p[l], qv), "mul mismatch c={cv} p={} q={qv}", p[l]);
        }
        cases += 1;
    }
    Ok(format!("{grid} grid cases at q=17, 7681^2 pairs at q=7681, {cases} full-parameter cases, all bit-exact"))
}

fn c3_slot_capacity() -> Outcome {
    let ctx = CkksContext::new(CkksParams::standard()).map_err(err)?;
    let ok = BatchedTensor::zeros([2048, 1, 1, 1]).map_err(err)?;
    let too_big = BatchedTensor::zeros([2049, 1, 1, 1]).map_err(err)?;
    ensure!(pack_batch_axis(&ctx, &ok, ctx.scale()).is_ok(), "batch 2048 rejected");
    ensure!(pack_batch_axis(&ctx, &too_big, ctx.scale()).is_err(), "batch 2049 accepted");
    Ok("2048 accepted, 2049 rejected at N=4096".into())
}

/// Plain float forward pass over a model document, written independently of
/// the encrypted executor.
fn float_forward(doc: &ModelDoc, x: &[f64]) -> Vec<f64> {
    type T = (Vec<f64>, [usize; 3]);
    let mut vals: BTreeMap<String, T> = BTreeMap::new();
    vals.insert("input".into(), (x.to_vec(), doc.input_shape));
    let mut result = None;
    for node in &doc.nodes {
        let (xin, [c, h, w]) = vals[&node.inputs.first().cloned().unwrap_or_default()].clone();
        let out: T = match &node.op {
            OpSpec::Convolution { out_channels: oc, kernel, stride, padding, groups, weights, bias } => {
                let (kh, kw) = (kernel[0], kernel[1]);
                let cin = c / groups;
                let wv = weights.materialize(oc * cin * kh * kw).unwrap();
                let bv = bias.as_ref().map(|b| b.materialize(*oc).unwrap()).unwrap_or(vec![0.0; *oc]);
                let oh = (h + 2 * padding[0] - kh) / stride[0] + 1;
                let ow = (w + 2 * padding[1] - kw) / stride[1] + 1;
                let mut o = vec![0.0; oc * oh * ow];
                for co in 0..*oc {
                    let g = co / (oc / groups);
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut s = bv[co];
                            for ci in 0..cin {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let iy = (y * stride[0] + ky) as i64 - padding[0] as i64;
                                        let ix = (xx * stride[1] + kx) as i64 - padding[1] as i64;
                                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                            let v = xin[((g * cin + ci) * h + iy as usize) * w + ix as usize];
                                            s += wv[((co * cin + ci) * kh + ky) * kw + kx] * v;
                                        }
                                    }
                                }
                            }
                            o[(co * oh + y) * ow + xx] = s;
                        }
                    }
                }
                (o, [*oc, oh, ow])
            }
            OpSpec::BoundedRelu { bound } => {
                (xin.iter().map(|v| v.max(0.0).min(bound.unwrap_or(f64::INFINITY))).collect(), [c, h, w])
            }
            OpSpec::AvgPool { kernel: None, .. } => {
                ((0..c).map(|ch| xin[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64).collect(), [c, 1, 1])
            }
            OpSpec::Multiply { weights: Some(wt) } => {
                let wv = match wt {
                    Weights::Values(v) => v.clone(),
                    Weights::Random { .. } => wt.materialize(c).unwrap(),
                };
                (xin.iter().enumerate().map(|(i, v)| v * if wv.len() == 1 { wv[0] } else { wv[i / (h * w)] }).collect(), [c, h, w])
            }
            OpSpec::Add => {
                let other = &vals[&node.inputs[1]].0;
                (xin.iter().zip(other).map(|(a, b)| a + b).collect(), [c, h, w])
            }
            OpSpec::Result => {
                result = Some(xin.clone());
                (xin, [c, h, w])
            }
            other => panic!("reference forward does not cover {other:?}"),
        };
        vals.insert(node.name.clone(), out);
    }
    result.expect("model has a result")
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::MIN), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0
}

fn c4_c9_end_to_end() -> (Outcome, Outcome) {
    let run = || -> Result<(String, String), String> {
        let ctx = CkksContext::new(CkksParams::standard()).map_err(err)?;
        // keygen, persisted and reloaded.
        let (sk0, pk0) = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(3));
        let sk = ctx.deserialize_secret_key(&ctx.serialize_secret_key(&sk0)).map_err(err)?;
        let pk = ctx.deserialize_public_key(&ctx.serialize_public_key(&pk0)).map_err(err)?;

        let doc = fixtures::toy_cnn();
        let g = load_model(&doc).map_err(err)?;
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let batch = 32;
        let x = BatchedTensor::new([batch, 1, 8, 8], (0..batch * 64).map(|_| rng.random_range(0.0..1.0)).collect()).map_err(err)?;
        let mut file = Vec::new();
        x.write_to(&mut file).map_err(err)?;
        let x = BatchedTensor::read_from(file.as_slice()).map_err(err)?;

        // encrypt, persisted and reloaded.
        let enc = encrypt_batched(&ctx, &pk, &x, 5).map_err(err)?;
        let enc_bytes = ctx.serialize_cipher_tensor(&enc);

        // serve over TCP, infer, decrypt.
        let service = Arc::new(ClientService::new(ctx.clone(), sk.clone(), pk.clone(), 6));
        let server = spawn_server("127.0.0.1:0", service).map_err(err)?;
        let tcp = TcpDelegate::new(server.local_addr()).map_err(err)?;
        let infer = |workers: usize| -> Result<(Value, f64), String> {
            let input = ctx.deserialize_cipher_tensor(&enc_bytes).map_err(err)?;
            let cfg = RunConfig { workers, delegate: Some(&tcp), ..RunConfig::default() };
            let t = Instant::now();
            let rep = run_graph(&ctx, &g, input, &cfg).map_err(err)?;
            Ok((rep.output, t.elapsed().as_secs_f64()))
        };
        let (first, secs) = infer(1)?;
        let out = match &first {
            Value::Cipher(t) => ctx.deserialize_cipher_tensor(&ctx.serialize_cipher_tensor(t)).map_err(err)?,
            Value::Plain(_) => return Err("toy CNN produced a plain output".into()),
        };
        let logits = decrypt_tensor(&ctx, &sk, &out).map_err(err)?;

        let mut agree = 0;
        let mut worst = 0f64;
        for k in 0..batch {
            let want = float_forward(&doc, x.sample(k));
            let got = logits.sample(k);
            worst = worst.max(max_err(got, &want));
            agree += usize::from(argmax(got) == argmax(&want));
        }
        let c4 = if agree * 100 >= 95 * batch && worst <= 1e-2 {
            Ok(format!("argmax agreement {agree}/{batch}, max logit error {worst:.2e}, infer {secs:.1}s over TCP"))
        } else {
            Err(format!("argmax agreement {agree}/{batch}, max logit error {worst:.2e}"))
        };

        let max = hemm_core::par::available().max(2);
        let mut checked = Vec::new();
        for workers in [1, 4, max, 1] {
            let (again, _) = infer(workers)?;
            if again != first {
                server.shutdown();
                return Ok((c4.unwrap_or_else(|e| format!("FAIL {e}")), format!("FAIL output differs with {workers} workers")));
            }
            checked.push(workers.to_string());
        }
        server.shutdown();
        let c9 = format!("bit-identical outputs for workers {{{}}} and a repeated run", checked[..3].join(", "));
        Ok((c4.map_err(|e| format!("FAIL {e}")).unwrap_or_else(|e| e), c9))
    };
    match run() {
        Ok((c4, c9)) => {
            let wrap = |s: String| if let Some(r) = s.strip_prefix("FAIL ") { Err(r.to_string()) } else { Ok(s) };
            (wrap(c4), wrap(c9))
        }
        Err(e) => (Err(e.clone()), Err(e)),
    }
}

fn c5_prefetch() -> Outcome {
    let scan = |stride: u64, count: u64| AccessTrace {
        address_space: stride * count,
        events: (0..count).map(|i| AccessEvent { addr: i * stride, len: 64, kind: AccessKind::Load, tag: 1 }).collect(),
    };
    let cfg = MemSimConfig::with_capacity(64 * 1024);
    let seq = simulate(&scan(64, 1 << 14), &cfg).map_err(err)?.prefetch_hit_ratio();
    let strided = simulate(&scan(256, 1 << 12), &cfg).map_err(err)?.prefetch_hit_ratio();
    ensure!((seq - 0.75).abs() <= 0.01, "sequential hit ratio {seq}");
    ensure!(strided == 0.0, "stride-256 hit ratio {strided}");
    Ok(format!("1 MiB sequential scan {seq:.4}, stride-256 scan {strided}"))
}

fn c6_ratio_ordering() -> Outcome {
    let ctx = CkksContext::new(CkksParams::insecure_test(1024)).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (sk, pk) = ctx.keygen(&mut rng);
    let client = LoopbackDelegate::new(Arc::new(ClientService::new(ctx.clone(), sk, pk.clone(), 8)));
    let g = load_model(&fixtures::scaled_mobilenet()).map_err(err)?;
    let x = BatchedTensor::new([32, 3, 16, 16], (0..32 * 768).map(|_| rng.random_range(0.0..1.0)).collect()).map_err(err)?;
    let input = encrypt_batched(&ctx, &pk, &x, 9).map_err(err)?;
    let cfg = RunConfig { delegate: Some(&client), record: true, ..RunConfig::default() };
    let trace = run_graph(&ctx, &g, input, &cfg).map_err(err)?.trace.ok_or("no trace")?;
    let capacity = (trace.address_space / 8 / 64).max(1) * 64;
    let report = simulate(&trace, &MemSimConfig::with_capacity(capacity)).map_err(err)?;
    let table = report_table(&report);
    let ratio = |name: &str| table.row(name).map(|r| r.ratio()).ok_or(format!("no {name} row"));
    let (conv, add, mul) = (ratio("Convolution")?, ratio("Add")?, ratio("Multiply")?);
    ensure!(conv > add && conv > mul, "Convolution {conv:.2}, Add {add:.2}, Multiply {mul:.2}");
    Ok(format!(
        "Convolution {conv:.2} > Add {add:.2}, Multiply {mul:.2} (cache {} KiB of {} KiB working set)",
        capacity / 1024,
        trace.address_space / 1024
    ))
}

fn c7_sequentiality() -> Outcome {
    let ascending_lines = |e: &AccessEvent| (0..e.len as u64 / 64).map(|i| e.addr + 64 * i).collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]);
    // Fixture traces.
    let ctx = CkksContext::new(CkksParams::insecure_test(256)).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let (sk, pk) = ctx.keygen(&mut rng);
    let client = LoopbackDelegate::new(Arc::new(ClientService::new(ctx.clone(), sk, pk.clone(), 11)));
    let limb = ctx.degree() as u32 * 8;
    let mut fixture_events = 0usize;
    for doc in [fixtures::toy_cnn(), fixtures::scaled_mobilenet()] {
        let g = load_model(&doc).map_err(err)?;
        let s = g.input_shape;
        let x = BatchedTensor::zeros([4, s[0], s[1], s[2]]).map_err(err)?;
        let input = encrypt_batched(&ctx, &pk, &x, 12).map_err(err)?;
        let cfg = RunConfig { delegate: Some(&client), record: true, ..RunConfig::default() };
        let trace = run_graph(&ctx, &g, input, &cfg).map_err(err)?.trace.ok_or("no trace")?;
        for e in &trace.events {
            let kind = tag_kind(e.tag);
            if matches!(kind, OpKind::Convolution | OpKind::Multiply | OpKind::AvgPool | OpKind::Add) {
                ensure!(e.len == limb && ascending_lines(e), "{} event at {:#x} is not one ascending limb sweep", kind.name(), e.addr);
                fixture_events += 1;
            }
        }
    }
    // Per call: each polynomial's limb sweeps advance by one limb.
    let mut call_events = 0usize;
    let ct = ctx.encrypt(&pk, &ctx.encode(&[0.5], ctx.scale()).map_err(err)?, &mut rng).map_err(err)?;
    let other = ctx.encrypt(&pk, &ctx.encode(&[0.25], ctx.scale()).map_err(err)?, &mut rng).map_err(err)?;
    for level in (1..=ctx.max_level()).rev() {
        let a = ctx.copy_to_level(&ct, level).map_err(err)?;
        let b = ctx.copy_to_level(&other, level).map_err(err)?;
        let s_add = ctx.encode_scalar(0.1, a.scale(), level).map_err(err)?;
        let w_scale = if ctx.can_multiply(level) { ctx.prime_at(level) } else { 256.0 };
        let s_mul = ctx.encode_scalar(0.1, w_scale, level).map_err(err)?;
        let p_vec = ctx.encode_at(&[0.2, 0.3], a.scale(), level).map_err(err)?;
        let p_wvec = ctx.encode_at(&[0.2, 0.3], w_scale, level).map_err(err)?;
        type Call<'a> = Box<dyn Fn(&mut Ciphertext) -> hemm_core::Result<()> + 'a>;
        let calls: Vec<Call> = vec![
            Box::new(|c| ctx.add_cipher_plain_scalar_assign(c, &s_add)),
            Box::new(|c| ctx.mul_cipher_plain_scalar_assign(c, &s_mul)),
            Box::new(|c| ctx.mul_acc_cipher_plain_scalar_assign(c, &b, &s_mul)),
            Box::new(|c| ctx.add_cipher_plain_assign(c, &p_vec)),
            Box::new(|c| ctx.mul_cipher_plain_assign(c, &p_wvec)),
        ];
        for (i, call) in calls.iter().enumerate() {
            let mut target = if i == 2 { ctx.mul_cipher_plain_scalar(&a, &s_mul).map_err(err)? } else { a.clone() };
            record::start_recording().map_err(err)?;
            let done = call(&mut target);
            let trace = record::finish_recording().map_err(err)?;
            done.map_err(err)?;
            ensure!(!trace.is_empty(), "call recorded nothing");
            // Streams: stores, loads of stored addresses, other loads.
            let stored: std::collections::BTreeSet<u64> =
                trace.events.iter().filter(|e| e.kind == AccessKind::Store).map(|e| e.addr).collect();
            let mut streams: [Vec<u64>; 3] = Default::default();
            for e in &trace.events {
                ensure!(e.len == limb && ascending_lines(e), "event at {:#x} is not one ascending limb sweep", e.addr);
                let k = match (e.kind, stored.contains(&e.addr)) {
                    (AccessKind::Store, _) => 0,
                    (AccessKind::Load, true) => 1,
                    (AccessKind::Load, false) => 2,
                };
                streams[k].push(e.addr);
                call_events += 1;
            }
            for addrs in &streams {
                // Each polynomial sweep steps one limb at a time; at most
                // two sweeps (c0 then c1) per buffer per call.
                let restarts = addrs.windows(2).filter(|w| w[1] != w[0] + limb as u64).count();
                let descents = addrs.windows(2).filter(|w| w[1] <= w[0]).count();
                ensure!(restarts == descents && descents <= 1, "non-sequential sweep {addrs:?}");
            }
        }
    }
    Ok(format!("{fixture_events} fixture events and {call_events} per-call events, all ascending"))
}

fn c8_footprint() -> Outcome {
    let standard = CkksContext::new(CkksParams::standard()).map_err(err)?;
    let single: ModelDoc = serde_json::from_str(
        r#"{"version":1,"name":"single","input_shape":[1,1,1],"nodes":[{"name":"out","op":"Result","inputs":["input"]}]}"#,
    )
    .map_err(err)?;
    let single = load_model(&single).map_err(err)?;
    let one = footprint_estimate(&single, 1, &standard).map_err(err)?.total();
    ensure!(one == 262_144, "single ciphertext estimate {one}");

    let tiny = CkksContext::new(CkksParams::insecure_test(8)).map_err(err)?;
    let (sk, pk) = tiny.keygen(&mut ChaCha20Rng::seed_from_u64(13));
    let client = LoopbackDelegate::new(Arc::new(ClientService::new(tiny.clone(), sk, pk.clone(), 14)));
    let mut executed = Vec::new();
    for doc in [fixtures::toy_cnn(), fixtures::scaled_mobilenet(), fixtures::mobilenet_v2(0.35, 96, 1001)] {
        let g = load_model(&doc).map_err(err)?;
        let s = g.input_shape;
        let input = encrypt_batched(&tiny, &pk, &BatchedTensor::zeros([1, s[0], s[1], s[2]]).map_err(err)?, 15).map_err(err)?;
        let cfg = RunConfig { workers: hemm_core::par::available(), delegate: Some(&client), ..RunConfig::default() };
        let rep = run_graph(&tiny, &g, input, &cfg).map_err(err)?;
        let est = footprint_estimate(&g, 1, &tiny).map_err(err)?;
        ensure!(
            rep.peak_bytes() == est.total(),
            "{}: engine peak {} vs estimate {}",
            g.name,
            rep.peak_bytes(),
            est.total()
        );
        executed.push(g.name.clone());
    }

    let gb = |b: u64| b as f64 / 1e9;
    let mnv2 = load_model(&fixtures::mobilenet_v2(0.35, 96, 1001)).map_err(err)?;
    let m = gb(footprint_estimate(&mnv2, 2048, &standard).map_err(err)?.total());
    ensure!((71.0 / 4.0..=71.0 * 4.0).contains(&m), "MobileNetV2-(0.35,96) estimate {m:.1} GB outside [17.75, 284]");
    let resnet = load_model(&fixtures::resnet50(224, 1000)).map_err(err)?;
    let r = gb(footprint_estimate(&resnet, 2048, &standard).map_err(err)?.total());
    ensure!(r <= 900.0, "ResNet-50 estimate {r:.1} GB > 900");
    Ok(format!(
        "single ciphertext 262144 B; engine peak = estimate on {}; MobileNetV2-(0.35,96) {m:.1} GB; ResNet-50 {r:.1} GB",
        executed.join(", ")
    ))
}

fn report(id: u32, name: &str, outcome: &Outcome, secs: f64) -> bool {
    match outcome {
        Ok(detail) => println!("criterion {id}: PASS {name}: {detail} [{secs:.1}s]"),
        Err(reason) => println!("criterion {id}: FAIL {name}: {reason} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn guarded(f: &dyn Fn() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
    })
}

fn main() {
    // Optional criterion numbers select a subset; harness flags are ignored.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);
    let mut ok = true;
    let run = |id: u32, name: &str, f: &dyn Fn() -> Outcome| {
        if !wanted(id) {
            return true;
        }
        let t = Instant::now();
        let r = guarded(f);
        report(id, name, &r, t.elapsed().as_secs_f64())
    };
    ok &= run(1, "CKKS correctness", &c1_ckks_correctness);
    ok &= run(2, "scalar kernels vs big-integer oracle", &c2_algorithm_fidelity);
    ok &= run(3, "slot capacity", &c3_slot_capacity);
    let t = Instant::now();
    let (c4, c9) = if !wanted(4) && !wanted(9) {
        (Err("skipped".into()), Err("skipped".into()))
    } else {
        catch_unwind(c4_c9_end_to_end).unwrap_or_else(|_| (Err("panic".into()), Err("panic".into())))
    };
    let e2e = t.elapsed().as_secs_f64();
    if wanted(4) {
        ok &= report(4, "end-to-end encrypted inference", &c4, e2e);
    }
    ok &= run(5, "prefetch hit ratio", &c5_prefetch);
    ok &= run(6, "DRAM/PMem ratio ordering", &c6_ratio_ordering);
    ok &= run(7, "sequential cipher-plain sweeps", &c7_sequentiality);
    ok &= run(8, "footprint estimator", &c8_footprint);
    if wanted(9) {
        ok &= report(9, "determinism across worker counts (timed with criterion 4)", &c9, 0.0);
    }
    if !ok {
        std::process::exit(1);
    }
}
