use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use hemm_core::inference::{fixtures, ModelDoc, OpSpec};
use hemm_core::packing::BatchedTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

const SMALL: [&str; 4] = ["--degree", "1024", "--allow-insecure", "--seed=7"];

fn hemm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemm"))
        .args(args)
        .env_remove("HEMM_DEGREE")
        .env_remove("HEMM_WORKERS")
        .env_remove("HEMM_CONFIG")
        .env_remove("HEMM_ENDPOINT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hemm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    hemm(args).status.code().unwrap()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(TempDir::new().unwrap())
    }

    fn p(&self, name: &str) -> String {
        self.0.path().join(name).to_str().unwrap().to_string()
    }
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: Vec<String>) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn write_input(path: &str, shape: [usize; 4], seed: u64) -> BatchedTensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t = BatchedTensor::new(shape, (0..shape.iter().product()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    t.write_to(std::fs::File::create(path).unwrap()).unwrap();
    t
}

fn read_tensor(path: &str) -> BatchedTensor {
    BatchedTensor::read_from(std::fs::File::open(path).unwrap()).unwrap()
}

/// Float forward for the toy CNN's op set.
fn float_forward(doc: &ModelDoc, x: &[f64]) -> Vec<f64> {
    let mut cur = (x.to_vec(), doc.input_shape);
    for node in &doc.nodes {
        let (xin, [c, h, w]) = cur.clone();
        cur = match &node.op {
            OpSpec::Convolution { out_channels: oc, kernel, stride, padding, weights, bias, .. } => {
                let k = kernel[0];
                let wv = weights.materialize(oc * c * k * k).unwrap();
                let bv = bias.as_ref().unwrap().materialize(*oc).unwrap();
                let oh = (h + 2 * padding[0] - k) / stride[0] + 1;
                let ow = (w + 2 * padding[1] - k) / stride[1] + 1;
                let mut o = Vec::new();
                for co in 0..*oc {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut s = bv[co];
                            for ci in 0..c {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (y * stride[0] + ky) as i64 - padding[0] as i64;
                                        let ix = (xx * stride[1] + kx) as i64 - padding[1] as i64;
                                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                            s += wv[((co * c + ci) * k + ky) * k + kx] * xin[(ci * h + iy as usize) * w + ix as usize];
                                        }
                                    }
                                }
                            }
                            o.push(s);
                        }
                    }
                }
                (o, [*oc, oh, ow])
            }
            OpSpec::BoundedRelu { bound } => (xin.iter().map(|v| v.clamp(0.0, bound.unwrap())).collect(), [c, h, w]),
            OpSpec::AvgPool { .. } => ((0..c).map(|i| xin[i * h * w..(i + 1) * h * w].iter().sum::<f64>() / (h * w) as f64).collect(), [c, 1, 1]),
            OpSpec::Result => (xin, [c, h, w]),
            other => panic!("unexpected op {other:?}"),
        };
    }
    cur.0
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}

fn keygen(d: &Dir, base: &[&str]) {
    run(with(base, &["keygen", "--secret-key", &d.p("sk"), "--public-key", &d.p("pk")]));
}

#[test]
fn keygen_encrypt_infer_decrypt_matches_float_argmax() {
    let d = Dir::new();
    let base: [&str; 1] = ["--seed=3"];
    keygen(&d, &base);
    let x = write_input(&d.p("x.hetn"), [32, 1, 8, 8], 1);
    run(with(&base, &["encrypt", "--public-key", &d.p("pk"), "--input", &d.p("x.hetn"), "--output", &d.p("x.hect")]));
    let text = run(with(
        &base,
        &[
            "infer", "--fixture", "toy-cnn", "--input", &d.p("x.hect"), "--output", &d.p("y.hect"), "--loopback",
            "--secret-key", &d.p("sk"), "--public-key", &d.p("pk"), "--report", &d.p("r.csv"),
        ],
    ));
    assert!(text.contains("Convolution"));
    assert!(std::fs::read_to_string(d.p("r.csv")).unwrap().starts_with("function,count,time_s,share_pct"));
    run(with(&base, &["decrypt", "--secret-key", &d.p("sk"), "--input", &d.p("y.hect"), "--output", &d.p("y.hetn")]));
    let y = read_tensor(&d.p("y.hetn"));
    assert_eq!(y.shape(), [32, 10, 1, 1]);
    let doc = fixtures::toy_cnn();
    let agree = (0..32).filter(|&k| argmax(y.sample(k)) == argmax(&float_forward(&doc, x.sample(k)))).count();
    assert!(agree * 100 >= 95 * 32, "argmax agreement {agree}/32");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(base: &[&str], d: &Dir) -> (Server, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_hemm"))
        .args(base)
        .args(["serve", "--secret-key", &d.p("sk"), "--public-key", &d.p("pk"), "--endpoint", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    (Server(child), addr)
}

#[test]
fn tcp_service_matches_loopback_and_runs_are_idempotent() {
    let d = Dir::new();
    keygen(&d, &SMALL);
    let first_sk = std::fs::read(d.p("sk")).unwrap();
    keygen(&d, &SMALL);
    assert_eq!(std::fs::read(d.p("sk")).unwrap(), first_sk);

    write_input(&d.p("x.hetn"), [8, 1, 8, 8], 2);
    let enc = |out: &str| run(with(&SMALL, &["encrypt", "--public-key", &d.p("pk"), "--input", &d.p("x.hetn"), "--output", out]));
    enc(&d.p("x.hect"));
    enc(&d.p("x2.hect"));
    assert_eq!(std::fs::read(d.p("x.hect")).unwrap(), std::fs::read(d.p("x2.hect")).unwrap());

    let (_server, addr) = start_server(&SMALL, &d);
    let infer = |out: &str, extra: &[&str]| {
        let mut a = with(&SMALL, &["infer", "--fixture", "toy-cnn", "--input", &d.p("x.hect"), "--output", out]);
        a.extend(extra.iter().map(|s| s.to_string()));
        run(a)
    };
    infer(&d.p("tcp.hect"), &["--endpoint", &addr, "--workers", "2"]);
    infer(&d.p("tcp2.hect"), &["--endpoint", &addr]);
    infer(&d.p("loop.hect"), &["--loopback", "--secret-key", &d.p("sk"), "--public-key", &d.p("pk")]);
    let tcp = std::fs::read(d.p("tcp.hect")).unwrap();
    assert_eq!(tcp, std::fs::read(d.p("tcp2.hect")).unwrap());
    assert_eq!(tcp, std::fs::read(d.p("loop.hect")).unwrap());
}

#[test]
fn trace_simulate_and_report() {
    let d = Dir::new();
    keygen(&d, &SMALL);
    write_input(&d.p("x.hetn"), [4, 1, 8, 8], 3);
    run(with(&SMALL, &["encrypt", "--public-key", &d.p("pk"), "--input", &d.p("x.hetn"), "--output", &d.p("x.hect")]));
    let infer = |workers: &str| {
        with(
            &SMALL,
            &[
                "infer", "--fixture", "toy-cnn", "--input", &d.p("x.hect"), "--output", &d.p("y.hect"), "--trace",
                &d.p("t.hetr"), "--loopback", "--secret-key", &d.p("sk"), "--public-key", &d.p("pk"), "--workers", workers,
            ],
        )
    };
    let bad = infer("4");
    assert_eq!(code(&bad.iter().map(String::as_str).collect::<Vec<_>>()), 2);
    run(infer("1"));
    let summary = run(with(&SMALL, &["simulate", "--trace", &d.p("t.hetr"), "--output", &d.p("m.json"), "--capacity", "262144"]));
    assert!(summary.contains("prefetch hit ratio"));
    let csv = ok(&["report", "--input", &d.p("m.json"), "--format", "csv", "--timeline", &d.p("tl.csv")]);
    assert!(csv.starts_with("function,dram_loads,dram_share_pct,pmem_loads,pmem_share_pct,stores,ratio\n"));
    assert!(csv.contains("\nConvolution,"));
    let text = ok(&["report", "--input", &d.p("m.json")]);
    assert!(text.contains("Total"));
    assert!(std::fs::read_to_string(d.p("tl.csv")).unwrap().starts_with("window,hit_ratio\n0,"));
    assert_eq!(code(&["simulate", "--trace", &d.p("t.hetr"), "--output", &d.p("m.json"), "--capacity", "100"]), 2);
}

#[test]
fn estimate_single_ciphertext_and_fixtures() {
    let d = Dir::new();
    let single = r#"{"version":1,"name":"single","input_shape":[1,1,1],"nodes":[{"name":"out","op":"Result","inputs":["input"]}]}"#;
    std::fs::write(d.p("m.json"), single).unwrap();
    let out: serde_json::Value = serde_json::from_str(&ok(&["estimate", "--model", &d.p("m.json")])).unwrap();
    assert_eq!(out["total_bytes"], 262_144);
    let out: serde_json::Value =
        serde_json::from_str(&ok(&["estimate", "--fixture", "mobilenet-v2-0.35-96", "--batch", "2048"])).unwrap();
    let gb = out["total_gb"].as_f64().unwrap();
    assert!((17.75..=284.0).contains(&gb), "{gb}");
    let names = ok(&["fixture", "list"]);
    assert!(names.lines().any(|l| l == "resnet50"));
    ok(&["fixture", "export", "scaled-mobilenet", "--output", &d.p("s.json")]);
    let doc = ModelDoc::from_json(&std::fs::read_to_string(d.p("s.json")).unwrap()).unwrap();
    assert_eq!(doc, fixtures::scaled_mobilenet());
}

#[test]
fn exit_codes_by_failure_class() {
    let d = Dir::new();
    // Insecure ring without the flag.
    assert_eq!(code(&["--degree", "1024", "keygen", "--secret-key", &d.p("sk"), "--public-key", &d.p("pk")]), 2);
    // Missing file.
    assert_eq!(code(&["decrypt", "--secret-key", &d.p("nope"), "--input", &d.p("nope"), "--output", &d.p("o")]), 3);
    keygen(&d, &SMALL);
    // Corrupt cipher tensor.
    std::fs::write(d.p("junk.hect"), b"HECTjunk").unwrap();
    let decrypt = with(&SMALL, &["decrypt", "--secret-key", &d.p("sk"), "--input", &d.p("junk.hect"), "--output", &d.p("o")]);
    assert_eq!(code(&decrypt.iter().map(String::as_str).collect::<Vec<_>>()), 6);
    // Keys made for another ring.
    let other = ["--degree", "2048", "--allow-insecure"];
    let wrong = with(&other, &["decrypt", "--secret-key", &d.p("sk"), "--input", &d.p("junk.hect"), "--output", &d.p("o")]);
    assert_eq!(code(&wrong.iter().map(String::as_str).collect::<Vec<_>>()), 2);

    write_input(&d.p("x.hetn"), [2, 1, 1, 1], 4);
    run(with(&SMALL, &["encrypt", "--public-key", &d.p("pk"), "--input", &d.p("x.hetn"), "--output", &d.p("x.hect")]));
    // Three chained products exhaust the levels.
    let deep = r#"{"version":1,"name":"deep","input_shape":[1,1,1],"nodes":[
        {"name":"m1","op":"Multiply","inputs":["input"],"weights":[1.0]},
        {"name":"m2","op":"Multiply","inputs":["m1"],"weights":[1.0]},
        {"name":"m3","op":"Multiply","inputs":["m2"],"weights":[1.0]},
        {"name":"out","op":"Result","inputs":["m3"]}]}"#;
    std::fs::write(d.p("deep.json"), deep).unwrap();
    let a = with(&SMALL, &["infer", "--model", &d.p("deep.json"), "--input", &d.p("x.hect"), "--output", &d.p("y")]);
    let out = hemm(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m3"));

    // A client holding keys for another ring answers with a protocol error.
    let d2 = Dir::new();
    keygen(&d2, &["--degree", "2048", "--allow-insecure"]);
    let (_server, addr) = start_server(&["--degree", "2048", "--allow-insecure"], &d2);
    let relu = r#"{"version":1,"name":"r","input_shape":[1,1,1],"nodes":[
        {"name":"r","op":"BoundedRelu","inputs":["input"]},{"name":"out","op":"Result","inputs":["r"]}]}"#;
    std::fs::write(d.p("relu.json"), relu).unwrap();
    let a = with(&SMALL, &["infer", "--model", &d.p("relu.json"), "--input", &d.p("x.hect"), "--output", &d.p("y"), "--endpoint", &addr]);
    assert_eq!(code(&a.iter().map(String::as_str).collect::<Vec<_>>()), 4);
}

#[test]
fn flags_override_environment_override_file() {
    let d = Dir::new();
    let cfg: PathBuf = Path::new(&d.p("hemm.toml")).to_path_buf();
    std::fs::write(&cfg, "seed = 1\n[params]\ndegree = 2048\nallow_insecure = true\n").unwrap();
    let gen = |env_degree: Option<&str>, flags: &[&str], name: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hemm"));
        cmd.env_remove("HEMM_DEGREE").env("HEMM_CONFIG", &cfg);
        if let Some(v) = env_degree {
            cmd.env("HEMM_DEGREE", v);
        }
        let st = cmd.args(flags).args(["keygen", "--secret-key", &d.p(name), "--public-key", &d.p("pk")]).status().unwrap();
        assert!(st.success());
        // N is the little-endian u32 after magic and version.
        let b = std::fs::read(d.p(name)).unwrap();
        u32::from_le_bytes(b[6..10].try_into().unwrap())
    };
    assert_eq!(gen(None, &[], "a"), 2048);
    assert_eq!(gen(Some("1024"), &[], "b"), 1024);
    assert_eq!(gen(Some("1024"), &["--degree", "512"], "c"), 512);
}
