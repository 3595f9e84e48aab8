use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hemm_core::ckks::{CkksContext, PublicKey, SecretKey};
use hemm_core::inference::{fixtures, footprint_estimate, load_model, run_graph, ModelDoc, ModelGraph, RunConfig, Value};
use hemm_core::memsim::{report_table, simulate, AccessTrace, MemSimReport};
use hemm_core::packing::{decrypt_tensor, encrypt_batched, BatchedTensor};
use hemm_core::protocol::{serve, ClientService, Delegate, LoopbackDelegate, TcpDelegate};
use hemm_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::{CommonArgs, MemSimArgs, Resolved};

#[derive(Debug, Parser)]
#[command(name = "hemm", version, about = "Leveled CKKS inference and hybrid-memory access simulation")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a secret/public key pair.
    Keygen {
        #[arg(long)]
        secret_key: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
    },
    /// Encrypt a tensor file (HETN) into a cipher-tensor file (HECT).
    Encrypt {
        #[arg(long)]
        public_key: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decrypt a cipher-tensor file into a tensor file.
    Decrypt {
        #[arg(long)]
        secret_key: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a model over an encrypted batch.
    Infer(InferArgs),
    /// Run the key-holding client service.
    Serve {
        #[arg(long)]
        secret_key: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
        /// Artificial delay added to every response, in milliseconds.
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
    /// Replay an access trace through the memory simulator.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        /// Where to write the report (JSON).
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        memsim: MemSimArgs,
    },
    /// Render a simulator report as a per-function table.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write the prefetch hit-ratio timeline as CSV.
        #[arg(long)]
        timeline: Option<PathBuf>,
    },
    /// Estimate ciphertext and weight memory for a model and batch size.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1)]
        batch: usize,
    },
    /// Built-in model documents.
    Fixture {
        #[command(subcommand)]
        action: FixtureAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixtureAction {
    /// List fixture names.
    List,
    /// Write a fixture's model document as JSON.
    Export {
        name: String,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Model document (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Built-in fixture name.
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Encrypted input (HECT).
    #[arg(long)]
    input: PathBuf,
    /// Encrypted output (HECT).
    #[arg(long)]
    output: PathBuf,
    /// Per-function timing table (CSV); the text form goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record the access trace (requires one worker) and write it here (HETR).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Serve client-aided ops in-process with these keys instead of over TCP.
    #[arg(long, requires_all = ["secret_key", "public_key"], conflicts_with = "endpoint")]
    loopback: bool,
    #[arg(long)]
    secret_key: Option<PathBuf>,
    #[arg(long)]
    public_key: Option<PathBuf>,
    /// Ciphertexts per client request.
    #[arg(long, default_value_t = 4096)]
    max_request: usize,
}

fn context(r: &Resolved) -> Result<Arc<CkksContext>> {
    CkksContext::new(r.params.clone())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_keys(ctx: &CkksContext, sk: Option<&Path>, pk: Option<&Path>) -> Result<(Option<SecretKey>, Option<PublicKey>)> {
    let sk = sk.map(|p| ctx.deserialize_secret_key(&read(p)?)).transpose()?;
    let pk = pk.map(|p| ctx.deserialize_public_key(&read(p)?)).transpose()?;
    Ok((sk, pk))
}

fn load_doc(m: &ModelArgs) -> Result<ModelDoc> {
    match (&m.model, &m.fixture) {
        (Some(p), _) => ModelDoc::from_json(&String::from_utf8_lossy(&read(p)?)),
        (None, Some(name)) => fixtures::by_name(name)
            .ok_or_else(|| Error::Config(format!("unknown fixture `{name}`; known: {}", fixtures::FIXTURE_NAMES.join(", ")))),
        (None, None) => Err(Error::Config("give --model or --fixture".into())),
    }
}

fn load_graph(m: &ModelArgs) -> Result<ModelGraph> {
    load_model(&load_doc(m)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let r = cli.common.resolve()?;
    match cli.command {
        Command::Keygen { secret_key, public_key } => {
            let ctx = context(&r)?;
            let (sk, pk) = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(r.seed));
            write(&secret_key, &ctx.serialize_secret_key(&sk))?;
            write(&public_key, &ctx.serialize_public_key(&pk))?;
        }
        Command::Encrypt { public_key, input, output } => {
            let ctx = context(&r)?;
            let (_, pk) = load_keys(&ctx, None, Some(&public_key))?;
            let t = BatchedTensor::read_from(BufReader::new(File::open(&input)?))?;
            let ct = hemm_core::par::with_workers(r.workers, || encrypt_batched(&ctx, &pk.expect("loaded"), &t, r.seed))?;
            write(&output, &ctx.serialize_cipher_tensor(&ct))?;
        }
        Command::Decrypt { secret_key, input, output } => {
            let ctx = context(&r)?;
            let (sk, _) = load_keys(&ctx, Some(&secret_key), None)?;
            let ct = ctx.deserialize_cipher_tensor(&read(&input)?)?;
            let t = hemm_core::par::with_workers(r.workers, || decrypt_tensor(&ctx, &sk.expect("loaded"), &ct))?;
            let mut w = BufWriter::new(File::create(&output)?);
            t.write_to(&mut w)?;
            w.flush()?;
        }
        Command::Infer(args) => infer(&r, args)?,
        Command::Serve { secret_key, public_key, latency_ms } => {
            let ctx = context(&r)?;
            let (sk, pk) = load_keys(&ctx, Some(&secret_key), Some(&public_key))?;
            let endpoint = r.endpoint.clone().ok_or_else(|| Error::Config("serve needs --endpoint".into()))?;
            let service = ClientService::new(ctx, sk.expect("loaded"), pk.expect("loaded"), r.seed)
                .with_latency(Duration::from_millis(latency_ms))
                .with_workers(r.workers);
            let listener = TcpListener::bind(&endpoint)?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            serve(listener, Arc::new(service))?;
        }
        Command::Simulate { trace, output, memsim } => {
            let cfg = r.memsim(&memsim)?;
            let t = AccessTrace::read_from(BufReader::new(File::open(&trace)?))?;
            let report = simulate(&t, &cfg)?;
            write(&output, serde_json::to_string_pretty(&report)?.as_bytes())?;
            println!(
                "{} events, prefetch hit ratio {:.4}, media read {} B, media write {} B",
                t.len(),
                report.prefetch_hit_ratio(),
                report.media_read_bytes(),
                report.media_write_bytes()
            );
        }
        Command::Report { input, format, timeline } => {
            let report: MemSimReport = serde_json::from_slice(&read(&input)?)?;
            let table = report_table(&report);
            match format {
                Format::Text => print!("{}", table.to_text()),
                Format::Csv => print!("{}", table.to_csv()),
            }
            if let Some(path) = timeline {
                let mut csv = String::from("window,hit_ratio\n");
                for (i, v) in report.timeline.iter().enumerate() {
                    csv.push_str(&format!("{i},{v}\n"));
                }
                write(&path, csv.as_bytes())?;
            }
        }
        Command::Estimate { model, batch } => {
            let ctx = context(&r)?;
            let g = load_graph(&model)?;
            let fp = footprint_estimate(&g, batch, &ctx)?;
            let out = serde_json::json!({
                "model": g.name,
                "batch": batch,
                "peak_ciphertext_bytes": fp.peak_ciphertext_bytes,
                "weight_bytes": fp.weight_bytes,
                "total_bytes": fp.total(),
                "total_gb": fp.total() as f64 / 1e9,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Fixture { action } => match action {
            FixtureAction::List => {
                for name in fixtures::FIXTURE_NAMES {
                    println!("{name}");
                }
            }
            FixtureAction::Export { name, output } => {
                let doc = load_doc(&ModelArgs { model: None, fixture: Some(name) })?;
                write(&output, doc.to_json().as_bytes())?;
            }
        },
    }
    Ok(())
}

fn infer(r: &Resolved, args: InferArgs) -> Result<()> {
    let record = args.trace.is_some();
    if record && r.workers > 1 {
        return Err(Error::Config(format!("trace recording requires one worker, got {}", r.workers)));
    }
    let ctx = context(r)?;
    let g = load_graph(&args.model)?;
    let input = ctx.deserialize_cipher_tensor(&read(&args.input)?)?;
    let loopback;
    let tcp;
    let delegate: Option<&dyn Delegate> = if args.loopback {
        let (sk, pk) = load_keys(&ctx, args.secret_key.as_deref(), args.public_key.as_deref())?;
        let service = ClientService::new(ctx.clone(), sk.expect("required"), pk.expect("required"), r.seed);
        loopback = LoopbackDelegate::new(Arc::new(service));
        Some(&loopback)
    } else if let Some(ep) = &r.endpoint {
        tcp = TcpDelegate::new(ep.as_str())?;
        Some(&tcp)
    } else {
        None
    };
    let cfg = RunConfig { workers: r.workers, delegate, secret_key: None, record, max_request: args.max_request };
    let report = run_graph(&ctx, &g, input, &cfg)?;
    match &report.output {
        Value::Cipher(t) => write(&args.output, &ctx.serialize_cipher_tensor(t))?,
        Value::Plain(_) => return Err(Error::Model("model output is a plaintext constant, not an encrypted tensor".into())),
    }
    if let Some(path) = &args.report {
        write(path, report.to_csv().as_bytes())?;
    }
    if let (Some(path), Some(trace)) = (&args.trace, &report.trace) {
        let mut w = BufWriter::new(File::create(path)?);
        trace.write_to(&mut w)?;
        w.flush()?;
    }
    print!("{}", report.to_text());
    Ok(())
}
