//! Layered configuration: command-line flags, then `HEMM_*` environment
//! variables (both handled by clap), then an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use hemm_core::ckks::{CkksParams, DEFAULT_SCALE_BITS};
use hemm_core::memsim::MemSimConfig;
use hemm_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "HEMM_CONFIG")]
    pub config: Option<PathBuf>,

    /// Ring degree N.
    #[arg(long, global = true, env = "HEMM_DEGREE")]
    pub degree: Option<usize>,

    /// Prime bit widths, comma separated (e.g. 30,22,22,30).
    #[arg(long, global = true, env = "HEMM_MODULI", value_delimiter = ',')]
    pub moduli: Option<Vec<u32>>,

    /// Scale exponent: Delta = 2^scale_bits.
    #[arg(long, global = true, env = "HEMM_SCALE_BITS")]
    pub scale_bits: Option<u32>,

    /// Accept parameter sets below 128-bit security (test rings).
    #[arg(long, global = true, env = "HEMM_ALLOW_INSECURE")]
    pub allow_insecure: bool,

    /// Worker threads.
    #[arg(long, global = true, env = "HEMM_WORKERS")]
    pub workers: Option<usize>,

    /// Seed for key generation and encryption randomness.
    #[arg(long, global = true, env = "HEMM_SEED")]
    pub seed: Option<u64>,

    /// Client service address (host:port).
    #[arg(long, global = true, env = "HEMM_ENDPOINT")]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    degree: Option<usize>,
    moduli_bits: Option<Vec<u32>>,
    scale_bits: Option<u32>,
    allow_insecure: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemSimFile {
    capacity: Option<u64>,
    line_size: Option<u64>,
    block_size: Option<u64>,
    prefetch_depth: Option<usize>,
    window: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    params: ParamsFile,
    workers: Option<usize>,
    seed: Option<u64>,
    endpoint: Option<String>,
    #[serde(default)]
    memsim: MemSimFile,
}

/// Overrides for the simulator configuration from flags or environment.
#[derive(Debug, Clone, Default, Args)]
pub struct MemSimArgs {
    /// DRAM cache capacity in bytes.
    #[arg(long, env = "HEMM_CACHE_CAPACITY")]
    pub capacity: Option<u64>,
    #[arg(long, env = "HEMM_LINE_SIZE")]
    pub line_size: Option<u64>,
    #[arg(long, env = "HEMM_BLOCK_SIZE")]
    pub block_size: Option<u64>,
    #[arg(long, env = "HEMM_PREFETCH_DEPTH")]
    pub prefetch_depth: Option<usize>,
    /// Prefetch lookups per timeline sample.
    #[arg(long, env = "HEMM_WINDOW")]
    pub window: Option<u64>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: CkksParams,
    pub workers: usize,
    pub seed: u64,
    pub endpoint: Option<String>,
    file_memsim: MemSimFile,
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let defaults = CkksParams::standard();
        let params = CkksParams {
            degree: self.degree.or(file.params.degree).unwrap_or(defaults.degree),
            moduli_bits: self.moduli.clone().or(file.params.moduli_bits).unwrap_or(defaults.moduli_bits),
            scale_bits: self.scale_bits.or(file.params.scale_bits).unwrap_or(DEFAULT_SCALE_BITS),
            allow_insecure: self.allow_insecure || file.params.allow_insecure.unwrap_or(false),
        };
        let workers = self.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        Ok(Resolved {
            params,
            workers,
            seed: self.seed.or(file.seed).unwrap_or(0),
            endpoint: self.endpoint.clone().or(file.endpoint),
            file_memsim: file.memsim,
        })
    }
}

impl Resolved {
    pub fn memsim(&self, args: &MemSimArgs) -> Result<MemSimConfig> {
        let d = MemSimConfig::default();
        let f = &self.file_memsim;
        let cfg = MemSimConfig {
            capacity: args.capacity.or(f.capacity).unwrap_or(d.capacity),
            line_size: args.line_size.or(f.line_size).unwrap_or(d.line_size),
            block_size: args.block_size.or(f.block_size).unwrap_or(d.block_size),
            prefetch_depth: args.prefetch_depth.or(f.prefetch_depth).unwrap_or(d.prefetch_depth),
            window: args.window.or(f.window).unwrap_or(d.window),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
