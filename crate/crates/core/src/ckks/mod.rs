//! Leveled CKKS over the RNS ring: encoding, keys, encryption and the
//! ciphertext-plaintext arithmetic used by plaintext-model inference.
//!
//! A ciphertext at level `l` carries limbs `0..=l` and lives in the NTT
//! domain. Fresh ciphertexts sit at the top level `L - 1`; every rescale
//! drops the last active limb and divides the scale by that prime.

mod encoding;
pub mod kernels;
mod keys;
mod noise;
mod ops;
mod serialize;
mod types;

use std::sync::Arc;

pub use encoding::Encoder;
pub use keys::{PublicKey, SecretKey};
pub use serialize::{HEADER_LEN, MAGIC as CKRS_MAGIC, VERSION as CKRS_VERSION};
pub use types::{Ciphertext, Plaintext, ScalarPlaintext};

use crate::error::{Error, Result};
use crate::rns::{RnsContext, DEFAULT_SIGMA};

/// Scale exponent used when none is given: `Delta = 2^30`.
pub const DEFAULT_SCALE_BITS: u32 = 30;

/// Ring degree, prime bit widths and fixed-point scale of a parameter set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CkksParams {
    pub degree: usize,
    pub moduli_bits: Vec<u32>,
    pub scale_bits: u32,
    #[serde(default)]
    pub allow_insecure: bool,
}

impl CkksParams {
    /// N = 4096, q = {30, 22, 22, 30}.
    pub fn standard() -> Self {
        CkksParams {
            degree: 4096,
            moduli_bits: vec![30, 22, 22, 30],
            scale_bits: DEFAULT_SCALE_BITS,
            allow_insecure: false,
        }
    }

    /// Same chain on a smaller ring, for fast tests. Not secure.
    pub fn insecure_test(degree: usize) -> Self {
        CkksParams { degree, allow_insecure: true, ..Self::standard() }
    }
}

#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    rns: Arc<RnsContext>,
    encoder: Encoder,
    scale: f64,
    sigma: f64,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Arc<Self>> {
        let rns = RnsContext::new(params.degree, &params.moduli_bits, params.allow_insecure)?;
        if params.scale_bits == 0 || params.scale_bits > 60 {
            return Err(Error::Params(format!("scale exponent {} outside [1, 60]", params.scale_bits)));
        }
        let encoder = Encoder::new(params.degree);
        let scale = 2f64.powi(params.scale_bits as i32);
        Ok(Arc::new(CkksContext { params, rns, encoder, scale, sigma: DEFAULT_SIGMA }))
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn rns(&self) -> &RnsContext {
        &self.rns
    }

    pub fn degree(&self) -> usize {
        self.rns.degree()
    }

    /// Number of SIMD slots, `N / 2`.
    pub fn slots(&self) -> usize {
        self.rns.degree() / 2
    }

    pub fn max_level(&self) -> usize {
        self.rns.max_level()
    }

    /// Default encoding scale.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Value of the prime dropped by rescaling at `level`.
    pub fn prime_at(&self, level: usize) -> f64 {
        self.rns.modulus(level).value() as f64
    }

    /// Bytes of a ciphertext at `level`: `2 * (level + 1) * N * 8`.
    pub fn ciphertext_bytes(&self, level: usize) -> u64 {
        2 * (level as u64 + 1) * self.degree() as u64 * 8
    }

    pub(crate) fn check_same(&self, degree: usize, num_moduli: usize) -> Result<()> {
        if degree != self.degree() || num_moduli != self.rns.num_moduli() {
            return Err(Error::ContextMismatch(format!(
                "object has N={degree}, L={num_moduli}; context has N={}, L={}",
                self.degree(),
                self.rns.num_moduli()
            )));
        }
        Ok(())
    }
}

/// Scales match when they agree to within floating-point rounding.
pub fn scales_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}
