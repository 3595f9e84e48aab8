//! Residue-number-system polynomials over `Z_q[X]/(X^N + 1)`.
//!
//! A polynomial is stored limb-major: all `N` residues modulo `q_0`, then all
//! residues modulo `q_1`, and so on. Every kernel walks limbs in ascending
//! order and coefficients in ascending order within a limb.

mod arith;
mod ntt;
mod poly;
mod sample;

use std::sync::Arc;

pub(crate) use arith::bit_reverse as bit_reverse_index;
pub use arith::{barrett_ratio, barrett_reduce, is_prime, primitive_root_of_unity, Modulus};
pub use ntt::NttTable;
pub use poly::{Domain, RnsPoly};
pub use sample::{sample_gaussian, sample_ternary, sample_uniform, DEFAULT_SIGMA};

use crate::error::{Error, Result};

/// Largest total modulus bit count giving 128-bit security for a ternary
/// secret, indexed by ring degree (HomomorphicEncryption.org standard).
pub const SECURITY_CAP_128: [(usize, u32); 6] =
    [(1024, 27), (2048, 54), (4096, 109), (8192, 218), (16384, 438), (32768, 881)];

pub const MIN_MODULUS_BITS: u32 = 20;
pub const MAX_MODULUS_BITS: u32 = 31;

pub fn security_cap(degree: usize) -> Option<u32> {
    SECURITY_CAP_128.iter().find(|(n, _)| *n == degree).map(|&(_, cap)| cap)
}

/// Largest prime below `2^bits` that is `1 mod 2N` and not in `taken`,
/// keeping the bit length exactly `bits`.
pub fn select_prime(degree: usize, bits: u32, taken: &[u64]) -> Option<u64> {
    let step = 2 * degree as u64;
    let top = 1u64 << bits;
    let floor = 1u64 << (bits - 1);
    if top <= step {
        return None;
    }
    let mut candidate = top - step + 1;
    while candidate > floor {
        if is_prime(candidate) && !taken.contains(&candidate) {
            return Some(candidate);
        }
        candidate = candidate.checked_sub(step)?;
    }
    None
}

/// Moduli chain and precomputed tables for one ring.
#[derive(Debug)]
pub struct RnsContext {
    degree: usize,
    bit_widths: Vec<u32>,
    moduli: Vec<Modulus>,
    ntt: Vec<NttTable>,
    insecure: bool,
}

impl RnsContext {
    /// Builds a context for ring degree `degree` with one prime per entry of
    /// `bit_widths`. Parameter sets above the 128-bit security cap, unknown
    /// degrees and sub-20-bit primes are refused unless `allow_insecure` is set.
    pub fn new(degree: usize, bit_widths: &[u32], allow_insecure: bool) -> Result<Arc<Self>> {
        if degree < 2 || !degree.is_power_of_two() {
            return Err(Error::Params(format!("ring degree {degree} is not a power of two")));
        }
        if bit_widths.is_empty() {
            return Err(Error::Params("empty modulus chain".into()));
        }
        if bit_widths.len() > u8::MAX as usize {
            return Err(Error::Params("modulus chain longer than 255 limbs".into()));
        }
        let min_bits = if allow_insecure { degree.trailing_zeros() + 2 } else { MIN_MODULUS_BITS };
        for &w in bit_widths {
            if w < min_bits || w > MAX_MODULUS_BITS {
                return Err(Error::Params(format!(
                    "modulus bit width {w} outside [{min_bits}, {MAX_MODULUS_BITS}]"
                )));
            }
        }
        let total: u32 = bit_widths.iter().sum();
        if !allow_insecure {
            match security_cap(degree) {
                Some(cap) if total <= cap => {}
                Some(cap) => return Err(Error::Insecure { degree, bits: total, cap }),
                None => {
                    return Err(Error::Params(format!(
                        "no 128-bit security estimate for N={degree}; pass the insecure override"
                    )))
                }
            }
        }

        let mut primes = Vec::with_capacity(bit_widths.len());
        for &w in bit_widths {
            let p = select_prime(degree, w, &primes).ok_or_else(|| {
                Error::Params(format!("no {w}-bit prime congruent to 1 mod {}", 2 * degree))
            })?;
            primes.push(p);
        }
        let moduli: Vec<Modulus> = primes.iter().map(|&p| Modulus::new(p)).collect();
        let ntt = moduli.iter().map(|q| NttTable::new(*q, degree)).collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(RnsContext {
            degree,
            bit_widths: bit_widths.to_vec(),
            moduli,
            ntt,
            insecure: allow_insecure,
        }))
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of primes in the full chain.
    #[inline]
    pub fn num_moduli(&self) -> usize {
        self.moduli.len()
    }

    /// Highest level, reached by a freshly encrypted ciphertext.
    #[inline]
    pub fn max_level(&self) -> usize {
        self.moduli.len() - 1
    }

    pub fn bit_widths(&self) -> &[u32] {
        &self.bit_widths
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn modulus(&self, limb: usize) -> &Modulus {
        &self.moduli[limb]
    }

    pub fn ntt_table(&self, limb: usize) -> &NttTable {
        &self.ntt[limb]
    }

    pub fn is_insecure(&self) -> bool {
        self.insecure
    }

    pub fn total_bits(&self) -> u32 {
        self.bit_widths.iter().sum()
    }

    /// `log2` of the product of the primes active at `level`.
    pub fn log2_modulus(&self, level: usize) -> f64 {
        self.moduli[..=level].iter().map(|q| (q.value() as f64).log2()).sum()
    }

    /// Mixed-radix digits of `x mod Q_level` from its residues (Garner).
    fn mixed_radix(&self, residues: &[u64], digits: &mut [u64]) {
        let limbs = residues.len();
        for i in 0..limbs {
            let qi = &self.moduli[i];
            let mut v = residues[i];
            for (qj, &dj) in self.moduli[..i].iter().zip(digits.iter()) {
                v = qi.mul(qi.sub(v, qi.reduce(dj)), qi.inv(qi.reduce(qj.value())));
            }
            digits[i] = v;
        }
    }

    /// Centered CRT reconstruction of one coefficient as a float.
    ///
    /// The sign is decided exactly on mixed-radix digits so values near
    /// `Q/2` never suffer cancellation.
    pub fn crt_centered_f64(&self, residues: &[u64]) -> f64 {
        let limbs = residues.len();
        let mut digits = vec![0u64; limbs];
        self.mixed_radix(residues, &mut digits);
        // Compare x against (Q-1)/2, whose digits are those of Q with the
        // top-down halving of an odd product.
        let q: Vec<u64> = self.moduli[..limbs].iter().map(|m| m.value()).collect();
        let half = half_digits(&q);
        let negative = digits.iter().rev().zip(half.iter().rev()).find(|(d, h)| d != h).is_some_and(|(d, h)| d > h);
        let mag_digits = if negative { complement_digits(&digits, &q) } else { digits };
        let exact = q.iter().map(|&x| 64 - x.leading_zeros()).sum::<u32>() < 128;
        let value = if exact {
            mag_digits.iter().zip(&q).rev().fold(0u128, |acc, (&d, &qi)| acc * qi as u128 + d as u128) as f64
        } else {
            mag_digits.iter().zip(&q).rev().fold(0.0f64, |acc, (&d, &qi)| acc * qi as f64 + d as f64)
        };
        if negative {
            -value
        } else {
            value
        }
    }
}

/// Mixed-radix digits of `floor(Q / 2)` for `Q = prod q`.
fn half_digits(q: &[u64]) -> Vec<u64> {
    // Q - 1 has digits q_i - 1 everywhere; halve from the most significant digit.
    let mut out = vec![0u64; q.len()];
    let mut rem = 0u64;
    for i in (0..q.len()).rev() {
        let cur = rem * q[i] + (q[i] - 1);
        out[i] = cur / 2;
        rem = cur % 2;
    }
    out
}

/// Mixed-radix digits of `Q - x`.
fn complement_digits(x: &[u64], q: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; x.len()];
    let mut borrow = 0u64;
    for i in 0..x.len() {
        let sub = x[i] + borrow;
        if sub == 0 {
            out[i] = 0;
            borrow = 0;
        } else {
            out[i] = q[i] - sub;
            borrow = 1;
        }
    }
    out
}
