//! Canonical-embedding encoder.
//!
//! Slot `j` holds the evaluation of the message polynomial at
//! `xi^(5^j mod 2N)` with `xi = exp(i*pi/N)`. Encoding applies the inverse
//! special FFT, scales by `Delta` and rounds; decoding is the reverse.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::types::{Plaintext, ScalarPlaintext};
use super::CkksContext;
use crate::error::{Error, Result};
use crate::rns::{Domain, RnsPoly};

/// Largest magnitude a rounded coefficient may take before conversion.
const MAX_COEFF: f64 = 4.0e18;

#[derive(Debug, Clone)]
pub struct Encoder {
    degree: usize,
    slots: usize,
    rot_group: Vec<usize>,
    ksi_pows: Vec<Complex64>,
}

impl Encoder {
    pub fn new(degree: usize) -> Self {
        let m = 2 * degree;
        let slots = degree / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut five_pow = 1usize;
        for _ in 0..slots {
            rot_group.push(five_pow);
            five_pow = (five_pow * 5) % m;
        }
        let ksi_pows = (0..=m)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / m as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Encoder { degree, slots, rot_group, ksi_pows }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Exponents `5^j mod 2N` of the evaluation points.
    pub fn rotation_group(&self) -> &[usize] {
        &self.rot_group
    }

    fn bit_reverse_in_place(vals: &mut [Complex64]) {
        let n = vals.len();
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = crate::rns::bit_reverse_index(i, bits);
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Evaluates the packed coefficient vector at the slot points.
    pub fn special_fft(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.degree;
        Self::bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Inverse of [`Encoder::special_fft`].
    pub fn special_ifft(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.degree;
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse_in_place(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real coefficient vector (unscaled) whose embedding is `values`.
    pub fn embed(&self, values: &[Complex64]) -> Vec<f64> {
        let mut u = vec![Complex64::new(0.0, 0.0); self.slots];
        u[..values.len()].copy_from_slice(values);
        self.special_ifft(&mut u);
        let mut coeffs = vec![0.0; self.degree];
        for (i, v) in u.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + self.slots] = v.im;
        }
        coeffs
    }

    /// Slot values of a real coefficient vector.
    pub fn project(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let mut u: Vec<Complex64> =
            (0..self.slots).map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots])).collect();
        self.special_fft(&mut u);
        u
    }
}

impl CkksContext {
    /// Encodes up to `N/2` real values at the top level.
    pub fn encode(&self, values: &[f64], scale: f64) -> Result<Plaintext> {
        self.encode_at(values, scale, self.max_level())
    }

    pub fn encode_at(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext> {
        let complex: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.encode_complex_at(&complex, scale, level)
    }

    pub fn encode_complex_at(&self, values: &[Complex64], scale: f64, level: usize) -> Result<Plaintext> {
        if values.len() > self.slots() {
            return Err(Error::Encoding(format!("{} values exceed {} slots", values.len(), self.slots())));
        }
        check_scale(scale)?;
        if level > self.max_level() {
            return Err(Error::LevelMismatch(level, self.max_level()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Encoding("non-finite value".into()));
        }
        let coeffs = self.encoder.embed(values);
        let limit = (self.rns().log2_modulus(level) - 1.0).exp2().min(MAX_COEFF);
        let mut rounded = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            let x = (c * scale).round();
            if x.abs() >= limit {
                return Err(Error::Encoding(format!(
                    "scale {scale:.3e} too large: coefficient {x:.3e} overflows the modulus at level {level}"
                )));
            }
            rounded.push(x as i64);
        }
        let mut poly = RnsPoly::from_signed(self.rns(), &rounded, level + 1);
        poly.ntt_forward_assign(self.rns())?;
        let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(Plaintext::new(poly, scale, max_abs))
    }

    /// Decodes the real parts of all `N/2` slots.
    pub fn decode(&self, pt: &Plaintext) -> Result<Vec<f64>> {
        Ok(self.decode_complex(pt)?.into_iter().map(|c| c.re).collect())
    }

    pub fn decode_complex(&self, pt: &Plaintext) -> Result<Vec<Complex64>> {
        self.check_same(pt.poly().degree(), self.rns().num_moduli())?;
        let poly = match pt.poly().domain() {
            Domain::Ntt => pt.poly().ntt_inverse(self.rns())?,
            Domain::Coefficient => pt.poly().clone(),
        };
        let coeffs: Vec<f64> = poly.to_centered_f64(self.rns())?.into_iter().map(|c| c / pt.scale()).collect();
        Ok(self.encoder.project(&coeffs))
    }

    /// Encodes a single scalar as its per-limb residues of `round(scale * v)`.
    pub fn encode_scalar(&self, value: f64, scale: f64, level: usize) -> Result<ScalarPlaintext> {
        check_scale(scale)?;
        if level > self.max_level() {
            return Err(Error::LevelMismatch(level, self.max_level()));
        }
        if !value.is_finite() {
            return Err(Error::Encoding("non-finite scalar".into()));
        }
        let x = (value * scale).round();
        let limit = (self.rns().log2_modulus(level) - 1.0).exp2().min(MAX_COEFF);
        if x.abs() >= limit {
            return Err(Error::Encoding(format!("scalar {value} at scale {scale:.3e} overflows level {level}")));
        }
        let x = x as i64;
        let residues = (0..=level).map(|l| self.rns().modulus(l).from_i64(x)).collect();
        Ok(ScalarPlaintext::new(residues, scale, value))
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale >= 1.0) {
        return Err(Error::Encoding(format!("invalid scale {scale}")));
    }
    Ok(())
}
