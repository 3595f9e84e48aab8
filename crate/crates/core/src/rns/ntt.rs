use super::arith::{bit_reverse, primitive_root_of_unity, Modulus};
use crate::error::{Error, Result};

/// Twiddle factors for the negacyclic NTT modulo one prime.
///
/// Forward: iterative Cooley-Tukey with powers of a primitive `2N`-th root
/// `psi` stored in bit-reversed order, so the output is the evaluation at the
/// odd powers of `psi` in bit-reversed position. Inverse: Gentleman-Sande with
/// the inverse powers, followed by scaling with `N^{-1}`.
#[derive(Debug, Clone)]
pub struct NttTable {
    modulus: Modulus,
    degree: usize,
    psi: u64,
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    degree_inv: u64,
}

impl NttTable {
    pub fn new(modulus: Modulus, degree: usize) -> Result<Self> {
        let psi = primitive_root_of_unity(&modulus, 2 * degree as u64).ok_or_else(|| {
            Error::Params(format!("modulus {} has no primitive {}-th root of unity", modulus.value(), 2 * degree))
        })?;
        let psi_inv = modulus.inv(psi);
        let bits = degree.trailing_zeros();
        let mut psi_rev = vec![0u64; degree];
        let mut psi_inv_rev = vec![0u64; degree];
        let mut pow = 1u64;
        let mut pow_inv = 1u64;
        for i in 0..degree {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pow;
            psi_inv_rev[r] = pow_inv;
            pow = modulus.mul(pow, psi);
            pow_inv = modulus.mul(pow_inv, psi_inv);
        }
        Ok(NttTable {
            modulus,
            degree,
            psi,
            psi_rev,
            psi_inv_rev,
            degree_inv: modulus.inv(degree as u64 % modulus.value()),
        })
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = &self.modulus;
        let n = self.degree;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = q.mul(a[j + t], s);
                    a[j] = q.add(u, v);
                    a[j + t] = q.sub(u, v);
                }
            }
            m <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = &self.modulus;
        let n = self.degree;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = q.add(u, v);
                    a[j + t] = q.mul(q.sub(u, v), s);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = q.mul(*x, self.degree_inv);
        }
    }
}
