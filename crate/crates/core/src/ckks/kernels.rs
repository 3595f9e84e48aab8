//! The two ciphertext-plaintext scalar loops, over raw limb-major residues.
//!
//! Both walk limbs `0..L` in order and coefficients `0..N` within a limb, so
//! the ciphertext buffer is read and written strictly sequentially.

use crate::rns::{barrett_reduce, Modulus};

/// `c[l][n] <- (c[l][n] + p[l]) mod q[l]` for every limb `l` and slot `n`.
pub fn add_cipher_plain_scalar(c: &mut [u64], degree: usize, p: &[u64], q: &[Modulus]) {
    debug_assert_eq!(c.len(), p.len() * degree);
    for (l, limb) in c.chunks_exact_mut(degree).enumerate() {
        let tmp = p[l];
        let ql = q[l].value();
        for x in limb {
            let s = *x + tmp;
            *x = if s >= ql { s - ql } else { s };
        }
    }
}

/// `c[l][n] <- BarrettReduce(c[l][n] * p[l], q[l], r[l])`; moduli below
/// 2^31 keep the 64-bit product from overflowing.
pub fn mul_cipher_plain_scalar(c: &mut [u64], degree: usize, p: &[u64], q: &[Modulus]) {
    debug_assert_eq!(c.len(), p.len() * degree);
    for (l, limb) in c.chunks_exact_mut(degree).enumerate() {
        let tmp = p[l];
        let (ql, rl) = (q[l].value(), q[l].ratio());
        for x in limb {
            let z: u64 = *x * tmp;
            *x = barrett_reduce(z, ql, rl);
        }
    }
}

/// `acc[l][n] <- (acc[l][n] + x[l][n] * p[l]) mod q[l]`, the fused step of a
/// direct convolution.
pub fn mul_acc_cipher_plain_scalar(acc: &mut [u64], x: &[u64], degree: usize, p: &[u64], q: &[Modulus]) {
    debug_assert_eq!(acc.len(), x.len());
    for (l, (a_limb, x_limb)) in acc.chunks_exact_mut(degree).zip(x.chunks_exact(degree)).enumerate() {
        let tmp = p[l];
        let (ql, rl) = (q[l].value(), q[l].ratio());
        for (a, &v) in a_limb.iter_mut().zip(x_limb) {
            let s = *a + barrett_reduce(v * tmp, ql, rl);
            *a = if s >= ql { s - ql } else { s };
        }
    }
}
