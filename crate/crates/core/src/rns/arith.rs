//! Word-sized modular arithmetic for moduli below 2^31.

/// Precomputed Barrett constant `floor(2^64 / q)`.
#[inline]
pub fn barrett_ratio(q: u64) -> u64 {
    debug_assert!(q >= 2);
    ((1u128 << 64) / q as u128) as u64
}

/// Reduces any 64-bit `z` modulo `q` using the ratio from [`barrett_ratio`].
///
/// The quotient estimate `floor(z * r / 2^64)` is at most one below the true
/// quotient, so a single conditional subtraction suffices.
#[inline]
pub fn barrett_reduce(z: u64, q: u64, r: u64) -> u64 {
    let qhat = ((z as u128 * r as u128) >> 64) as u64;
    let t = z - qhat * q;
    if t >= q {
        t - q
    } else {
        t
    }
}

/// A prime modulus together with its Barrett constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio: u64,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!((2..(1 << 31)).contains(&value), "modulus must lie in [2, 2^31)");
        Modulus { value, ratio: barrett_ratio(value) }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn ratio(&self) -> u64 {
        self.ratio
    }

    #[inline]
    pub fn reduce(&self, z: u64) -> u64 {
        barrett_reduce(z, self.value, self.ratio)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Product of two reduced operands; `a * b < 2^62` so it never overflows.
    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce(a * b)
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat's little theorem; the modulus is prime.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(self.reduce(a) != 0);
        self.pow(a, self.value - 2)
    }

    /// Maps a signed integer into `[0, q)`.
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        x.rem_euclid(self.value as i64) as u64
    }

    /// Maps a signed 128-bit integer into `[0, q)`.
    #[inline]
    pub fn from_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.value as i128) as u64
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest primitive `order`-th root of unity modulo the prime `q`, where
/// `order` is a power of two dividing `q - 1`.
pub fn primitive_root_of_unity(q: &Modulus, order: u64) -> Option<u64> {
    debug_assert!(order.is_power_of_two());
    let qv = q.value();
    if !(qv - 1).is_multiple_of(order) {
        return None;
    }
    let cofactor = (qv - 1) / order;
    let mut candidate = None;
    for g in 2..qv {
        let root = q.pow(g, cofactor);
        // For a power-of-two order, root has exact order `order` iff root^(order/2) = -1.
        if q.pow(root, order / 2) == qv - 1 {
            candidate = Some(root);
            break;
        }
    }
    let root = candidate?;
    // Canonical choice: the smallest primitive root among root^odd.
    let mut best = root;
    let step = q.mul(root, root);
    let mut cur = root;
    for _ in 0..order / 2 {
        best = best.min(cur);
        cur = q.mul(cur, step);
    }
    Some(best)
}

pub(crate) fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}
