use crate::memsim::record::{AccessKind, Region};
use crate::rns::RnsPoly;

/// Encoded message polynomial (NTT domain) at some level.
#[derive(Debug, Clone)]
pub struct Plaintext {
    poly: RnsPoly,
    scale: f64,
    max_abs: f64,
    pub(crate) region: Region,
}

impl Plaintext {
    pub(crate) fn new(poly: RnsPoly, scale: f64, max_abs: f64) -> Self {
        Plaintext { poly, scale, max_abs, region: Region::new() }
    }

    pub fn poly(&self) -> &RnsPoly {
        &self.poly
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.poly.num_limbs() - 1
    }

    /// Largest slot magnitude at encode time (0 when unknown, e.g. decrypted).
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn byte_size(&self) -> u64 {
        (self.poly.num_limbs() * self.poly.degree() * 8) as u64
    }

    pub(crate) fn record_limb(&self, limb: usize, kind: AccessKind) {
        let n = self.poly.degree() as u64 * 8;
        self.region.sweep(self.byte_size(), limb as u64 * n, n, kind);
    }
}

/// A single scalar broadcast to every slot, stored as one residue per limb.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPlaintext {
    residues: Vec<u64>,
    scale: f64,
    value: f64,
}

impl ScalarPlaintext {
    pub(crate) fn new(residues: Vec<u64>, scale: f64, value: f64) -> Self {
        ScalarPlaintext { residues, scale, value }
    }

    pub fn residues(&self) -> &[u64] {
        &self.residues
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.residues.len() - 1
    }

    /// The real value that was encoded.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn byte_size(&self) -> u64 {
        self.residues.len() as u64 * 8
    }
}

/// CKKS ciphertext `(c0, c1)` in the NTT domain.
///
/// Decrypts as `c0 + c1 * s`. `noise_bound` is a heuristic high-probability
/// bound on the absolute slot error, in message units.
#[derive(Debug)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) scale: f64,
    pub(crate) noise_bound: f64,
    pub(crate) region: Region,
}

impl Ciphertext {
    pub(crate) fn from_parts(c0: RnsPoly, c1: RnsPoly, scale: f64, noise_bound: f64) -> Self {
        debug_assert_eq!(c0.num_limbs(), c1.num_limbs());
        Ciphertext { c0, c1, scale, noise_bound, region: Region::new() }
    }

    pub fn c0(&self) -> &RnsPoly {
        &self.c0
    }

    pub fn c1(&self) -> &RnsPoly {
        &self.c1
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.c0.num_limbs() - 1
    }

    pub fn degree(&self) -> usize {
        self.c0.degree()
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    /// Payload bytes: `2 * (level + 1) * N * 8`.
    pub fn byte_size(&self) -> u64 {
        2 * (self.c0.num_limbs() * self.c0.degree() * 8) as u64
    }

    /// Mutable access to both polynomials, for callers that manipulate raw
    /// residues (tests, deserialization).
    pub fn polys_mut(&mut self) -> (&mut RnsPoly, &mut RnsPoly) {
        (&mut self.c0, &mut self.c1)
    }

    /// Records one sweep over limb `limb` of polynomial `which` (0 or 1).
    pub(crate) fn record_limb(&self, which: usize, limb: usize, kind: AccessKind) {
        let n = self.c0.degree() as u64 * 8;
        let poly_bytes = self.c0.num_limbs() as u64 * n;
        self.region.sweep(self.byte_size(), which as u64 * poly_bytes + limb as u64 * n, n, kind);
    }

    pub(crate) fn place(&self) {
        self.region.place(self.byte_size());
    }

    pub(crate) fn record_all(&self, kind: AccessKind) {
        for which in 0..2 {
            for l in 0..self.c0.num_limbs() {
                self.record_limb(which, l, kind);
            }
        }
    }
}

impl Ciphertext {
    /// Copy that records nothing; the caller records its own sweeps.
    pub(crate) fn unrecorded_copy(&self) -> Self {
        Ciphertext {
            c0: self.c0.clone(),
            c1: self.c1.clone(),
            scale: self.scale,
            noise_bound: self.noise_bound,
            region: Region::new(),
        }
    }
}

impl Clone for Ciphertext {
    /// A copy is a full read of the source and a full write of a new buffer.
    fn clone(&self) -> Self {
        let out = self.unrecorded_copy();
        for which in 0..2 {
            for l in 0..self.c0.num_limbs() {
                self.record_limb(which, l, AccessKind::Load);
                out.record_limb(which, l, AccessKind::Store);
            }
        }
        out
    }
}

impl PartialEq for Ciphertext {
    /// Bit-level equality of the payload and metadata.
    fn eq(&self, other: &Self) -> bool {
        self.c0 == other.c0
            && self.c1 == other.c1
            && self.scale.to_bits() == other.scale.to_bits()
            && self.noise_bound.to_bits() == other.noise_bound.to_bits()
    }
}
