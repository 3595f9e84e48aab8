use rand::RngCore;

use super::noise;
use super::types::{Ciphertext, Plaintext};
use super::CkksContext;
use crate::error::{Error, Result};
use crate::rns::{sample_gaussian, sample_ternary, sample_uniform, Domain, RnsPoly};

/// Ternary secret `s`, stored in the NTT domain over the full chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) s: RnsPoly,
}

/// `(b, a)` with `b = -(a * s) + e`, both in the NTT domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

impl SecretKey {
    pub fn poly(&self) -> &RnsPoly {
        &self.s
    }
}

impl PublicKey {
    pub fn b(&self) -> &RnsPoly {
        &self.b
    }

    pub fn a(&self) -> &RnsPoly {
        &self.a
    }
}

impl CkksContext {
    pub fn keygen<R: RngCore + ?Sized>(&self, rng: &mut R) -> (SecretKey, PublicKey) {
        let rns = self.rns();
        let s = sample_ternary(rns, rng).ntt_forward(rns).expect("coefficient domain");
        // A uniform polynomial is uniform in either domain.
        let mut a = sample_uniform(rns, rng);
        a = RnsPoly::from_limbs(rns, a.data().to_vec(), rns.num_moduli(), Domain::Ntt).expect("reduced");
        let e = sample_gaussian(rns, rng, self.sigma()).ntt_forward(rns).expect("coefficient domain");
        let b = e.sub(&a.pointwise_mul(&s, rns).expect("same shape"), rns).expect("same shape");
        (SecretKey { s }, PublicKey { b, a })
    }

    /// Public-key encryption of a top-level plaintext.
    pub fn encrypt<R: RngCore + ?Sized>(&self, pk: &PublicKey, pt: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        let rns = self.rns();
        self.check_same(pk.b.degree(), pk.b.num_limbs())?;
        if pt.level() != self.max_level() {
            return Err(Error::LevelMismatch(pt.level(), self.max_level()));
        }
        let v = sample_ternary(rns, rng).ntt_forward(rns)?;
        let e0 = sample_gaussian(rns, rng, self.sigma()).ntt_forward(rns)?;
        let e1 = sample_gaussian(rns, rng, self.sigma()).ntt_forward(rns)?;
        let mut c0 = pk.b.pointwise_mul(&v, rns)?;
        c0.add_assign(&e0, rns)?;
        c0.add_assign(pt.poly(), rns)?;
        let mut c1 = pk.a.pointwise_mul(&v, rns)?;
        c1.add_assign(&e1, rns)?;
        let n = self.degree();
        let bound = noise::fresh(n, self.sigma(), pt.scale()) + noise::encoding(n, pt.scale());
        let ct = Ciphertext::from_parts(c0, c1, pt.scale(), bound);
        ct.record_all(crate::memsim::record::AccessKind::Store);
        Ok(ct)
    }

    /// `c0 + c1 * s` at the ciphertext's level.
    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext> {
        let rns = self.rns();
        self.check_same(ct.degree(), self.rns().num_moduli())?;
        let limbs = ct.level() + 1;
        ct.record_all(crate::memsim::record::AccessKind::Load);
        let s = sk.s.prefix(limbs);
        let mut m = ct.c1.pointwise_mul(&s, rns)?;
        m.add_assign(&ct.c0, rns)?;
        Ok(Plaintext::new(m, ct.scale, 0.0))
    }

    /// The fresh-encryption noise bound at scale `scale`.
    pub fn fresh_noise_bound(&self, scale: f64) -> f64 {
        noise::fresh(self.degree(), self.sigma(), scale) + noise::encoding(self.degree(), scale)
    }
}
