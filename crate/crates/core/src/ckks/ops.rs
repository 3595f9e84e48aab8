use super::kernels;
use super::noise;
use super::types::{Ciphertext, Plaintext, ScalarPlaintext};
use super::{scales_match, CkksContext};
use crate::error::{Error, Result};
use crate::memsim::record::AccessKind;
use crate::rns::RnsPoly;

impl CkksContext {
    fn check_cipher(&self, c: &Ciphertext) -> Result<()> {
        self.check_same(c.degree(), self.rns().num_moduli())?;
        if c.level() > self.max_level() {
            return Err(Error::ContextMismatch(format!("ciphertext level {} above chain", c.level())));
        }
        Ok(())
    }

    fn check_scalar(&self, c: &Ciphertext, p: &ScalarPlaintext) -> Result<()> {
        self.check_cipher(c)?;
        if p.level() != c.level() {
            return Err(Error::LevelMismatch(c.level(), p.level()));
        }
        Ok(())
    }

    /// Adds an encoded scalar to every slot: touches `c0` only.
    pub fn add_cipher_plain_scalar_assign(&self, c: &mut Ciphertext, p: &ScalarPlaintext) -> Result<()> {
        self.add_scalar_impl(c, None, p)
    }

    fn add_scalar_impl(&self, c: &mut Ciphertext, src: Option<&Ciphertext>, p: &ScalarPlaintext) -> Result<()> {
        self.check_scalar(c, p)?;
        if !scales_match(c.scale, p.scale()) {
            return Err(Error::ScaleMismatch(c.scale, p.scale()));
        }
        let n = c.degree();
        let limbs = c.level() + 1;
        kernels::add_cipher_plain_scalar(c.c0.data_mut(), n, p.residues(), &self.rns().moduli()[..limbs]);
        let from = src.unwrap_or(c);
        for l in 0..limbs {
            from.record_limb(0, l, AccessKind::Load);
            c.record_limb(0, l, AccessKind::Store);
        }
        if let Some(from) = src {
            for l in 0..limbs {
                from.record_limb(1, l, AccessKind::Load);
                c.record_limb(1, l, AccessKind::Store);
            }
        }
        c.noise_bound += noise::scalar_rounding(p.scale());
        Ok(())
    }

    pub fn add_cipher_plain_scalar(&self, c: &Ciphertext, p: &ScalarPlaintext) -> Result<Ciphertext> {
        let mut out = c.unrecorded_copy();
        self.add_scalar_impl(&mut out, Some(c), p)?;
        Ok(out)
    }

    fn check_product_scale(&self, c: &Ciphertext, other_scale: f64) -> Result<f64> {
        let scale = c.scale * other_scale;
        // One bit of sign and one of message magnitude must still fit.
        if scale.log2() + 2.0 > self.rns().log2_modulus(c.level()) {
            return Err(Error::ScaleOverflow { scale, level: c.level() });
        }
        Ok(scale)
    }

    /// Multiplies every slot by an encoded scalar with Barrett reduction.
    /// The scale becomes the product of the two scales.
    pub fn mul_cipher_plain_scalar_assign(&self, c: &mut Ciphertext, p: &ScalarPlaintext) -> Result<()> {
        self.mul_scalar_impl(c, None, p)
    }

    fn mul_scalar_impl(&self, c: &mut Ciphertext, src: Option<&Ciphertext>, p: &ScalarPlaintext) -> Result<()> {
        self.check_scalar(c, p)?;
        let scale = self.check_product_scale(c, p.scale())?;
        let n = c.degree();
        let limbs = c.level() + 1;
        let moduli = &self.rns().moduli()[..limbs];
        kernels::mul_cipher_plain_scalar(c.c0.data_mut(), n, p.residues(), moduli);
        kernels::mul_cipher_plain_scalar(c.c1.data_mut(), n, p.residues(), moduli);
        let from = src.unwrap_or(c);
        for which in 0..2 {
            for l in 0..limbs {
                from.record_limb(which, l, AccessKind::Load);
                c.record_limb(which, l, AccessKind::Store);
            }
        }
        c.scale = scale;
        c.noise_bound = c.noise_bound * p.value().abs().max(1.0) + noise::scalar_rounding(p.scale());
        Ok(())
    }

    pub fn mul_cipher_plain_scalar(&self, c: &Ciphertext, p: &ScalarPlaintext) -> Result<Ciphertext> {
        let mut out = c.unrecorded_copy();
        self.mul_scalar_impl(&mut out, Some(c), p)?;
        Ok(out)
    }

    /// `acc += x * p` where `acc` already sits at the product scale.
    pub fn mul_acc_cipher_plain_scalar_assign(
        &self,
        acc: &mut Ciphertext,
        x: &Ciphertext,
        p: &ScalarPlaintext,
    ) -> Result<()> {
        self.check_scalar(x, p)?;
        self.check_cipher(acc)?;
        if acc.level() != x.level() {
            return Err(Error::LevelMismatch(acc.level(), x.level()));
        }
        let scale = x.scale * p.scale();
        if !scales_match(acc.scale, scale) {
            return Err(Error::ScaleMismatch(acc.scale, scale));
        }
        let n = x.degree();
        let limbs = x.level() + 1;
        let moduli = &self.rns().moduli()[..limbs];
        kernels::mul_acc_cipher_plain_scalar(acc.c0.data_mut(), x.c0.data(), n, p.residues(), moduli);
        kernels::mul_acc_cipher_plain_scalar(acc.c1.data_mut(), x.c1.data(), n, p.residues(), moduli);
        for which in 0..2 {
            for l in 0..limbs {
                x.record_limb(which, l, AccessKind::Load);
                acc.record_limb(which, l, AccessKind::Load);
                acc.record_limb(which, l, AccessKind::Store);
            }
        }
        acc.noise_bound += x.noise_bound * p.value().abs().max(1.0) + noise::scalar_rounding(p.scale());
        Ok(())
    }

    /// The trivial encryption of zero, `(0, 0)`, at `level` and `scale`.
    pub fn zero_ciphertext(&self, level: usize, scale: f64) -> Result<Ciphertext> {
        if level > self.max_level() {
            return Err(Error::LevelMismatch(level, self.max_level()));
        }
        let z = RnsPoly::zero(self.rns(), level + 1, crate::rns::Domain::Ntt);
        let c = Ciphertext::from_parts(z.clone(), z, scale, 0.0);
        c.record_all(AccessKind::Store);
        Ok(c)
    }

    /// `a += b`. A `b` above `a`'s level is mod-dropped on the fly by
    /// reading only its first `a.level() + 1` limbs.
    pub fn add_cipher_cipher_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        self.add_cipher_impl(a, None, b)
    }

    fn add_cipher_impl(&self, a: &mut Ciphertext, src: Option<&Ciphertext>, b: &Ciphertext) -> Result<()> {
        self.check_cipher(a)?;
        self.check_cipher(b)?;
        if a.level() > b.level() {
            return Err(Error::LevelMismatch(a.level(), b.level()));
        }
        if !scales_match(a.scale, b.scale) {
            return Err(Error::ScaleMismatch(a.scale, b.scale));
        }
        let limbs = a.level() + 1;
        for l in 0..limbs {
            let q = self.rns().modulus(l);
            for (x, &y) in a.c0.limb_mut(l).iter_mut().zip(b.c0.limb(l)) {
                *x = q.add(*x, y);
            }
            for (x, &y) in a.c1.limb_mut(l).iter_mut().zip(b.c1.limb(l)) {
                *x = q.add(*x, y);
            }
        }
        let from = src.unwrap_or(a);
        for which in 0..2 {
            for l in 0..limbs {
                from.record_limb(which, l, AccessKind::Load);
                b.record_limb(which, l, AccessKind::Load);
                a.record_limb(which, l, AccessKind::Store);
            }
        }
        a.noise_bound += b.noise_bound;
        Ok(())
    }

    /// A copy of `c` holding only limbs `0..=level`.
    pub fn copy_to_level(&self, c: &Ciphertext, level: usize) -> Result<Ciphertext> {
        self.check_cipher(c)?;
        if level > c.level() {
            return Err(Error::LevelMismatch(c.level(), level));
        }
        let out = Ciphertext::from_parts(c.c0.prefix(level + 1), c.c1.prefix(level + 1), c.scale, c.noise_bound);
        for which in 0..2 {
            for l in 0..=level {
                c.record_limb(which, l, AccessKind::Load);
                out.record_limb(which, l, AccessKind::Store);
            }
        }
        Ok(out)
    }

    /// Whether a ciphertext at `level` and the context scale can take one
    /// more plaintext product at weight scale `q_level` without overflow.
    pub fn can_multiply(&self, level: usize) -> bool {
        level >= 1
            && level <= self.max_level()
            && self.scale().log2() + self.prime_at(level).log2() + 2.0 <= self.rns().log2_modulus(level)
    }

    pub fn add_cipher_cipher(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let mut out = a.unrecorded_copy();
        self.add_cipher_impl(&mut out, Some(a), b)?;
        Ok(out)
    }

    fn check_plain(&self, c: &Ciphertext, p: &Plaintext) -> Result<()> {
        self.check_cipher(c)?;
        if p.level() != c.level() {
            return Err(Error::LevelMismatch(c.level(), p.level()));
        }
        Ok(())
    }

    /// Slot-wise addition of a full plaintext; the same sequential limb loop
    /// as the scalar case with `p[l][n]` in place of the broadcast residue.
    pub fn add_cipher_plain_assign(&self, c: &mut Ciphertext, p: &Plaintext) -> Result<()> {
        self.add_plain_impl(c, None, p)
    }

    fn add_plain_impl(&self, c: &mut Ciphertext, src: Option<&Ciphertext>, p: &Plaintext) -> Result<()> {
        self.check_plain(c, p)?;
        if !scales_match(c.scale, p.scale()) {
            return Err(Error::ScaleMismatch(c.scale, p.scale()));
        }
        c.c0.add_assign(p.poly(), self.rns())?;
        let from = src.unwrap_or(c);
        for l in 0..=c.level() {
            from.record_limb(0, l, AccessKind::Load);
            p.record_limb(l, AccessKind::Load);
            c.record_limb(0, l, AccessKind::Store);
        }
        if let Some(from) = src {
            for l in 0..=c.level() {
                from.record_limb(1, l, AccessKind::Load);
                c.record_limb(1, l, AccessKind::Store);
            }
        }
        c.noise_bound += noise::encoding(c.degree(), p.scale());
        Ok(())
    }

    pub fn add_cipher_plain(&self, c: &Ciphertext, p: &Plaintext) -> Result<Ciphertext> {
        let mut out = c.unrecorded_copy();
        self.add_plain_impl(&mut out, Some(c), p)?;
        Ok(out)
    }

    pub fn mul_cipher_plain_assign(&self, c: &mut Ciphertext, p: &Plaintext) -> Result<()> {
        self.mul_plain_impl(c, None, p)
    }

    fn mul_plain_impl(&self, c: &mut Ciphertext, src: Option<&Ciphertext>, p: &Plaintext) -> Result<()> {
        self.check_plain(c, p)?;
        let scale = self.check_product_scale(c, p.scale())?;
        let rns = self.rns();
        c.c0.mul_assign(p.poly(), rns)?;
        c.c1.mul_assign(p.poly(), rns)?;
        let from = src.unwrap_or(c);
        for which in 0..2 {
            for l in 0..=c.level() {
                from.record_limb(which, l, AccessKind::Load);
                p.record_limb(l, AccessKind::Load);
                c.record_limb(which, l, AccessKind::Store);
            }
        }
        c.scale = scale;
        c.noise_bound = c.noise_bound * p.max_abs().max(1.0) + noise::encoding(c.degree(), p.scale());
        Ok(())
    }

    pub fn mul_cipher_plain(&self, c: &Ciphertext, p: &Plaintext) -> Result<Ciphertext> {
        let mut out = c.unrecorded_copy();
        self.mul_plain_impl(&mut out, Some(c), p)?;
        Ok(out)
    }

    /// Divides by the last active prime with rounding and drops its limb.
    pub fn rescale(&self, c: &Ciphertext) -> Result<Ciphertext> {
        self.check_cipher(c)?;
        let level = c.level();
        if level == 0 {
            return Err(Error::LevelExhausted("cannot rescale a level-0 ciphertext".into()));
        }
        let rns = self.rns();
        let q_last = rns.modulus(level);
        let half = q_last.value() / 2;
        let table_last = rns.ntt_table(level);
        let n = c.degree();
        let divide = |poly: &RnsPoly| -> RnsPoly {
            let mut last = poly.limb(level).to_vec();
            table_last.inverse(&mut last);
            for x in last.iter_mut() {
                *x = q_last.add(*x, half);
            }
            let mut out = poly.prefix(level);
            let mut tmp = vec![0u64; n];
            for i in 0..level {
                let qi = rns.modulus(i);
                let half_i = qi.reduce(half);
                for (t, &x) in tmp.iter_mut().zip(&last) {
                    *t = qi.sub(qi.reduce(x), half_i);
                }
                rns.ntt_table(i).forward(&mut tmp);
                let inv = qi.inv(qi.reduce(q_last.value()));
                for (o, &t) in out.limb_mut(i).iter_mut().zip(&tmp) {
                    *o = qi.mul(qi.sub(*o, t), inv);
                }
            }
            out
        };
        let c0 = divide(&c.c0);
        let c1 = divide(&c.c1);
        let scale = c.scale / q_last.value() as f64;
        let bound = c.noise_bound + noise::rescale(n, scale);
        let out = Ciphertext::from_parts(c0, c1, scale, bound);
        for which in 0..2 {
            for l in 0..=level {
                c.record_limb(which, l, AccessKind::Load);
            }
            for l in 0..level {
                out.record_limb(which, l, AccessKind::Store);
            }
        }
        Ok(out)
    }

    /// Drops limbs down to `level` without changing the scale.
    pub fn drop_to_level_assign(&self, c: &mut Ciphertext, level: usize) -> Result<()> {
        self.check_cipher(c)?;
        if level > c.level() {
            return Err(Error::LevelMismatch(c.level(), level));
        }
        c.c0.truncate_limbs(level + 1);
        c.c1.truncate_limbs(level + 1);
        Ok(())
    }

    /// Remaining precision in bits: the smaller of the bits below the noise
    /// bound and the modulus headroom above a unit message at the current
    /// scale. Non-increasing along any chain of operations.
    pub fn noise_budget(&self, c: &Ciphertext) -> f64 {
        let precision = -c.noise_bound.log2();
        let headroom = self.rns().log2_modulus(c.level()) - c.scale.log2() - 1.0;
        precision.min(headroom)
    }
}
