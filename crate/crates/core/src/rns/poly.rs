use super::RnsContext;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Coefficient,
    Ntt,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Coefficient => "coefficient",
            Domain::Ntt => "ntt",
        }
    }
}

/// Polynomial in RNS form, `limbs x N` residues stored limb-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    data: Vec<u64>,
    degree: usize,
    limbs: usize,
    domain: Domain,
}

impl RnsPoly {
    pub fn zero(ctx: &RnsContext, limbs: usize, domain: Domain) -> Self {
        assert!(limbs >= 1 && limbs <= ctx.num_moduli());
        RnsPoly { data: vec![0; limbs * ctx.degree()], degree: ctx.degree(), limbs, domain }
    }

    /// Wraps raw limb-major residues, validating that each is reduced.
    pub fn from_limbs(ctx: &RnsContext, data: Vec<u64>, limbs: usize, domain: Domain) -> Result<Self> {
        let n = ctx.degree();
        if limbs == 0 || limbs > ctx.num_moduli() || data.len() != limbs * n {
            return Err(Error::ContextMismatch(format!(
                "{} residues do not form {limbs} limbs of degree {n}",
                data.len()
            )));
        }
        for (l, chunk) in data.chunks_exact(n).enumerate() {
            let q = ctx.modulus(l).value();
            if chunk.iter().any(|&x| x >= q) {
                return Err(Error::Format(format!("residue not reduced modulo limb {l}")));
            }
        }
        Ok(RnsPoly { data, degree: n, limbs, domain })
    }

    /// Encodes signed integer coefficients consistently across all limbs.
    pub fn from_signed(ctx: &RnsContext, coeffs: &[i64], limbs: usize) -> Self {
        assert_eq!(coeffs.len(), ctx.degree());
        let mut p = RnsPoly::zero(ctx, limbs, Domain::Coefficient);
        for l in 0..limbs {
            let q = ctx.modulus(l);
            for (dst, &c) in p.limb_mut(l).iter_mut().zip(coeffs) {
                *dst = q.from_i64(c);
            }
        }
        p
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn num_limbs(&self) -> usize {
        self.limbs
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn limb(&self, l: usize) -> &[u64] {
        &self.data[l * self.degree..(l + 1) * self.degree]
    }

    pub fn limb_mut(&mut self, l: usize) -> &mut [u64] {
        &mut self.data[l * self.degree..(l + 1) * self.degree]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    /// Drops trailing limbs so that `limbs` remain.
    pub fn truncate_limbs(&mut self, limbs: usize) {
        assert!(limbs >= 1 && limbs <= self.limbs);
        self.data.truncate(limbs * self.degree);
        self.limbs = limbs;
    }

    /// Copy restricted to the first `limbs` limbs.
    pub fn prefix(&self, limbs: usize) -> RnsPoly {
        assert!(limbs >= 1 && limbs <= self.limbs);
        RnsPoly {
            data: self.data[..limbs * self.degree].to_vec(),
            degree: self.degree,
            limbs,
            domain: self.domain,
        }
    }

    fn check_ctx(&self, ctx: &RnsContext) -> Result<()> {
        if self.degree != ctx.degree() || self.limbs > ctx.num_moduli() {
            return Err(Error::ContextMismatch(format!(
                "polynomial (N={}, limbs={}) does not belong to context (N={}, L={})",
                self.degree,
                self.limbs,
                ctx.degree(),
                ctx.num_moduli()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, other: &RnsPoly, ctx: &RnsContext) -> Result<()> {
        self.check_ctx(ctx)?;
        other.check_ctx(ctx)?;
        if self.limbs != other.limbs {
            return Err(Error::LevelMismatch(self.limbs - 1, other.limbs - 1));
        }
        if self.domain != other.domain {
            return Err(Error::Domain { expected: self.domain.name(), found: other.domain.name() });
        }
        Ok(())
    }

    fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain { expected: expected.name(), found: self.domain.name() });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &RnsPoly, ctx: &RnsContext) -> Result<()> {
        self.check_pair(other, ctx)?;
        let n = self.degree;
        for l in 0..self.limbs {
            let q = ctx.modulus(l);
            let src = &other.data[l * n..(l + 1) * n];
            for (a, &b) in self.data[l * n..(l + 1) * n].iter_mut().zip(src) {
                *a = q.add(*a, b);
            }
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &RnsPoly, ctx: &RnsContext) -> Result<()> {
        self.check_pair(other, ctx)?;
        let n = self.degree;
        for l in 0..self.limbs {
            let q = ctx.modulus(l);
            let src = &other.data[l * n..(l + 1) * n];
            for (a, &b) in self.data[l * n..(l + 1) * n].iter_mut().zip(src) {
                *a = q.sub(*a, b);
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &RnsPoly, ctx: &RnsContext) -> Result<RnsPoly> {
        let mut out = self.clone();
        out.add_assign(other, ctx)?;
        Ok(out)
    }

    pub fn sub(&self, other: &RnsPoly, ctx: &RnsContext) -> Result<RnsPoly> {
        let mut out = self.clone();
        out.sub_assign(other, ctx)?;
        Ok(out)
    }

    pub fn negate(&self, ctx: &RnsContext) -> Result<RnsPoly> {
        self.check_ctx(ctx)?;
        let mut out = self.clone();
        let n = self.degree;
        for l in 0..self.limbs {
            let q = ctx.modulus(l);
            for a in &mut out.data[l * n..(l + 1) * n] {
                *a = q.neg(*a);
            }
        }
        Ok(out)
    }

    /// Coefficient-wise product in the NTT domain, each product Barrett-reduced.
    pub fn mul_assign(&mut self, other: &RnsPoly, ctx: &RnsContext) -> Result<()> {
        self.check_pair(other, ctx)?;
        self.expect_domain(Domain::Ntt)?;
        let n = self.degree;
        for l in 0..self.limbs {
            let q = ctx.modulus(l);
            let src = &other.data[l * n..(l + 1) * n];
            for (a, &b) in self.data[l * n..(l + 1) * n].iter_mut().zip(src) {
                *a = q.reduce(*a * b);
            }
        }
        Ok(())
    }

    pub fn pointwise_mul(&self, other: &RnsPoly, ctx: &RnsContext) -> Result<RnsPoly> {
        let mut out = self.clone();
        out.mul_assign(other, ctx)?;
        Ok(out)
    }

    pub fn ntt_forward_assign(&mut self, ctx: &RnsContext) -> Result<()> {
        self.check_ctx(ctx)?;
        self.expect_domain(Domain::Coefficient)?;
        for l in 0..self.limbs {
            let n = self.degree;
            ctx.ntt_table(l).forward(&mut self.data[l * n..(l + 1) * n]);
        }
        self.domain = Domain::Ntt;
        Ok(())
    }

    pub fn ntt_inverse_assign(&mut self, ctx: &RnsContext) -> Result<()> {
        self.check_ctx(ctx)?;
        self.expect_domain(Domain::Ntt)?;
        for l in 0..self.limbs {
            let n = self.degree;
            ctx.ntt_table(l).inverse(&mut self.data[l * n..(l + 1) * n]);
        }
        self.domain = Domain::Coefficient;
        Ok(())
    }

    pub fn ntt_forward(&self, ctx: &RnsContext) -> Result<RnsPoly> {
        let mut out = self.clone();
        out.ntt_forward_assign(ctx)?;
        Ok(out)
    }

    pub fn ntt_inverse(&self, ctx: &RnsContext) -> Result<RnsPoly> {
        let mut out = self.clone();
        out.ntt_inverse_assign(ctx)?;
        Ok(out)
    }

    /// Centered integer value of every coefficient (coefficient domain).
    pub fn to_centered_f64(&self, ctx: &RnsContext) -> Result<Vec<f64>> {
        self.check_ctx(ctx)?;
        self.expect_domain(Domain::Coefficient)?;
        let n = self.degree;
        let mut residues = vec![0u64; self.limbs];
        Ok((0..n)
            .map(|i| {
                for (l, r) in residues.iter_mut().enumerate() {
                    *r = self.data[l * n + i];
                }
                ctx.crt_centered_f64(&residues)
            })
            .collect())
    }
}
