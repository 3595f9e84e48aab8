//! Binary layout shared by every serialized CKKS object:
//!
//! ```text
//! magic "CKRS" | version u16 | N u32 | L u8 | level u8 | scale f64 | payload
//! ```
//!
//! All fields are little-endian. The payload is one or two polynomials, each
//! stored limb-major as `(level + 1) * N` u64 residues in the NTT domain.

use super::keys::{PublicKey, SecretKey};
use super::types::{Ciphertext, Plaintext};
use super::CkksContext;
use crate::error::{Error, Result};
use crate::rns::{Domain, RnsPoly};

pub const MAGIC: [u8; 4] = *b"CKRS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Header {
    degree: usize,
    num_moduli: usize,
    level: usize,
    scale: f64,
}

impl CkksContext {
    fn write_header(&self, out: &mut Vec<u8>, level: usize, scale: f64) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.degree() as u32).to_le_bytes());
        out.push(self.rns().num_moduli() as u8);
        out.push(level as u8);
        out.extend_from_slice(&scale.to_le_bytes());
    }

    fn read_header(&self, bytes: &[u8]) -> Result<Header> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected CKRS".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported CKRS version {version}")));
        }
        let degree = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let num_moduli = bytes[10] as usize;
        let level = bytes[11] as usize;
        let scale = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if degree != self.degree() || num_moduli != self.rns().num_moduli() {
            return Err(Error::ContextMismatch(format!(
                "object has N = {degree}, L = {num_moduli}; context has N = {}, L = {}",
                self.degree(),
                self.rns().num_moduli()
            )));
        }
        if level >= num_moduli {
            return Err(Error::Format(format!("level {level} out of range for L = {num_moduli}")));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Format(format!("invalid scale {scale}")));
        }
        Ok(Header { degree, num_moduli, level, scale })
    }

    fn read_polys(&self, bytes: &[u8], count: usize) -> Result<(Header, Vec<RnsPoly>)> {
        let header = self.read_header(bytes)?;
        let limbs = header.level + 1;
        let words = limbs * header.degree;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != count * words * 8 {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                count * words * 8
            )));
        }
        let mut polys = Vec::with_capacity(count);
        for chunk in payload.chunks_exact(words * 8) {
            let data = chunk.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect();
            let poly = RnsPoly::from_limbs(self.rns(), data, limbs, Domain::Ntt)
                .map_err(|e| Error::Format(format!("bad residue data: {e}")))?;
            polys.push(poly);
        }
        Ok((header, polys))
    }

    fn serialize_polys(&self, polys: &[&RnsPoly], scale: f64) -> Vec<u8> {
        let level = polys[0].num_limbs() - 1;
        let mut out = Vec::with_capacity(HEADER_LEN + polys.iter().map(|p| p.data().len() * 8).sum::<usize>());
        self.write_header(&mut out, level, scale);
        for p in polys {
            for x in p.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn serialize_ciphertext(&self, ct: &Ciphertext) -> Vec<u8> {
        self.serialize_polys(&[ct.c0(), ct.c1()], ct.scale())
    }

    /// The noise bound is not part of the format; it is reset to the fresh
    /// bound for the stored scale.
    pub fn deserialize_ciphertext(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let (h, mut polys) = self.read_polys(bytes, 2)?;
        if h.scale <= 0.0 {
            return Err(Error::Format("ciphertext scale must be positive".into()));
        }
        let c1 = polys.pop().unwrap();
        let c0 = polys.pop().unwrap();
        Ok(Ciphertext::from_parts(c0, c1, h.scale, self.fresh_noise_bound(h.scale)))
    }

    pub fn serialize_plaintext(&self, pt: &Plaintext) -> Vec<u8> {
        self.serialize_polys(&[pt.poly()], pt.scale())
    }

    pub fn deserialize_plaintext(&self, bytes: &[u8]) -> Result<Plaintext> {
        let (h, mut polys) = self.read_polys(bytes, 1)?;
        Ok(Plaintext::new(polys.pop().unwrap(), h.scale, 0.0))
    }

    pub fn serialize_public_key(&self, pk: &PublicKey) -> Vec<u8> {
        self.serialize_polys(&[pk.b(), pk.a()], 0.0)
    }

    pub fn deserialize_public_key(&self, bytes: &[u8]) -> Result<PublicKey> {
        let (h, mut polys) = self.read_polys(bytes, 2)?;
        if h.level != self.max_level() {
            return Err(Error::Format("public key must cover every limb".into()));
        }
        let a = polys.pop().unwrap();
        let b = polys.pop().unwrap();
        Ok(PublicKey { b, a })
    }

    pub fn serialize_secret_key(&self, sk: &SecretKey) -> Vec<u8> {
        self.serialize_polys(&[sk.poly()], 0.0)
    }

    pub fn deserialize_secret_key(&self, bytes: &[u8]) -> Result<SecretKey> {
        let (h, mut polys) = self.read_polys(bytes, 1)?;
        if h.level != self.max_level() {
            return Err(Error::Format("secret key must cover every limb".into()));
        }
        Ok(SecretKey { s: polys.pop().unwrap() })
    }
}
