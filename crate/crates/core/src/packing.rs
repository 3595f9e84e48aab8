//! Batch-axis packing: element `(c, h, w)` of every sample in a batch shares
//! one ciphertext, with sample `k` in slot `k`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ckks::{scales_match, Ciphertext, CkksContext, Plaintext, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::par;

pub const TENSOR_MAGIC: [u8; 4] = *b"HETN";
pub const CIPHER_TENSOR_MAGIC: [u8; 4] = *b"HECT";
pub const FILE_VERSION: u16 = 1;
const DTYPE_F64: u8 = 1;

/// Real tensor of shape `(N_b, C, H, W)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedTensor {
    shape: [usize; 4],
    values: Vec<f64>,
}

impl BatchedTensor {
    pub fn new(shape: [usize; 4], values: Vec<f64>) -> Result<Self> {
        if shape[0] == 0 {
            return Err(Error::Shape("batch must hold at least one sample".into()));
        }
        let count = shape.iter().product::<usize>();
        if values.len() != count {
            return Err(Error::Shape(format!("{} values for shape {shape:?} ({count} elements)", values.len())));
        }
        Ok(BatchedTensor { shape, values })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// `(C, H, W)`.
    pub fn sample_shape(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let n = self.sample_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let [_, cc, hh, ww] = self.shape;
        self.values[((n * cc + c) * hh + h) * ww + w]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + 32 + self.values.len() * 8);
        buf.extend_from_slice(&TENSOR_MAGIC);
        buf.extend_from_slice(&FILE_VERSION.to_le_bytes());
        buf.push(DTYPE_F64);
        buf.push(4);
        for d in self.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || bytes[..4] != TENSOR_MAGIC {
            return Err(Error::Format("not a HETN tensor file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FILE_VERSION {
            return Err(Error::Format(format!("unsupported HETN version {version}")));
        }
        if bytes[6] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype {}", bytes[6])));
        }
        if bytes[7] != 4 {
            return Err(Error::Format(format!("expected 4 dimensions, found {}", bytes[7])));
        }
        if bytes.len() < 40 {
            return Err(Error::Format("truncated HETN header".into()));
        }
        let mut shape = [0usize; 4];
        for (i, d) in shape.iter_mut().enumerate() {
            *d = u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        }
        let payload = &bytes[40..];
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if count.and_then(|c| c.checked_mul(8)) != Some(payload.len()) {
            return Err(Error::Format(format!("payload of {} bytes does not match shape {shape:?}", payload.len())));
        }
        let values = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        BatchedTensor::new(shape, values).map_err(|e| Error::Format(e.to_string()))
    }
}

/// `C x H x W` grid of ciphertexts carrying `batch` samples each.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherTensor {
    shape: [usize; 3],
    batch: usize,
    cts: Vec<Ciphertext>,
}

impl CipherTensor {
    pub fn new(shape: [usize; 3], batch: usize, cts: Vec<Ciphertext>) -> Result<Self> {
        if cts.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("{} ciphertexts for grid {shape:?}", cts.len())));
        }
        if let Some(first) = cts.first() {
            for c in &cts[1..] {
                if c.level() != first.level() {
                    return Err(Error::LevelMismatch(first.level(), c.level()));
                }
                if !scales_match(c.scale(), first.scale()) {
                    return Err(Error::ScaleMismatch(first.scale(), c.scale()));
                }
                if c.degree() != first.degree() {
                    return Err(Error::ContextMismatch("mixed ring degrees in grid".into()));
                }
            }
        }
        Ok(CipherTensor { shape, batch, cts })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.cts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cts.is_empty()
    }

    pub fn ciphertexts(&self) -> &[Ciphertext] {
        &self.cts
    }

    pub fn into_ciphertexts(self) -> Vec<Ciphertext> {
        self.cts
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> &Ciphertext {
        &self.cts[(c * self.shape[1] + h) * self.shape[2] + w]
    }

    pub fn level(&self) -> Option<usize> {
        self.cts.first().map(|c| c.level())
    }

    pub fn scale(&self) -> Option<f64> {
        self.cts.first().map(|c| c.scale())
    }

    /// Sum of the serialized payload sizes of all members.
    pub fn byte_size(&self) -> u64 {
        self.cts.iter().map(|c| c.byte_size()).sum()
    }
}

/// Encodes every element position across the batch into one plaintext at
/// the top level; unused slots are zero.
pub fn pack_batch_axis(ctx: &CkksContext, t: &BatchedTensor, scale: f64) -> Result<Vec<Plaintext>> {
    let batch = t.batch();
    if batch > ctx.slots() {
        return Err(Error::Encoding(format!("batch {batch} exceeds the {} available slots", ctx.slots())));
    }
    let m = t.sample_len();
    par::try_map(m, |i| {
        let column: Vec<f64> = (0..batch).map(|k| t.values[k * m + i]).collect();
        ctx.encode(&column, scale)
    })
}

pub fn unpack_batch_axis(ctx: &CkksContext, shape: [usize; 3], batch: usize, pts: &[Plaintext]) -> Result<BatchedTensor> {
    let m = shape.iter().product::<usize>();
    if pts.len() != m {
        return Err(Error::Shape(format!("{} plaintexts for grid {shape:?}", pts.len())));
    }
    if batch == 0 || batch > ctx.slots() {
        return Err(Error::Shape(format!("batch {batch} outside 1..={}", ctx.slots())));
    }
    let decoded = par::try_map(m, |i| ctx.decode(&pts[i]))?;
    let mut values = vec![0.0; batch * m];
    for (i, slots) in decoded.iter().enumerate() {
        for k in 0..batch {
            values[k * m + i] = slots[k];
        }
    }
    BatchedTensor::new([batch, shape[0], shape[1], shape[2]], values)
}

/// Encryption randomness for grid element `index`: an independent ChaCha
/// stream per element, so the result does not depend on evaluation order.
pub fn element_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn encrypt_tensor(
    ctx: &CkksContext,
    pk: &PublicKey,
    pts: &[Plaintext],
    shape: [usize; 3],
    batch: usize,
    seed: u64,
) -> Result<CipherTensor> {
    if pts.len() != shape.iter().product::<usize>() {
        return Err(Error::Shape(format!("{} plaintexts for grid {shape:?}", pts.len())));
    }
    let cts = par::try_map(pts.len(), |i| ctx.encrypt(pk, &pts[i], &mut element_rng(seed, i)))?;
    CipherTensor::new(shape, batch, cts)
}

/// Packs, encodes at the context scale and encrypts in one step.
pub fn encrypt_batched(ctx: &CkksContext, pk: &PublicKey, t: &BatchedTensor, seed: u64) -> Result<CipherTensor> {
    let pts = pack_batch_axis(ctx, t, ctx.scale())?;
    encrypt_tensor(ctx, pk, &pts, t.sample_shape(), t.batch(), seed)
}

pub fn decrypt_tensor(ctx: &CkksContext, sk: &SecretKey, ct: &CipherTensor) -> Result<BatchedTensor> {
    let pts = par::try_map(ct.len(), |i| ctx.decrypt(sk, &ct.cts[i]))?;
    unpack_batch_axis(ctx, ct.shape, ct.batch, &pts)
}

impl CkksContext {
    /// `HECT`: magic | version u16 | C, H, W, batch u32 | count u64 |
    /// count * CKRS ciphertext (fixed size given the shared level).
    pub fn serialize_cipher_tensor(&self, t: &CipherTensor) -> Vec<u8> {
        let mut out = Vec::with_capacity(30 + t.byte_size() as usize + 20 * t.len());
        out.extend_from_slice(&CIPHER_TENSOR_MAGIC);
        out.extend_from_slice(&FILE_VERSION.to_le_bytes());
        for d in t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(t.batch as u32).to_le_bytes());
        out.extend_from_slice(&(t.cts.len() as u64).to_le_bytes());
        for c in &t.cts {
            out.extend_from_slice(&self.serialize_ciphertext(c));
        }
        out
    }

    pub fn deserialize_cipher_tensor(&self, bytes: &[u8]) -> Result<CipherTensor> {
        if bytes.len() < 30 || bytes[..4] != CIPHER_TENSOR_MAGIC {
            return Err(Error::Format("not a HECT cipher-tensor file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FILE_VERSION {
            return Err(Error::Format(format!("unsupported HECT version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let shape = [u32_at(6), u32_at(10), u32_at(14)];
        let batch = u32_at(18);
        let count = u64::from_le_bytes(bytes[22..30].try_into().unwrap()) as usize;
        if Some(count) != shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) {
            return Err(Error::Format(format!("{count} ciphertexts for grid {shape:?}")));
        }
        let body = &bytes[30..];
        if count == 0 {
            return if body.is_empty() { CipherTensor::new(shape, batch, Vec::new()) } else { Err(Error::Format("trailing bytes".into())) };
        }
        if !body.len().is_multiple_of(count) {
            return Err(Error::Format("cipher-tensor body is not evenly divisible".into()));
        }
        let each = body.len() / count;
        let cts = par::try_map(count, |i| self.deserialize_ciphertext(&body[i * each..(i + 1) * each]))?;
        CipherTensor::new(shape, batch, cts).map_err(|e| Error::Format(e.to_string()))
    }
}
