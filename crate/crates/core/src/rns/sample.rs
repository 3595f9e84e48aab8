use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{Domain, RnsContext, RnsPoly};

/// Standard deviation of the error distribution.
pub const DEFAULT_SIGMA: f64 = 3.2;

/// Gaussian samples beyond this many standard deviations are redrawn.
pub const GAUSSIAN_TAIL_CUT: f64 = 6.0;

/// Independent uniform residues per limb, i.e. a uniform element of `R_Q`.
pub fn sample_uniform<R: RngCore + ?Sized>(ctx: &RnsContext, rng: &mut R) -> RnsPoly {
    let limbs = ctx.num_moduli();
    let mut p = RnsPoly::zero(ctx, limbs, Domain::Coefficient);
    for l in 0..limbs {
        let q = ctx.modulus(l).value();
        for x in p.limb_mut(l) {
            *x = rng.random_range(0..q);
        }
    }
    p
}

pub fn ternary_coefficients<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Coefficients drawn uniformly from `{-1, 0, 1}`.
pub fn sample_ternary<R: RngCore + ?Sized>(ctx: &RnsContext, rng: &mut R) -> RnsPoly {
    let coeffs = ternary_coefficients(ctx.degree(), rng);
    RnsPoly::from_signed(ctx, &coeffs, ctx.num_moduli())
}

pub fn gaussian_coefficients<R: RngCore + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
    let cut = GAUSSIAN_TAIL_CUT * sigma;
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= cut {
                break x.round() as i64;
            }
        })
        .collect()
}

/// Rounded centered Gaussian coefficients, truncated at six standard deviations.
pub fn sample_gaussian<R: RngCore + ?Sized>(ctx: &RnsContext, rng: &mut R, sigma: f64) -> RnsPoly {
    let coeffs = gaussian_coefficients(ctx.degree(), sigma, rng);
    RnsPoly::from_signed(ctx, &coeffs, ctx.num_moduli())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let ctx = RnsContext::new(64, &[20, 21], true).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (sample_uniform(&ctx, &mut rng), sample_ternary(&ctx, &mut rng), sample_gaussian(&ctx, &mut rng, 3.2))
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9).0, draw(10).0);
    }

    #[test]
    fn ternary_is_consistent_across_limbs() {
        let ctx = RnsContext::new(256, &[20, 21, 22], true).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let p = sample_ternary(&ctx, &mut rng);
        for v in p.to_centered_f64(&ctx).unwrap() {
            assert!(v == -1.0 || v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn gaussian_standard_deviation() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let xs = gaussian_coefficients(100_000, DEFAULT_SIGMA, &mut rng);
        let mean = xs.iter().sum::<i64>() as f64 / xs.len() as f64;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let sd = var.sqrt();
        assert!((sd - DEFAULT_SIGMA).abs() / DEFAULT_SIGMA < 0.05, "sd = {sd}");
        assert!(xs.iter().all(|&x| (x as f64).abs() <= 6.0 * DEFAULT_SIGMA));
    }

    #[test]
    fn uniform_values_are_reduced() {
        let ctx = RnsContext::new(1024, &[20, 31], true).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let p = sample_uniform(&ctx, &mut rng);
        for l in 0..2 {
            assert!(p.limb(l).iter().all(|&x| x < ctx.modulus(l).value()));
        }
    }
}
