//! Engine-measured peak against the estimator on the large fixtures, run on
//! a tiny ring so the full graphs execute.

use std::sync::Arc;

use hemm_core::ckks::{CkksContext, CkksParams};
use hemm_core::inference::{fixtures, footprint_estimate, load_model, run_graph, RunConfig};
use hemm_core::packing::{encrypt_batched, BatchedTensor};
use hemm_core::protocol::{ClientService, LoopbackDelegate};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn check(doc: hemm_core::inference::ModelDoc, batch: usize) {
    let ctx = CkksContext::new(CkksParams::insecure_test(8)).unwrap();
    let (sk, pk) = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(1));
    let client = LoopbackDelegate::new(Arc::new(ClientService::new(ctx.clone(), sk, pk.clone(), 2)));
    let g = load_model(&doc).unwrap();
    let s = g.input_shape;
    let input = encrypt_batched(&ctx, &pk, &BatchedTensor::zeros([batch, s[0], s[1], s[2]]).unwrap(), 3).unwrap();
    let cfg = RunConfig { workers: hemm_core::par::available(), delegate: Some(&client), ..RunConfig::default() };
    let rep = run_graph(&ctx, &g, input, &cfg).unwrap();
    let est = footprint_estimate(&g, batch, &ctx).unwrap();
    assert_eq!(rep.peak_ciphertext_bytes, est.peak_ciphertext_bytes, "{}", g.name);
    assert_eq!(rep.weight_bytes, est.weight_bytes, "{}", g.name);
    assert_eq!(rep.peak_bytes(), est.total());
}

#[test]
fn resnet50_engine_peak_matches_estimate() {
    check(fixtures::resnet50(32, 1000), 1);
}

#[test]
fn mobilenet_v2_full_width_engine_peak_matches_estimate() {
    check(fixtures::mobilenet_v2(1.0, 32, 1000), 4);
}
