use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hemm_core::ckks::{CkksContext, CkksParams};
use hemm_core::inference::{fixtures, load_model, run_graph, RunConfig};
use hemm_core::packing::{encrypt_batched, BatchedTensor};
use hemm_core::par;
use hemm_core::protocol::{ClientService, LoopbackDelegate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn toy_cnn(c: &mut Criterion) {
    let ctx = CkksContext::new(CkksParams::insecure_test(1024)).unwrap();
    let (sk, pk) = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(1));
    let client = LoopbackDelegate::new(Arc::new(ClientService::new(ctx.clone(), sk.clone(), pk.clone(), 2)));
    let graph = load_model(&fixtures::toy_cnn()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let x = BatchedTensor::new([8, 1, 8, 8], (0..512).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let input = encrypt_batched(&ctx, &pk, &x, 3).unwrap();

    let workers = [1, par::available().max(2)];
    let mut group = c.benchmark_group("toy_cnn_n1024_batch8");
    group.sample_size(10);
    for w in workers {
        group.bench_with_input(BenchmarkId::from_parameter(w), &w, |b, &w| {
            let cfg = RunConfig { workers: w, delegate: Some(&client), secret_key: None, record: false, max_request: 64 };
            b.iter(|| run_graph(&ctx, &graph, black_box(input.clone()), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, toy_cnn);
criterion_main!(benches);
