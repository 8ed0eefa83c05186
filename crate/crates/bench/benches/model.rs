use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sea_bench::fixture;
use sea_core::autodiff::Tape;
use sea_core::crf;
use sea_core::decoder::{total_loss, LossWeights};
use sea_core::eagn::{normalize_adjacency, Gcn, GcnConfig};
use sea_core::encoder::MentionSource;
use sea_core::params::ParamStore;
use sea_core::tensor::Tensor;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn document(c: &mut Criterion) {
    let mut group = c.benchmark_group("document");
    for d in [32, 64] {
        let f = fixture(d, 7);
        let prep = f.model.prepare(&f.docs[0]);
        group.bench_with_input(BenchmarkId::new("forward", d), &d, |b, _| {
            b.iter(|| {
                let mut tape = Tape::train(&f.model.store, 1);
                black_box(f.model.losses(&mut tape, &prep, MentionSource::Gold).unwrap());
            })
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", d), &d, |b, _| {
            b.iter(|| {
                let mut tape = Tape::train(&f.model.store, 1);
                let p = f.model.losses(&mut tape, &prep, MentionSource::Gold).unwrap();
                let total = total_loss(&mut tape, p.entity, p.detection, p.argument, &LossWeights::default()).unwrap();
                black_box(tape.backward(total).unwrap());
            })
        });
        group.bench_with_input(BenchmarkId::new("predict", d), &d, |b, _| {
            b.iter(|| black_box(f.model.predict(&f.docs[0]).unwrap()))
        });
    }
    group.finish();
}

fn crf_ops(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = 21;
    let tr = random(labels, labels, &mut rng);
    let mut group = c.benchmark_group("crf");
    for n in [32, 128] {
        let em = random(n, labels, &mut rng);
        group.bench_with_input(BenchmarkId::new("log_partition", n), &n, |b, &n| {
            b.iter(|| black_box(crf::log_partition(&em, &tr, n, labels)))
        });
        group.bench_with_input(BenchmarkId::new("viterbi", n), &n, |b, &n| {
            b.iter(|| black_box(crf::viterbi(&em, &tr, n, labels)))
        });
    }
    group.finish();
}

fn gcn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 64;
    let mut store = ParamStore::new(11);
    let net = Gcn::new(&mut store, "gcn", d, GcnConfig { dropout: 0.0, ..GcnConfig::default() }).unwrap();
    let mut group = c.benchmark_group("gcn");
    for nodes in [50, 200] {
        let mut adj = Tensor::zeros(&[nodes, nodes]);
        for i in 0..nodes {
            for j in 0..nodes {
                if i != j && rng.gen_bool(0.1) {
                    adj.set(i, j, 1.0);
                    adj.set(j, i, 1.0);
                }
            }
        }
        let adj = normalize_adjacency(&adj);
        let x = Tensor::matrix(nodes, d, random(nodes, d, &mut rng)).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", nodes), &nodes, |b, _| {
            b.iter(|| {
                let mut tape = Tape::eval(&store);
                let a = tape.constant(adj.clone());
                let h = tape.constant(x.clone());
                black_box(net.forward(&mut tape, a, h).unwrap());
            })
        });
    }
    group.finish();
}

criterion_group!(benches, document, crf_ops, gcn);
criterion_main!(benches);
