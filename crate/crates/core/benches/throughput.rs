//! Sequential vs pooled throughput. Build with `--no-default-features` to
//! measure the rayon-free fallback; both pool sizes then run the same code.

use adaptix::codec::{self, CompressionParams};
use adaptix::frame::FrameMetadata;
use adaptix::par;
use adaptix::pipeline::{process_frame, Config, ProfileChoice};
use adaptix::synth::{generate, Scene};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pools() -> Vec<usize> {
    let n = par::available_workers();
    if n > 1 {
        vec![1, n]
    } else {
        vec![1]
    }
}

fn encode(c: &mut Criterion) {
    let frame = generate(Scene::FilmGrain, 512, 384, 3, 10, 1);
    let params = CompressionParams::new(60.0);
    let mut g = c.benchmark_group("encode_512x384");
    for workers in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| par::with_workers(w, || codec::encode(&frame, &params, None).unwrap()))
        });
    }
    g.finish();
}

fn batch(c: &mut Criterion) {
    let frames: Vec<_> = (0..8).map(|i| generate(Scene::Text, 160, 120, 3, 10, i)).collect();
    let config = Config::default();
    let meta = FrameMetadata::default();
    let mut g = c.benchmark_group("batch_8_frames");
    g.sample_size(10);
    for workers in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| {
                par::with_workers(w, || {
                    par::map_slice(&frames, |f| process_frame(f, &meta, ProfileChoice::Auto, &config).unwrap().tiff.len())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, encode, batch);
criterion_main!(benches);
