use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use splatpg::exec::Execution;
use splatpg::gradcheck::random_scene;
use splatpg::renderer::{render_vjp_with, render_with, Camera, ImageCotangent};
use splatpg::rng::seeded;
use splatpg::Buffer;

fn modes() -> Vec<(&'static str, Execution)> {
    vec![
        ("sequential", Execution::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Execution::Parallel),
    ]
}

fn bench(c: &mut Criterion) {
    let mut rng = seeded(1);
    let scene = random_scene(&mut rng, 64);
    for size in [64usize, 128] {
        let cam = Camera::new(0.4, 0.2, size, size, 2.0 / size as f64);
        let cot = ImageCotangent::rgb(
            Buffer::from_vec(size, size, 3, (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        );
        let mut group = c.benchmark_group(format!("render_{size}"));
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new("forward", name), &exec, |b, &e| {
                b.iter(|| render_with(&scene, &cam, e).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("vjp", name), &exec, |b, &e| {
                b.iter(|| render_vjp_with(&scene, &cam, &cot, e).unwrap())
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
