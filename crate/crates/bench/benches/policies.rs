use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use deltafair::acceptance::bundled;
use deltafair::config::ClientId;
use deltafair::reservation::{compute_buffer_reservation, compute_cache_reservation};
use deltafair::sim::run_point;
use deltafair::units::{Delay, MIB};
use deltafair::write_buffer::{BufferState, WriteRequest};
use deltafair_bench::{page, warm_cache};

fn reservation(c: &mut Criterion) {
    c.bench_function("buffer_reservation", |b| {
        b.iter(|| {
            compute_buffer_reservation(
                black_box(128 * MIB),
                64 * MIB,
                380 * MIB,
                2,
                Delay::from_millis(350),
            )
            .unwrap()
        })
    });
    c.bench_function("cache_reservation", |b| {
        b.iter(|| {
            compute_cache_reservation(black_box(320 * MIB), 320 * MIB, 3, Delay::from_millis(250))
                .unwrap()
        })
    });
}

fn buffer(c: &mut Criterion) {
    let n = 64;
    c.bench_function("buffer_alloc_free_64_clients", |b| {
        b.iter_batched(
            || BufferState::new(n as u64 * 64, 16, vec![64; n], vec![16; n]),
            |mut s| {
                for i in 0..4096u64 {
                    let client = ClientId((deltafair_bench::mix(i) % n as u64) as u32);
                    s.try_allocate(WriteRequest {
                        id: i,
                        client,
                        size: 4,
                        enqueue_time: i,
                    })
                    .unwrap();
                    if i % 3 == 2 {
                        let used = s.usage(client);
                        if used > 0 {
                            s.on_flush_complete(client, used).unwrap();
                        }
                    }
                }
                s
            },
            BatchSize::SmallInput,
        )
    });
}

fn cache(c: &mut Criterion) {
    let (n, f) = (32, 1024);
    for shards in [1, 8] {
        c.bench_function(&format!("cache_lookup_admit_{shards}_shards"), |b| {
            b.iter_batched(
                || warm_cache(n, f, f / 2, shards),
                |mut s| {
                    for i in 0..8192 {
                        let p = page(i, n, f);
                        if !s.lookup(p) {
                            s.admit(p).unwrap();
                        }
                    }
                    s
                },
                BatchSize::LargeInput,
            )
        });
    }
}

fn simulate(c: &mut Criterion) {
    let sc = bundled("buffer_micro").unwrap();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("buffer_micro", |b| b.iter(|| run_point(&sc, None).unwrap()));
    g.finish();
}

criterion_group!(benches, reservation, buffer, cache, simulate);
criterion_main!(benches);
