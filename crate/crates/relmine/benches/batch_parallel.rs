//! Compares the data-parallel batch path against the sequential fallback
//! on the two hot loops: text embedding and per-graph encoder
//! forward/backward. Run with --features parallel (default) and with
//! --no-default-features to see the single-thread baseline of map_ordered.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relmine::embed::TextEmbedder;
use relmine::exec::{map_ordered, map_ordered_seq};
use relmine::graph::Edge;
use relmine::optim::normal;
use relmine::rgcn::{Decomp, Rgcn, RgcnConfig};
use relmine::rng::substream;
use relmine::tape::{ParamStore, Tape};

fn bench_embedding(c: &mut Criterion) {
    let embedder = TextEmbedder::hashing(64);
    let texts: Vec<String> = (0..512)
        .map(|i| format!("How often do you engage in activity {i} with friends after school?"))
        .collect();
    let mut group = c.benchmark_group("embed_batch");
    group.bench_function(BenchmarkId::new("parallel", texts.len()), |b| {
        b.iter(|| {
            map_ordered(&texts, |t| embedder.embed(t).unwrap())
        })
    });
    group.bench_function(BenchmarkId::new("sequential", texts.len()), |b| {
        b.iter(|| {
            map_ordered_seq(&texts, |t| embedder.embed(t).unwrap())
        })
    });
    group.finish();
}

struct Workload {
    store: ParamStore,
    rgcn: Rgcn,
    graphs: Vec<(Vec<Edge>, ndarray::Array2<f64>)>,
}

fn workload() -> Workload {
    let d = 32;
    let mut rng = substream(1, "bench:init");
    let mut store = ParamStore::new();
    let rgcn = Rgcn::init(
        &mut store,
        &mut rng,
        "enc",
        RgcnConfig { d_in: d, d_hidden: d, n_layers: 3, n_relations: 8, decomp: Decomp::Full },
    );
    let n_nodes = 24;
    let graphs = (0..64u64)
        .map(|g| {
            let mut edges = Vec::new();
            for q in 1..16u32 {
                let rel = (q % 8) as u32;
                edges.push(Edge { src: 0, dst: q, rel });
                edges.push(Edge { src: q, dst: 0, rel });
                let topic = 16 + (q % 8);
                edges.push(Edge { src: q, dst: topic, rel: 7 });
                edges.push(Edge { src: topic, dst: q, rel: 7 });
            }
            let x = normal(&mut substream(g, "bench:x"), n_nodes, d, 1.0);
            (edges, x)
        })
        .collect();
    Workload { store, rgcn, graphs }
}

fn bench_encoder(c: &mut Criterion) {
    let w = workload();
    let run = |(edges, x): &(Vec<Edge>, ndarray::Array2<f64>)| {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let h = w.rgcn.forward(&mut t, &w.store, xv, edges, x.nrows(), None);
        let sq = t.mul(h, h);
        let loss = t.mean_all(sq);
        let g = t.backward(loss);
        t.param_grads(&g, &w.store)
    };
    let mut group = c.benchmark_group("encoder_batch");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", w.graphs.len()), |b| {
        b.iter(|| map_ordered(&w.graphs, run))
    });
    group.bench_function(BenchmarkId::new("sequential", w.graphs.len()), |b| {
        b.iter(|| map_ordered_seq(&w.graphs, run))
    });
    group.finish();
}

criterion_group!(benches, bench_embedding, bench_encoder);
criterion_main!(benches);
