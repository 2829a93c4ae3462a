use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fofe_link::candidates::{generate_corpus, CandidateOptions};
use fofe_link::kb::KbStore;
use fofe_link::par::Execution;
use fofe_link::ranker::{train, TrainConfig};
use fofe_link::synth::{synthesize, SyntheticSpec};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn fixture() -> (KbStore, Vec<fofe_link::corpus::Document>) {
    let spec = SyntheticSpec {
        n_entities: 300,
        n_docs: 60,
        ..SyntheticSpec::default()
    };
    let (entities, docs) = synthesize(&spec).expect("valid spec");
    (KbStore::from_entities(entities).expect("valid KB"), docs)
}

fn candidates(c: &mut Criterion) {
    let (kb, docs) = fixture();
    let opts = CandidateOptions::default();
    let mut group = c.benchmark_group("gen_candidates");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_corpus(black_box(&docs), &kb, &opts, exec))
        });
    }
    group.finish();
}

fn linking(c: &mut Criterion) {
    let (kb, docs) = fixture();
    let lists = generate_corpus(
        &docs,
        &kb,
        &CandidateOptions::default(),
        Execution::Parallel,
    );
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let model = train(&docs, &lists, &kb, &cfg, Execution::Parallel).expect("training succeeds");
    let mut group = c.benchmark_group("link");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                model
                    .link(black_box(&docs), &lists, &kb, exec)
                    .expect("linking succeeds")
            })
        });
    }
    group.finish();
}

criterion_group!(benches, candidates, linking);
criterion_main!(benches);
