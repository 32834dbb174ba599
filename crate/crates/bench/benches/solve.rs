use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dimcert_bench::reference_instances;
use dimcert_core::conic::SolverOptions;
use dimcert_core::sdp::{assemble_reduced, synthesize, verify_witness};

fn assemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_reduced");
    for inst in reference_instances() {
        group.bench_function(inst.name, |b| {
            b.iter(|| assemble_reduced(&inst.target, &inst.meas, inst.schmidt_dim).unwrap())
        });
    }
    group.finish();
}

fn synth(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesize");
    group.sample_size(10);
    let opts = SolverOptions::default();
    for inst in reference_instances() {
        group.bench_function(inst.name, |b| b.iter(|| synthesize(&inst.target, &inst.meas, inst.schmidt_dim, &opts).unwrap()));
    }
    group.finish();
}

fn witness(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_witness");
    group.sample_size(10);
    let opts = SolverOptions::default();
    for inst in reference_instances() {
        let cert = synthesize(&inst.target, &inst.meas, inst.schmidt_dim, &opts).unwrap();
        let d = inst.meas.local_dim();
        group.bench_with_input(BenchmarkId::from_parameter(inst.name), &cert, |b, cert| {
            b.iter(|| verify_witness(&cert.m_c, cert.p1 + 1e-6, d, inst.schmidt_dim, 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assemble, synth, witness);
criterion_main!(benches);
