use brlogic::arithx::mu_step;
use brlogic::evaluator::{Assignment, Evaluator};
use brlogic::model::BrModel;
use brlogic::sets::{f_s_omega_s, NumericalSet};
use brlogic_bench::{arith_seed, formula, registries, HARTIG_PLUS};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn hartig_relation(c: &mut Criterion) {
    let (b, q) = registries();
    let ev = Evaluator::new(&b, &q);
    let phi = formula(HARTIG_PLUS, &b, &q);
    for n in [16, 32] {
        let m = BrModel::new(n);
        c.bench_function(&format!("hartig_plus_relation_n{n}"), |bench| {
            bench.iter(|| ev.defined_relation(&m, &phi, &["x", "y", "z"], &Assignment::new()).unwrap())
        });
    }
}

fn mu(c: &mut Criterion) {
    let p = arith_seed(216, 3);
    c.bench_function("mu_step_n216", |bench| bench.iter(|| mu_step(black_box(&p))));
}

fn set_stats(c: &mut Criterion) {
    for (name, s) in [("sq", NumericalSet::squares()), ("pow2", NumericalSet::pow2()), ("fact", NumericalSet::factorials())] {
        c.bench_function(&format!("f_omega_{name}_n10000"), |bench| bench.iter(|| f_s_omega_s(black_box(&s), 10_000)));
    }
}

criterion_group!(benches, hartig_relation, mu, set_stats);
criterion_main!(benches);
