use asasf_bench::sentences;
use asasf_core::{bleu, rouge2};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn corpus_bleu(c: &mut Criterion) {
    let cands = sentences(500, 40, 4);
    let refs = sentences(500, 40, 5);
    c.bench_function("bleu/500", |b| {
        b.iter(|| bleu(black_box(&cands), black_box(&refs)).unwrap())
    });
}

fn rouge(c: &mut Criterion) {
    let text = sentences(2, 40, 6);
    c.bench_function("rouge2/pair", |b| {
        b.iter(|| rouge2(black_box(&text[0]), black_box(&text[1])))
    });
}

criterion_group!(benches, corpus_bleu, rouge);
criterion_main!(benches);
