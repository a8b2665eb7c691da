use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use tabcond::stats::{WilcoxonMode, WilcoxonOptions};
use tabcond::synth::{fuzz_corpus, natural_corpus};
use tabcond::*;

fn parse(c: &mut Criterion) {
    let docs = fuzz_corpus(1000, 1);
    let bytes: usize = docs.iter().map(String::len).sum();
    let mut group = c.benchmark_group("parse");
    group.throughput(Throughput::Bytes(bytes as u64));
    group.bench_function("fuzz_1000", |b| {
        b.iter(|| docs.iter().map(|d| parse_song(black_box(d)).unwrap().body.len()).sum::<usize>())
    });
    let songs: Vec<Song> = docs.iter().map(|d| parse_song(d).unwrap()).collect();
    group.bench_function("serialize_1000", |b| b.iter(|| songs.iter().map(|s| serialize_song(s).len()).sum::<usize>()));
    group.finish();
}

fn segment_and_metrics(c: &mut Criterion) {
    let songs = natural_corpus(200, 2);
    let cfg = SegmentConfig::default();
    c.bench_function("segment_natural_200", |b| {
        b.iter(|| songs.iter().map(|s| segment_measures(black_box(s), &cfg).unwrap().measure_count).sum::<usize>())
    });
    let views: Vec<ScoreView> = songs.iter().map(|s| segment_measures(s, &cfg).unwrap()).collect();
    c.bench_function("pce_gc_natural_200", |b| {
        b.iter(|| {
            views
                .iter()
                .map(|v| pitch_class_entropy(v).unwrap() + groove_consistency(v, 16).unwrap())
                .sum::<f64>()
        })
    });
}

fn sampling(c: &mut Criterion) {
    let songs = natural_corpus(300, 3);
    let corpus: Vec<Vec<Token>> = songs.iter().map(Song::tokens).collect();
    c.bench_function("train_order4_natural_300", |b| b.iter(|| train(black_box(&corpus), 4, 0.01).unwrap()));
    let model = train(&corpus, 4, 0.01).unwrap();
    let prompt = songs[0].header_tokens();
    let mut seed = 0;
    c.bench_function("sample_256_tokens", |b| {
        b.iter_batched(
            || {
                seed += 1;
                GenerationConfig { max_tokens: 256, rng_seed: seed, ..GenerationConfig::default() }
            },
            |cfg| sample(&model, &prompt, &cfg).unwrap().len(),
            BatchSize::SmallInput,
        )
    });
}

fn statistics(c: &mut Criterion) {
    let groups: Vec<(String, Vec<f64>)> = (0..6)
        .map(|g| (format!("g{g}"), (0..1200).map(|i| ((i * 7919 + g * 104729) % 1000) as f64 / 10.0).collect()))
        .collect();
    let groups = MetricGroups::new(groups).unwrap();
    c.bench_function("kruskal_wallis_6x1200", |b| b.iter(|| kruskal_wallis(black_box(&groups)).unwrap().h));
    let (a, b_) = (&groups.groups()[0].1, &groups.groups()[1].1);
    let normal = WilcoxonOptions { mode: WilcoxonMode::Normal, ..WilcoxonOptions::default() };
    c.bench_function("wilcoxon_normal_1200x1200", |b| b.iter(|| wilcoxon_rank_sum(a, b_, normal).unwrap().p_two_sided));
    let exact = WilcoxonOptions { mode: WilcoxonMode::Exact, ..WilcoxonOptions::default() };
    let (x, y): (Vec<f64>, Vec<f64>) = ((0..20).map(f64::from).collect(), (0..20).map(|i| f64::from(i) + 3.5).collect());
    c.bench_function("wilcoxon_exact_20x20", |b| b.iter(|| wilcoxon_rank_sum(&x, &y, exact).unwrap().p_two_sided));
}

criterion_group!(benches, parse, segment_and_metrics, sampling, statistics);
criterion_main!(benches);
