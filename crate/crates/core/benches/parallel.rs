use std::collections::BTreeMap;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deskact::action::{Action, ActionSequence, GroundTruthCase, Method, OperationType, Prediction};
use deskact::eval::evaluate_corpus;
use deskact::gateway::StubEmbedder;
use deskact::ingest::{Fps, Frame};
use deskact::localizer::{gaussian_blur_with, localize_with, FloatImage, LocalizerParams};
use deskact::par::Exec;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn frame_pair() -> (Frame, Frame) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = RgbImage::from_fn(1920, 1080, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
    let mut changed = base.clone();
    for r in 400..460 {
        for c in 900..1100 {
            changed.put_pixel(c, r, Rgb([255, 255, 255]));
        }
    }
    (Frame::from_image(0, 0.0, base), Frame::from_image(1, 1.0, changed))
}

fn corpus(videos: usize) -> (BTreeMap<String, Prediction>, BTreeMap<String, GroundTruthCase>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let words = ["save", "button", "cell", "menu", "file", "search", "box", "tab", "list", "row"];
    let ops = [OperationType::Click, OperationType::Type, OperationType::Scroll, OperationType::Select, OperationType::Drag];
    let action = |rng: &mut ChaCha8Rng| {
        let w = |rng: &mut ChaCha8Rng| words[rng.gen_range(0..words.len())];
        Action::new(ops[rng.gen_range(0..ops.len())], format!("{} {}", w(rng), w(rng)), w(rng))
    };
    let (mut preds, mut gts) = (BTreeMap::new(), BTreeMap::new());
    for v in 0..videos {
        let id = format!("v{v:03}");
        let gt: Vec<Action> = (0..8).map(|_| action(&mut rng)).collect();
        let pred: Vec<Action> = (0..8).map(|_| action(&mut rng)).collect();
        preds.insert(id.clone(), Prediction { video_id: id.clone(), method: Method::Df, actions: pred });
        let case = GroundTruthCase {
            video_id: id.clone(),
            domain: "click".into(),
            actions: ActionSequence::new(id.clone(), gt),
            frame_dir: PathBuf::from("frames"),
            source_fps: Fps::integer(30),
        };
        gts.insert(id.clone(), case);
    }
    (preds, gts)
}

fn bench(c: &mut Criterion) {
    let params = LocalizerParams::default();
    let (prev, curr) = frame_pair();
    let float = FloatImage::from_frame(&prev);
    let (preds, gts) = corpus(64);

    let mut group = c.benchmark_group("localize_1080p");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| localize_with(&prev, &curr, &params, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("blur_1080p");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| gaussian_blur_with(&float, &params, exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate_corpus_64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate_corpus(&preds, &gts, 0.7, &StubEmbedder, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
