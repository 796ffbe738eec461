use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlpp_core::environment::{EnvConfig, RacingEnv};
use rlpp_core::harness::{prepare_track, PreparedTrack, TrackBuild, TrackSource};
use rlpp_core::learning::{ppo_update, ActorCritic, Adam, PpoConfig, RolloutBuffer};
use rlpp_core::localization::{Localizer, MclConfig};
use rlpp_core::raceline::{build_raceline, RacelineParams};
use rlpp_core::simulator::ScanConfig;
use rlpp_core::track::{corpus_track, raycast, CorpusTrack};
use rlpp_core::Pose;

fn oval() -> PreparedTrack {
    prepare_track(&TrackSource::Corpus(CorpusTrack::Oval), &TrackBuild::default()).unwrap()
}

fn start_pose(track: &PreparedTrack) -> Pose {
    let p = track.raceline.points[0];
    let q = track.raceline.points[1];
    Pose::new(p.x, p.y, (q.y - p.y).atan2(q.x - p.x))
}

fn bench_raycast(c: &mut Criterion) {
    let track = oval();
    let pose = start_pose(&track);
    let angles = ScanConfig::default().angles();
    c.bench_function("raycast_1080_beams", |b| {
        b.iter(|| raycast(&track.grid, black_box(pose), &angles, 30.0).unwrap())
    });
}

fn bench_raceline(c: &mut Criterion) {
    let track = corpus_track(CorpusTrack::Chicane, 0.25).unwrap();
    let params = RacelineParams::default();
    let mut group = c.benchmark_group("raceline");
    group.sample_size(10);
    group.bench_function("build_chicane", |b| b.iter(|| build_raceline(black_box(&track), &params).unwrap()));
    group.finish();
}

fn bench_env_step(c: &mut Criterion) {
    let track = oval();
    let mut env = RacingEnv::new(track.raceline.clone(), track.grid.clone(), EnvConfig::default(), 0).unwrap();
    env.reset().unwrap();
    c.bench_function("env_step", |b| {
        b.iter(|| {
            let out = env.step(black_box(0.0)).unwrap();
            if out.done() {
                env.reset().unwrap();
            }
        })
    });
}

fn bench_ppo_update(c: &mut Criterion) {
    let cfg = PpoConfig { n_steps: 2048, batch: 256, epochs: 5, target_kl: None, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ActorCritic::new(5, &cfg.hidden, cfg.log_std_init, &mut rng);
    let mut buffer = RolloutBuffer::default();
    for i in 0..cfg.n_steps {
        let x = i as f64 * 0.01;
        buffer.push(vec![x.sin(), x.cos(), 0.1, -0.2, x], x.sin() * 0.5, -1.0, 0.0, x.cos(), i % 500 == 499);
    }
    buffer.finish(0.0, cfg.gamma, cfg.lambda);
    let mut group = c.benchmark_group("ppo");
    group.sample_size(10);
    group.bench_function("update_2048x5", |b| {
        b.iter_batched(
            || (model.clone(), Adam::new(model.num_params(), cfg.adam), ChaCha8Rng::seed_from_u64(1)),
            |(mut m, mut opt, mut r)| ppo_update(&mut m, &mut opt, &buffer, &cfg, 1.0, &mut r),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_mcl(c: &mut Criterion) {
    let track = oval();
    let pose = start_pose(&track);
    let angles = ScanConfig::default().angles();
    let scan = raycast(&track.grid, pose, &angles, 30.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let localizer = Localizer::new(MclConfig::default(), pose, &track.grid, &mut rng).unwrap();
    c.bench_function("mcl_update_1000_particles", |b| {
        b.iter_batched(
            || localizer.clone(),
            |mut l| l.update(2.0, 0.0, 0.33, 0.05, &scan, &angles, &track.grid, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_raycast, bench_raceline, bench_env_step, bench_ppo_update, bench_mcl);
criterion_main!(benches);
