use attractorlab::dynsys::{State, Trajectory};
use attractorlab::lstm::{init_params, Architecture, InitScale, LstmParams, MemoryInit, MemoryState};
use attractorlab::sampling::{Dataset, Strategy};
use attractorlab::seed;
use attractorlab::training::{fit, sequence_loss, sequence_loss_value, train, LrSchedule, NoObserver, TrainConfig};

fn random_chunk(seed: u64, n: usize) -> Trajectory {
    use rand::Rng;
    let mut rng = seed::rng(seed);
    let s = (0..n)
        .map(|_| State::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
        .collect();
    Trajectory::new(s, 0.01, 0.0).unwrap()
}

/// Largest relative error between the BPTT gradient and central differences
/// over every parameter.
fn max_rel_err(arch: &Architecture, seed: u64, steps: usize) -> f64 {
    let p = init_params(arch, seed, InitScale::Constant(0.8));
    let chunk = random_chunk(seed + 100, steps + 1);
    let m0 = MemoryState::gaussian(arch, &mut seed::rng(seed + 200));
    let (_, g) = sequence_loss(&p, &chunk, &m0).unwrap();
    let h = 1e-4;
    let at = |k: usize, d: f64| {
        let mut q = p.clone();
        q.as_mut_slice()[k] += d;
        sequence_loss_value(&q, &chunk, &m0)
    };
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        // five-point central stencil
        let fd = (at(k, -2.0 * h) - 8.0 * at(k, -h) + 8.0 * at(k, h) - at(k, 2.0 * h)) / (12.0 * h);
        let denom = g.0[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g.0[k] - fd).abs() / denom);
    }
    worst
}

#[test]
fn bptt_matches_finite_differences() {
    let arch = Architecture::new(vec![4]).unwrap();
    for seed in 0..5 {
        let e = max_rel_err(&arch, seed, 10);
        assert!(e < 1e-5, "seed {seed}: max rel err {e:e}");
    }
}

#[test]
fn bptt_matches_finite_differences_stacked() {
    let arch = Architecture::new(vec![3, 4]).unwrap();
    for seed in 0..2 {
        let e = max_rel_err(&arch, seed, 8);
        assert!(e < 1e-5, "seed {seed}: max rel err {e:e}");
    }
}

#[test]
fn perfect_predictor_has_zero_loss() {
    // a zero network predicts 0.5 everywhere, which is exact on a constant 0.5 chunk
    let arch = Architecture::new(vec![2]).unwrap();
    let p = LstmParams::zeros(&arch);
    let c = Trajectory::new(vec![State::new(0.5, 0.5, 0.5); 20], 0.01, 0.0).unwrap();
    let (loss, g) = sequence_loss(&p, &c, &MemoryState::zeros(&arch)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.0.iter().all(|&x| x == 0.0));
}

#[test]
fn constant_target_is_learned() {
    let arch = Architecture::new(vec![1]).unwrap();
    let c = Trajectory::new(vec![State::new(0.5, 0.5, 0.5); 101], 0.01, 0.0).unwrap();
    let cfg = TrainConfig {
        arch,
        epochs: 50,
        tbptt_window: 10,
        lr0: 1e-1,
        ..TrainConfig::default()
    };
    let (_, hist) = fit(&[c], &cfg, &mut NoObserver).unwrap();
    let best = hist.running_min();
    assert!(*best.last().unwrap() < 1e-6, "final {:e}", best.last().unwrap());
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn loss_decreases_on_lorenz_data() {
    let traj = attractorlab::dynsys::integrate(
        State::new(1.0, 1.0, 1.0),
        &Default::default(),
        0.01,
        1999,
        1000,
    )
    .unwrap();
    let ds = Dataset::new(vec![traj], Strategy::Short, 0).unwrap();
    let cfg = TrainConfig {
        arch: Architecture::new(vec![8]).unwrap(),
        epochs: 10,
        lr0: 1e-2,
        lr_schedule: LrSchedule::Constant,
        memory_init: MemoryInit::zero(),
        ..TrainConfig::default()
    };
    let tm = train(&ds, &cfg).unwrap();
    let h = &tm.history.loss;
    assert!(h[h.len() - 1] < 0.2 * h[0], "{h:?}");
}

#[derive(Default)]
struct Recorder {
    starts: Vec<(usize, usize, MemoryState)>,
    windows: Vec<(usize, usize, usize, MemoryState)>,
}

impl attractorlab::training::TrainObserver for Recorder {
    fn on_chunk_start(&mut self, epoch: usize, chunk: usize, m0: &MemoryState) {
        self.starts.push((epoch, chunk, m0.clone()));
    }
    fn on_window(&mut self, epoch: usize, chunk: usize, start: usize, m: &MemoryState) {
        self.windows.push((epoch, chunk, start, m.clone()));
    }
}

fn record(mi: MemoryInit) -> Recorder {
    let chunks: Vec<_> = (0..4).map(|i| random_chunk(i, 35)).collect();
    let cfg = TrainConfig {
        arch: Architecture::new(vec![3]).unwrap(),
        epochs: 2,
        tbptt_window: 10,
        memory_init: mi,
        ..TrainConfig::default()
    };
    let mut rec = Recorder::default();
    fit(&chunks, &cfg, &mut rec).unwrap();
    rec
}

#[test]
fn memory_resets_at_every_chunk_start() {
    for mi in [MemoryInit::zero(), MemoryInit::gaussian(5)] {
        let rec = record(mi);
        assert_eq!(rec.starts.len(), 8);
        assert_eq!(rec.windows.len(), 8 * 4);
        for (epoch, chunk, start, m) in &rec.windows {
            let m0 = &rec.starts.iter().find(|s| s.0 == *epoch && s.1 == *chunk).unwrap().2;
            if *start == 0 {
                assert_eq!(m, m0, "chunk {chunk} must start from its own initial memory");
            } else {
                assert_ne!(m, m0, "memory is carried across windows");
            }
        }
    }
}

#[test]
fn memory_regimes_are_distinguishable() {
    let zero = record(MemoryInit::zero());
    assert!(zero.starts.iter().all(|s| s.2.is_zero()));
    let gauss = record(MemoryInit::gaussian(5));
    for (i, a) in gauss.starts.iter().enumerate() {
        assert!(!a.2.is_zero());
        for b in &gauss.starts[i + 1..] {
            assert_ne!(a.2, b.2, "draws for (epoch {}, chunk {}) and (epoch {}, chunk {})", a.0, a.1, b.0, b.1);
        }
    }
}
