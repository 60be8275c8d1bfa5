use deepritz::driver::studies::decade_ratios;
use deepritz::driver::{lambda_sweep, train, LossKind, Problem, RunConfig, StopReason};
use deepritz::network::{Activation, ArchKind};
use proptest::prelude::*;

fn problem() -> impl Strategy<Value = Problem> {
    prop::sample::select(Problem::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        p in problem(),
        width in 1usize..40,
        blocks in 1usize..5,
        lambda in 1.0f64..1e4,
        seed in any::<u64>(),
        epochs in 1usize..100_000,
        every in 1usize..1000,
        stop in prop::option::of(1e-6f64..1.0),
        lr in 1e-5f64..1e-1,
    ) {
        let mut cfg = RunConfig::new(p);
        cfg.arch.width = width;
        cfg.arch.depth = 2 * blocks;
        cfg.penalty.lambda = lambda;
        cfg.seed = seed;
        cfg.epochs_max = epochs;
        cfg.estimate_every = every;
        cfg.stop_tol = stop;
        cfg.adam.lr = lr;
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

fn tiny(problem: Problem) -> RunConfig {
    let mut cfg = RunConfig::new(problem);
    cfg.arch.kind = ArchKind::ResNet;
    cfg.arch.width = 5;
    cfg.arch.depth = 2;
    cfg.arch.activation = Activation::ReluCubed;
    cfg.n_in = 50;
    cfg.n_bnd = 20;
    cfg.epochs_max = 25;
    cfg.estimate_every = 5;
    cfg.adjoint_level = 1;
    cfg.j_ref = Some(0.1);
    cfg
}

#[test]
fn identical_configs_give_identical_logs() {
    let cfg = tiny(Problem::LaplaceSquareManufactured);
    let csv = |cfg: &RunConfig| {
        let mut buf = Vec::new();
        train(cfg).unwrap().write_log(&mut buf).unwrap();
        String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |p| p.0).to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(csv(&cfg), csv(&cfg));
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(csv(&cfg), csv(&other));
}

#[test]
fn log_epochs_strictly_increase() {
    let mut cfg = tiny(Problem::LaplaceLShape);
    cfg.loss_kind = LossKind::StrongForm;
    cfg.resample_every = Some(7);
    let log = train(&cfg).unwrap();
    let epochs: Vec<usize> = log.rows.iter().map(|r| r.report.epoch).collect();
    assert_eq!(epochs, vec![0, 5, 10, 15, 20]);
    assert_eq!(log.stop_reason, StopReason::MaxEpochs);
    assert_eq!(log.final_report.epoch, 25);
}

#[test]
fn loose_tolerance_stops_at_first_checkpoint() {
    let mut cfg = tiny(Problem::StokesDisc);
    cfg.arch.output_dim = 2;
    cfg.stop_tol = Some(1e9);
    let log = train(&cfg).unwrap();
    assert_eq!(log.stop_reason, StopReason::EstimatorBelowTol);
    assert_eq!(log.rows.len(), 1);
}

#[test]
fn penalty_sweep_limits() {
    let rows = lambda_sweep(Problem::LaplaceSquareManufactured, &[1e12], 4).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].h1_distance < 1e-6, "{}", rows[0].h1_distance);
    let rows = lambda_sweep(Problem::LaplaceLShape, &[1.0, 10.0, 100.0, 1000.0], 4).unwrap();
    assert!(rows.windows(2).all(|w| w[1].h1_distance < w[0].h1_distance));
    assert!(decade_ratios(&rows)[1..].iter().all(|&r| r <= 0.3));
}
