use dcsep::dataset::{fit_mixture_normalizer, Dataset};
use dcsep::dsp::{synth_corpus, SynthConfig, FREQ_BINS};
use dcsep::model::{resolve, Direction, HyperParams, ModelSpec};
use dcsep::trainer::{train, Stage, TrainConfig};

fn data(n_train: usize) -> (Dataset, Dataset) {
    let cfg = SynthConfig {
        n_train,
        n_val: 3,
        n_test: 0,
        min_duration_s: 0.4,
        max_duration_s: 0.6,
        source_dir: None,
    };
    let c = synth_corpus(&cfg, 31).unwrap();
    let norm = fit_mixture_normalizer(&c.train).unwrap();
    (Dataset::prepare(&c.train, &norm).unwrap(), Dataset::prepare(&c.val, &norm).unwrap())
}

fn small_spec() -> ModelSpec {
    let hp = HyperParams {
        lstm_layers: 1,
        lstm_first_cells: 12,
        lstm_direction: Direction::Bi,
        ..HyperParams::default()
    };
    resolve(&hp, FREQ_BINS, 6, 2).unwrap()
}

#[test]
fn stage_boundaries_follow_the_schedule() {
    let (tr, va) = data(4);
    let cfg = TrainConfig {
        stages: vec![
            Stage { segment_frames: Some(8), epochs: 2 },
            Stage { segment_frames: Some(16), epochs: 1 },
            Stage { segment_frames: None, epochs: 3 },
        ],
        batch_size: 2,
        patience: 100,
        abort_threshold: 100.0,
        ..TrainConfig::default()
    };
    let (_, r) = train(&small_spec(), &tr, &va, &cfg).unwrap();
    assert_eq!(r.epoch_stage, [0, 0, 1, 2, 2, 2]);
    assert_eq!(r.steps, 6 * 2);
    assert!(!r.aborted && !r.stopped_early);
    let min = r.val_loss.iter().copied().fold(r.initial_val_loss, f64::min);
    assert_eq!(r.best_val_loss, min);
    assert_eq!(r.reported_loss, min);
}

#[test]
fn two_hundred_steps_reduce_training_loss() {
    let (tr, va) = data(10);
    let cfg = TrainConfig {
        stages: vec![Stage { segment_frames: None, epochs: 40 }],
        batch_size: 2,
        lr: 3e-3,
        patience: 1000,
        abort_threshold: 100.0,
        seed: 4,
        ..TrainConfig::default()
    };
    let (_, r) = train(&small_spec(), &tr, &va, &cfg).unwrap();
    assert_eq!(r.steps, 200);
    let (first, last) = (r.train_loss[0], *r.train_loss.last().unwrap());
    assert!(last < first, "training loss {first} -> {last}");
}

#[test]
fn aborted_runs_report_the_threshold_exactly() {
    let (tr, va) = data(3);
    for threshold in [1e-6, 1e-3, 0.01] {
        let cfg = TrainConfig {
            stages: vec![Stage { segment_frames: Some(10), epochs: 1 }, Stage { segment_frames: None, epochs: 2 }],
            batch_size: 2,
            lr: 0.0,
            abort_threshold: threshold,
            ..TrainConfig::default()
        };
        let (_, r) = train(&small_spec(), &tr, &va, &cfg).unwrap();
        assert!(r.aborted);
        assert_eq!(r.reported_loss, threshold);
        assert!(r.epoch_stage.iter().all(|&s| s == 0));
    }
}
