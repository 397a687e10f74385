//! Dataset build, training, checkpointing and evaluation through the public API.

use resnoise::corpus::{build_dataset, load_dataset, DatasetEntry, Manifest, NoiseKind};
use resnoise::losses::{LossKind, LossParams};
use resnoise::model::{load_checkpoint, save_checkpoint, MaskNetConfig};
use resnoise::pipeline::{enhance, evaluate_dataset, run_training, supervision_set, EnhanceMode, Experiment};
use resnoise::signal::StftConfig;

fn manifest() -> Manifest {
    let entry = |id: &str, split: &str, seed: u64, kind: NoiseKind, snr_db: f64| DatasetEntry {
        id: id.into(),
        split: split.into(),
        speech_seed: seed,
        noise_kind: kind,
        noise_seed: seed + 100,
        snr_db,
        duration_s: 1.0,
        leading_pause_s: 0.25,
    };
    Manifest {
        sample_rate: 8000,
        utterances: vec![
            entry("a", "train", 1, NoiseKind::White, 0.0),
            entry("b", "train", 2, NoiseKind::Pink, 5.0),
            entry("c", "train", 3, NoiseKind::White, 10.0),
            entry("d", "test", 4, NoiseKind::Pink, 0.0),
        ],
    }
}

fn experiment(loss: LossKind, epochs: usize) -> Experiment {
    let stft = StftConfig::for_sample_rate(8000);
    let mut experiment = Experiment::with_defaults(stft);
    experiment.net = MaskNetConfig {
        context: 3,
        hidden_sizes: vec![32],
        ..MaskNetConfig::with_defaults(stft.num_bins())
    };
    experiment.train.epochs = epochs;
    experiment.train.batch_size = 1;
    experiment.train.learning_rate = 3e-3;
    experiment.train.loss = loss;
    experiment
}

#[test]
fn trained_checkpoint_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&manifest(), dir.path()).unwrap();
    let train = load_dataset(dir.path(), Some("train")).unwrap();
    let test = load_dataset(dir.path(), Some("test")).unwrap();
    assert_eq!((train.len(), test.len()), (3, 1));

    let exp = experiment(LossKind::Generalized(LossParams::with_beta0_db(2.0, 1.0, 1.0, -20.0).unwrap()), 20);
    let data = supervision_set(&train, &exp.stft).unwrap();
    let (checkpoint, history) = run_training(&data, &exp, |_, _| {}).unwrap();
    assert_eq!(history.len(), 20);
    assert!(history[19] < history[0]);

    let path = dir.path().join("net.bin");
    save_checkpoint(&path, &checkpoint).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, checkpoint);

    let in_memory = evaluate_dataset(&test, &EnhanceMode::Model(Box::new(checkpoint)), &exp.stft).unwrap();
    let mode = EnhanceMode::Model(Box::new(loaded));
    let from_disk = evaluate_dataset(&test, &mode, &exp.stft).unwrap();
    assert_eq!(in_memory, from_disk);
    assert!(from_disk.rows[0].na_db > 0.0);

    let out = enhance(&test[0].noisy, &mode, None, &exp.stft).unwrap();
    assert_eq!(out.wave.len(), test[0].noisy.len());
    assert!(out.mask.values().iter().all(|m| (0.0..=1.0).contains(m)));
}

#[test]
fn without_noise_weight_the_mask_opens() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&manifest(), dir.path()).unwrap();
    let train = load_dataset(dir.path(), Some("train")).unwrap();
    let exp = experiment(LossKind::Generalized(LossParams::new(2.0, 1.0, 0.0, 0.0).unwrap()), 30);
    let data = supervision_set(&train, &exp.stft).unwrap();
    let (checkpoint, _) = run_training(&data, &exp, |_, _| {}).unwrap();
    let out = enhance(&train[0].noisy, &EnhanceMode::Model(Box::new(checkpoint)), None, &exp.stft).unwrap();
    let mean = out.mask.values().mean().unwrap();
    assert!(mean > 0.9, "mean mask {mean}");
}
