use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resnoise::corpus::{load_dataset, Manifest};
use resnoise::metrics::noise_attenuation;
use resnoise::model::{load_checkpoint, MaskNet};
use resnoise::pipeline::{enhance, EnhanceMode, Oracle, RunConfig};
use resnoise::signal::{read_wav, stft, StftConfig};
use tempfile::TempDir;

fn resnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resnoise"))
        .args(args)
        .env_remove("RESNOISE_DATA")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Five 1 s utterances at 8 kHz: three for training, two for testing.
fn small_dataset(dir: &Path) -> PathBuf {
    let mut manifest = Manifest::desk_default();
    manifest.sample_rate = 8000;
    manifest
        .utterances
        .retain(|e| ["train_000", "train_007", "train_013", "test_000", "test_006"].contains(&e.id.as_str()));
    for e in manifest.utterances.iter_mut() {
        e.duration_s = 1.0;
    }
    let manifest_path = dir.join("small.toml");
    std::fs::write(&manifest_path, manifest.to_toml_string().unwrap()).unwrap();
    let data = dir.join("data");
    let out = resnoise(&["synth", "--manifest", s(&manifest_path), "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        "[model]\ncontext = 2\nhidden_sizes = [16]\n\n[stft]\nframe_len = 256\nhop = 128\nfft_len = 256\n\n{body}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn train(config: &Path, data: &Path, out: &Path) -> Output {
    resnoise(&["train", "--config", s(config), "--data", s(data), "--out", s(out)])
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&resnoise(&[])), 1);
    assert_eq!(code(&resnoise(&["frobnicate"])), 1);
    assert_eq!(code(&resnoise(&["--help"])), 0);
    assert_eq!(code(&resnoise(&["synth"])), 1, "missing --out");
}

#[test]
fn synth_default_manifest_is_complete_and_idempotent() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&resnoise(&["synth", "--out", s(&a)])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_resnoise"))
        .args(["synth"])
        .env("RESNOISE_DATA", &b)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let mut wavs = 0;
    for split in ["train", "eval", "test"] {
        for entry in std::fs::read_dir(a.join(split)).unwrap() {
            let path = entry.unwrap().path();
            let twin = b.join(split).join(path.file_name().unwrap());
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&twin).unwrap());
            wavs += 1;
        }
    }
    assert_eq!(wavs, 300);
    assert_eq!(load_dataset(&a, None).unwrap().len(), 100);
}

#[test]
fn synth_missing_manifest_fails() {
    let dir = TempDir::new().unwrap();
    let out = resnoise(&["synth", "--manifest", s(&dir.path().join("nope.toml")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn training_runs_and_reduces_loss() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let config = write_config(dir.path(), "gl.toml", "[train]\nepochs = 8\nlearning_rate = 3e-3\n");
    let run = dir.path().join("gl");
    let out = train(&config, &data, &run);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 8);
    assert!(losses[7] < losses[0], "{losses:?}");
    load_checkpoint(run.join("checkpoint.bin")).unwrap();
}

#[test]
fn residual_free_generalized_loss_matches_components_loss() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let gl = write_config(dir.path(), "gl.toml", "[loss]\nkind = \"gl\"\nbeta0_db = -inf\n[train]\nepochs = 3\nseed = 5\n");
    let cl = write_config(dir.path(), "cl.toml", "[loss]\nkind = \"cl\"\n[train]\nepochs = 3\nseed = 5\n");
    assert_eq!(code(&train(&gl, &data, &dir.path().join("gl"))), 0);
    assert_eq!(code(&train(&cl, &data, &dir.path().join("cl"))), 0);
    for file in ["loss.csv", "checkpoint.bin"] {
        assert_eq!(
            std::fs::read(dir.path().join("gl").join(file)).unwrap(),
            std::fs::read(dir.path().join("cl").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn zero_epochs_keeps_initialization() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let config = write_config(dir.path(), "zero.toml", "[train]\nepochs = 0\n");
    assert_eq!(code(&train(&config, &data, &dir.path().join("run"))), 0);
    let ck = load_checkpoint(dir.path().join("run/checkpoint.bin")).unwrap();
    let experiment = RunConfig::from_path(&config).unwrap().experiment(8000).unwrap();
    assert_eq!(ck.net, MaskNet::new(experiment.net, experiment.init_seed).unwrap());
}

#[test]
fn training_config_errors() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let bad = write_config(dir.path(), "bad.toml", "[loss]\nkind = \"l7\"\n");
    assert_eq!(code(&train(&bad, &data, &dir.path().join("x"))), 1);
    let good = write_config(dir.path(), "good.toml", "");
    assert_eq!(code(&train(&good, &dir.path().join("missing"), &dir.path().join("x"))), 2);
    assert_eq!(code(&train(&dir.path().join("none.toml"), &data, &dir.path().join("x"))), 2);
}

#[test]
fn enhance_modes() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let stem = data.join("test/test_000");
    let (noisy, clean, noise) = (
        stem.with_extension("noisy.wav"),
        stem.with_extension("clean.wav"),
        stem.with_extension("noise.wav"),
    );
    let out = dir.path().join("wiener.wav");
    let run = resnoise(&[
        "enhance", "--input", s(&noisy), "--output", s(&out), "--mode", "wiener", "--mu", "1",
        "--clean", s(&clean), "--noise", s(&noise),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let (noisy_w, clean_w, noise_w) = (read_wav(&noisy).unwrap(), read_wav(&clean).unwrap(), read_wav(&noise).unwrap());
    let config = StftConfig::for_sample_rate(8000);
    let oracle = Oracle {
        clean: &clean_w,
        noise: &noise_w,
    };
    let expected = enhance(&noisy_w, &EnhanceMode::Wiener { mu: 1.0 }, Some(oracle), &config).unwrap();
    let written = read_wav(&out).unwrap();
    for (a, b) in written.samples().iter().zip(expected.wave.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
    let na = noise_attenuation(&stft(&noise_w, &config).unwrap(), &expected.mask).unwrap();
    assert!(na > 0.0);

    let out = dir.path().join("param.wav");
    let run = resnoise(&[
        "enhance", "--input", s(&noisy), "--output", s(&out), "--mode", "parametric", "--mu", "0",
        "--clean", s(&clean), "--noise", s(&noise),
    ]);
    assert_eq!(code(&run), 0);
    let written = read_wav(&out).unwrap();
    let interior = config.interior(config.num_frames(noisy_w.len()));
    for i in interior.start..interior.end.min(noisy_w.len()) {
        assert_eq!(written.samples()[i], noisy_w.samples()[i]);
    }

    let missing = resnoise(&["enhance", "--input", s(&noisy), "--output", s(&out), "--mode", "wiener"]);
    assert_eq!(code(&missing), 1);
    let absent = resnoise(&[
        "enhance", "--input", s(&noisy), "--output", s(&out), "--mode", "wiener",
        "--clean", s(&dir.path().join("gone.wav")), "--noise", s(&noise),
    ]);
    assert_eq!(code(&absent), 2);
    let bad = resnoise(&["enhance", "--input", s(&noisy), "--output", s(&out), "--mode", "magic"]);
    assert_eq!(code(&bad), 1);
}

fn read_report(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eval_reports() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let report = dir.path().join("identity.csv");
    let out = resnoise(&["eval", "--data", s(&data), "--mode", "identity", "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_report(&report);
    assert_eq!(rows[0].join(","), "id,snr_db,noise_kind,na_db,sa_db,sdr_db,si_sdr_db,input_sdr_db,input_si_sdr_db");
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "mean");
    for row in &rows[1..] {
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    }

    let config = write_config(dir.path(), "gl.toml", "[train]\nepochs = 2\n");
    let run = dir.path().join("run");
    assert_eq!(code(&train(&config, &data, &run)), 0);
    let mode = format!("model:{}", s(&run.join("checkpoint.bin")));
    let report = dir.path().join("model.csv");
    let out = resnoise(&["eval", "--data", s(&data), "--mode", &mode, "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_report(&report).len(), 4);

    let missing = resnoise(&["eval", "--data", s(&dir.path().join("nothing")), "--report", s(&report)]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn eval_sweep_table() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let config = write_config(
        dir.path(),
        "sweep.toml",
        "[train]\nepochs = 1\n[sweep]\nmus = [1.0, 2.0]\nbeta0_dbs = [-10.0, -20.0]\n",
    );
    let report = dir.path().join("sweep.csv");
    let out = resnoise(&["eval", "--data", s(&data), "--sweep", s(&config), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_report(&report);
    assert_eq!(rows[0].join(","), "gamma,alpha,mu,beta0_db,na_db,sa_db,sdr_db,si_sdr_db,final_loss");
    assert_eq!(rows.len(), 5);
}

#[test]
fn verify_writes_report_and_surfaces_singular_gamma() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("verify.csv");
    let out = resnoise(&["verify", "--report", s(&report), "--samples", "200000", "--gamma", "1,3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_report(&report);
    assert_eq!(rows[0].join(","), "check,params,expected,observed,tolerance,status,note");
    assert!(rows.iter().any(|r| r.contains(&"skipped".to_string()) && r.join(",").contains("gamma=1")));
    assert!(!rows.iter().any(|r| r.contains(&"fail".to_string())));
    assert_eq!(code(&resnoise(&["verify", "--report", s(&report), "--grid", "10"])), 1);
}
