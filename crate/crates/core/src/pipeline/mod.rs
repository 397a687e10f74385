//! End-to-end workflows: enhancement, dataset evaluation, training runs,
//! parameter sweeps and CSV reports.

mod config;

use std::path::Path;

use serde::Serialize;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::estimators::{a_priori_snr, parametric_gain, wiener_gain, GainParams, DEFAULT_SNR_FLOOR};
use crate::losses::{LossKind, LossParams, Supervision};
use crate::metrics::{noise_attenuation, sdr, si_sdr_metric, speech_attenuation};
use crate::model::{train_with_progress, Checkpoint, MaskNet, MaskNetConfig, TrainConfig};
use crate::oracle::CheckRow;
pub use config::{LossSection, ModelSection, RunConfig, StftSection, SweepSection, TrainSection};

use crate::signal::{apply_mask, istft, stft, ComplexSpectrogram, GainMask, StftConfig, Waveform};

/// How the gain mask is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum EnhanceMode {
    /// Trained network; uses the checkpoint's analysis settings.
    Model(Box<Checkpoint>),
    /// Oracle Wiener-type gain `ξ/(ξ+μ)`.
    Wiener { mu: f64 },
    /// Oracle parametric gain.
    Parametric(GainParams),
    /// Mask ≡ 1.
    Identity,
}

impl EnhanceMode {
    pub fn needs_oracle(&self) -> bool {
        matches!(self, EnhanceMode::Wiener { .. } | EnhanceMode::Parametric(_))
    }

    /// Analysis settings used by this mode; `fallback` unless a checkpoint
    /// dictates otherwise.
    pub fn stft_config(&self, fallback: &StftConfig) -> StftConfig {
        match self {
            EnhanceMode::Model(ck) => ck.stft,
            _ => *fallback,
        }
    }

    pub fn label(&self) -> String {
        match self {
            EnhanceMode::Model(_) => "model".into(),
            EnhanceMode::Wiener { mu } => format!("wiener(mu={mu})"),
            EnhanceMode::Parametric(p) => {
                format!("parametric(mu={},gamma={},alpha={})", p.mu(), p.gamma(), p.alpha())
            }
            EnhanceMode::Identity => "identity".into(),
        }
    }
}

/// Oracle clean and noise components of a noisy input.
#[derive(Debug, Clone, Copy)]
pub struct Oracle<'a> {
    pub clean: &'a Waveform,
    pub noise: &'a Waveform,
}

/// Mask for `noisy`; oracle modes analyze the companion signals with the
/// same settings.
pub fn estimate_mask(mode: &EnhanceMode, noisy: &ComplexSpectrogram, oracle: Option<Oracle<'_>>) -> Result<GainMask> {
    let snr = || -> Result<_> {
        let oracle = oracle.ok_or_else(|| {
            Error::invalid(format!("mode {} needs oracle clean and noise signals", mode.label()))
        })?;
        let config = noisy.config();
        let clean = stft(oracle.clean, config)?;
        let noise = stft(oracle.noise, config)?;
        for spec in [&clean, &noise] {
            if spec.dim() != noisy.dim() {
                return Err(Error::ShapeMismatch {
                    expected: noisy.dim(),
                    actual: spec.dim(),
                });
            }
        }
        a_priori_snr(&clean.magnitude(), &noise.magnitude(), DEFAULT_SNR_FLOOR)
    };
    match mode {
        EnhanceMode::Model(ck) => ck.net.predict(noisy),
        EnhanceMode::Wiener { mu } => wiener_gain(&snr()?, *mu),
        EnhanceMode::Parametric(params) => Ok(parametric_gain(&snr()?, params)),
        EnhanceMode::Identity => GainMask::constant(noisy.dim(), 1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    /// Same length as the input.
    pub wave: Waveform,
    pub mask: GainMask,
}

/// Masks the noisy spectrogram and resynthesizes a waveform of the input
/// length.
pub fn enhance(
    noisy: &Waveform,
    mode: &EnhanceMode,
    oracle: Option<Oracle<'_>>,
    fallback: &StftConfig,
) -> Result<Enhanced> {
    let config = mode.stft_config(fallback);
    let spec = stft(noisy, &config)?;
    let mask = estimate_mask(mode, &spec, oracle)?;
    let wave = istft(&apply_mask(&spec, &mask)?, noisy.sample_rate())?.truncated(noisy.len());
    Ok(Enhanced { wave, mask })
}

/// Per-utterance evaluation; `input_*` columns score the unprocessed mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceReport {
    pub id: String,
    pub snr_db: f64,
    pub noise_kind: String,
    pub na_db: f64,
    pub sa_db: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub input_sdr_db: f64,
    pub input_si_sdr_db: f64,
}

impl UtteranceReport {
    pub fn sdr_improvement_db(&self) -> f64 {
        self.sdr_db - self.input_sdr_db
    }
}

/// Shadow-filtered NA and SA plus SDR and SI-SDR of the enhanced output.
pub fn evaluate_utterance(utt: &Utterance, mode: &EnhanceMode, fallback: &StftConfig) -> Result<UtteranceReport> {
    let config = mode.stft_config(fallback);
    let oracle = Oracle {
        clean: &utt.clean,
        noise: &utt.noise,
    };
    let enhanced = enhance(&utt.noisy, mode, Some(oracle), &config)?;
    let clean_spec = stft(&utt.clean, &config)?;
    let noise_spec = stft(&utt.noise, &config)?;
    Ok(UtteranceReport {
        id: utt.id.clone(),
        snr_db: utt.snr_db,
        noise_kind: utt.noise_kind.to_string(),
        na_db: noise_attenuation(&noise_spec, &enhanced.mask)?,
        sa_db: speech_attenuation(&clean_spec, &enhanced.mask)?,
        sdr_db: sdr(&utt.clean, &enhanced.wave)?,
        si_sdr_db: si_sdr_metric(&utt.clean, &enhanced.wave)?,
        input_sdr_db: sdr(&utt.clean, &utt.noisy)?,
        input_si_sdr_db: si_sdr_metric(&utt.clean, &utt.noisy)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<UtteranceReport>,
}

impl EvalReport {
    /// Column-wise mean over utterances, labelled `mean`.
    pub fn aggregate(&self) -> UtteranceReport {
        let n = self.rows.len().max(1) as f64;
        let mean = |f: fn(&UtteranceReport) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        UtteranceReport {
            id: "mean".into(),
            snr_db: mean(|r| r.snr_db),
            noise_kind: "all".into(),
            na_db: mean(|r| r.na_db),
            sa_db: mean(|r| r.sa_db),
            sdr_db: mean(|r| r.sdr_db),
            si_sdr_db: mean(|r| r.si_sdr_db),
            input_sdr_db: mean(|r| r.input_sdr_db),
            input_si_sdr_db: mean(|r| r.input_si_sdr_db),
        }
    }

    /// Fraction of utterances whose SDR exceeds the input SDR.
    pub fn improved_fraction(&self) -> f64 {
        let better = self.rows.iter().filter(|r| r.sdr_improvement_db() > 0.0).count();
        better as f64 / self.rows.len().max(1) as f64
    }

    /// Header `id,snr_db,noise_kind,na_db,sa_db,sdr_db,si_sdr_db,input_sdr_db,input_si_sdr_db`,
    /// one row per utterance, then the aggregate row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = self.rows.clone();
        rows.push(self.aggregate());
        write_csv_rows(path, &rows)
    }
}

pub fn evaluate_dataset(utts: &[Utterance], mode: &EnhanceMode, fallback: &StftConfig) -> Result<EvalReport> {
    if utts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = utts
        .iter()
        .map(|u| evaluate_utterance(u, mode, fallback))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

pub fn supervision_set(utts: &[Utterance], config: &StftConfig) -> Result<Vec<Supervision>> {
    utts.iter()
        .map(|u| Supervision::from_components(&u.clean, &u.noise, config))
        .collect()
}

/// Everything needed to train one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub stft: StftConfig,
    pub net: MaskNetConfig,
    /// Seed of the weight initialization.
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Experiment {
    /// Default network for `stft`, default training settings.
    pub fn with_defaults(stft: StftConfig) -> Self {
        Self {
            stft,
            net: MaskNetConfig::with_defaults(stft.num_bins()),
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

/// Trains a fresh network. Returns the checkpoint and per-epoch losses.
pub fn run_training(
    data: &[Supervision],
    experiment: &Experiment,
    progress: impl FnMut(usize, f64),
) -> Result<(Checkpoint, Vec<f64>)> {
    if experiment.net.num_bins != experiment.stft.num_bins() {
        return Err(Error::invalid(format!(
            "network expects {} bins, analysis gives {}",
            experiment.net.num_bins,
            experiment.stft.num_bins()
        )));
    }
    let mut net = MaskNet::new(experiment.net.clone(), experiment.init_seed)?;
    let history = train_with_progress(&mut net, data, &experiment.train, progress)?;
    Ok((
        Checkpoint {
            net,
            stft: experiment.stft,
        },
        history,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
}

/// Header `epoch,loss`, epochs counted from 1.
pub fn write_loss_log(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let rows: Vec<EpochRow> = history
        .iter()
        .enumerate()
        .map(|(i, &loss)| EpochRow { epoch: i + 1, loss })
        .collect();
    write_csv_rows(path, &rows)
}

/// Generalized-loss settings to sweep; every combination is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub mus: Vec<f64>,
    pub beta0_dbs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
    pub beta0_db: f64,
    pub na_db: f64,
    pub sa_db: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub final_loss: f64,
}

/// Trains one generalized-loss model per grid point, all other settings
/// taken from `base`, and scores each on `test`. Rows follow the grid order
/// with β₀ varying fastest.
pub fn run_sweep(
    train: &[Supervision],
    test: &[Utterance],
    base: &Experiment,
    grid: &SweepGrid,
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &gamma in &grid.gammas {
        for &alpha in &grid.alphas {
            for &mu in &grid.mus {
                for &beta0_db in &grid.beta0_dbs {
                    let mut experiment = base.clone();
                    experiment.train.loss =
                        LossKind::Generalized(LossParams::with_beta0_db(gamma, alpha, mu, beta0_db)?);
                    let (checkpoint, history) = run_training(train, &experiment, |_, _| {})?;
                    let mode = EnhanceMode::Model(Box::new(checkpoint));
                    let report = evaluate_dataset(test, &mode, &base.stft)?.aggregate();
                    let row = SweepRow {
                        gamma,
                        alpha,
                        mu,
                        beta0_db,
                        na_db: report.na_db,
                        sa_db: report.sa_db,
                        sdr_db: report.sdr_db,
                        si_sdr_db: report.si_sdr_db,
                        final_loss: history.last().copied().unwrap_or(f64::NAN),
                    };
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Header `gamma,alpha,mu,beta0_db,na_db,sa_db,sdr_db,si_sdr_db,final_loss`.
pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    write_csv_rows(path, rows)
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    check: &'a str,
    params: &'a str,
    expected: f64,
    observed: f64,
    tolerance: f64,
    status: &'a str,
    note: &'a str,
}

/// Header `check,params,expected,observed,tolerance,status,note`.
pub fn write_verify_report(path: impl AsRef<Path>, rows: &[CheckRow]) -> Result<()> {
    let rows: Vec<VerifyRow<'_>> = rows
        .iter()
        .map(|r| VerifyRow {
            check: &r.check,
            params: &r.params,
            expected: r.expected,
            observed: r.observed,
            tolerance: r.tolerance,
            status: r.status.as_str(),
            note: &r.note,
        })
        .collect();
    write_csv_rows(path, &rows)
}

fn write_csv_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let wrap = |e: csv::Error| Error::io(path, e.into());
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    for row in rows {
        writer.serialize(row).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
