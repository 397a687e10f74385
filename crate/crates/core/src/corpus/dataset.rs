//! Manifest-driven dataset generation and loading.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mix_at_snr, synth_noise, synth_speech, MixSpec, NoiseKind, DEFAULT_SAMPLE_RATE, PEAK_HEADROOM};
use crate::error::{Error, Result};
use crate::signal::{quantize_sample, read_wav, write_wav, Waveform, PCM_SCALE};

/// File name of the manifest copy stored next to a generated dataset.
pub const DATASET_INDEX: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub split: String,
    pub speech_seed: u64,
    pub noise_kind: NoiseKind,
    pub noise_seed: u64,
    pub snr_db: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub leading_pause_s: f64,
}

impl DatasetEntry {
    pub fn mix_spec(&self) -> MixSpec {
        MixSpec {
            snr_db: self.snr_db,
            noise_kind: self.noise_kind,
            seed: self.noise_seed,
            speech_seed: self.speech_seed,
            duration_s: self.duration_s,
            leading_pause_s: self.leading_pause_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sample_rate: u32,
    #[serde(rename = "utterance", default)]
    pub utterances: Vec<DatasetEntry>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Manifest {
    /// Noise kinds used for the train and eval splits of [`Manifest::desk_default`].
    pub const TRAIN_NOISE_KINDS: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::MultitoneBabble];
    /// Noise kinds held out for the test split of [`Manifest::desk_default`].
    pub const TEST_NOISE_KINDS: [NoiseKind; 1] = [NoiseKind::Modulated];

    /// 60 train, 20 eval and 20 test utterances of 2 s speech after a 0.25 s
    /// pause at 16 kHz. Train and eval SNRs cycle through -5..15 dB in 5 dB
    /// steps; test SNRs through -5..10 dB and use noise kinds absent from
    /// training.
    pub fn desk_default() -> Self {
        let mut utterances = Vec::new();
        let mut push = |split: &str, count: usize, snrs: &[f64], kinds: &[NoiseKind], base: u64| {
            for i in 0..count {
                let seed = base + i as u64;
                utterances.push(DatasetEntry {
                    id: format!("{split}_{i:03}"),
                    split: split.to_string(),
                    speech_seed: seed,
                    noise_kind: kinds[(i / snrs.len()) % kinds.len()],
                    noise_seed: seed + 50_000,
                    snr_db: snrs[i % snrs.len()],
                    duration_s: 2.0,
                    leading_pause_s: 0.25,
                });
            }
        };
        let train_snrs = [-5.0, 0.0, 5.0, 10.0, 15.0];
        push("train", 60, &train_snrs, &Self::TRAIN_NOISE_KINDS, 1_000);
        push("eval", 20, &train_snrs, &Self::TRAIN_NOISE_KINDS, 2_000);
        push("test", 20, &[-5.0, 0.0, 5.0, 10.0], &Self::TEST_NOISE_KINDS, 3_000);
        Manifest {
            sample_rate: DEFAULT_SAMPLE_RATE,
            utterances,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate < 1000 {
            return Err(Error::invalid(format!("sample rate {} too low", self.sample_rate)));
        }
        if self.utterances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for entry in &self.utterances {
            if !valid_name(&entry.id) || !valid_name(&entry.split) {
                return Err(Error::invalid(format!(
                    "ids and split names may only use [A-Za-z0-9_-]: `{}` / `{}`",
                    entry.id, entry.split
                )));
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::DuplicateId(entry.id.clone()));
            }
            entry.mix_spec().validate()?;
        }
        Ok(())
    }

    pub fn split<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a DatasetEntry> + 'a {
        self.utterances.iter().filter(move |e| e.split == name)
    }

    pub fn noise_kinds(&self, split: &str) -> HashSet<NoiseKind> {
        self.split(split).map(|e| e.noise_kind).collect()
    }
}

/// One clean/noise/noisy triple. All three are on the 16-bit grid and
/// `noisy` equals `clean + noise` sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub split: String,
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
    pub clean: Waveform,
    pub noise: Waveform,
    pub noisy: Waveform,
}

/// Synthesizes one utterance in memory. The result is identical to what
/// [`build_dataset`] writes and [`load_dataset`] reads back.
pub fn generate_utterance(entry: &DatasetEntry, sample_rate: u32) -> Result<Utterance> {
    entry.mix_spec().validate()?;
    let speech = synth_speech(entry.speech_seed, entry.duration_s, sample_rate)?;
    let pause = (entry.leading_pause_s * sample_rate as f64).round() as usize;
    let mut padded = vec![0.0; pause];
    padded.extend_from_slice(speech.samples());
    let clean = Waveform::new(padded, sample_rate)?;
    let noise_len_s = (clean.len() + 1) as f64 / sample_rate as f64;
    let noise = synth_noise(entry.noise_kind, entry.noise_seed, noise_len_s, sample_rate)?;
    let mix = mix_at_snr(&clean, &noise, entry.snr_db)?;

    let peak = mix
        .noisy
        .samples()
        .iter()
        .chain(clean.samples())
        .chain(mix.scaled_noise.samples())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > PEAK_HEADROOM { PEAK_HEADROOM / peak } else { 1.0 };

    let clean_q: Vec<i16> = clean.samples().iter().map(|v| quantize_sample(v * scale)).collect();
    let noise_q: Vec<i16> = mix
        .scaled_noise
        .samples()
        .iter()
        .map(|v| quantize_sample(v * scale))
        .collect();
    let to_wave = |codes: Vec<i32>| Waveform::new(codes.into_iter().map(|c| c as f64 / PCM_SCALE).collect(), sample_rate);
    let noisy_codes: Vec<i32> = clean_q.iter().zip(&noise_q).map(|(&s, &d)| s as i32 + d as i32).collect();
    if noisy_codes.iter().any(|&c| c < i16::MIN as i32 || c > i16::MAX as i32) {
        return Err(Error::DegenerateSignal(format!("mixture `{}` clips", entry.id)));
    }
    Ok(Utterance {
        id: entry.id.clone(),
        split: entry.split.clone(),
        snr_db: entry.snr_db,
        noise_kind: entry.noise_kind,
        clean: to_wave(clean_q.into_iter().map(i32::from).collect())?,
        noise: to_wave(noise_q.into_iter().map(i32::from).collect())?,
        noisy: to_wave(noisy_codes)?,
    })
}

fn utterance_path(root: &Path, split: &str, id: &str, part: &str) -> std::path::PathBuf {
    root.join(split).join(format!("{id}.{part}.wav"))
}

/// Writes `<split>/<id>.{clean,noise,noisy}.wav` for every entry plus a copy of
/// the manifest under `out_dir`. Returns the number of utterances written.
pub fn build_dataset(manifest: &Manifest, out_dir: impl AsRef<Path>) -> Result<usize> {
    manifest.validate()?;
    let root = out_dir.as_ref();
    for entry in &manifest.utterances {
        let dir = root.join(&entry.split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let utt = generate_utterance(entry, manifest.sample_rate)?;
        for (part, wave) in [("clean", &utt.clean), ("noise", &utt.noise), ("noisy", &utt.noisy)] {
            write_wav(utterance_path(root, &entry.split, &entry.id, part), wave)?;
        }
    }
    let index = root.join(DATASET_INDEX);
    std::fs::write(&index, manifest.to_toml_string()?).map_err(|e| Error::io(&index, e))?;
    Ok(manifest.utterances.len())
}

/// Loads a dataset written by [`build_dataset`], optionally restricted to one
/// split.
pub fn load_dataset(dir: impl AsRef<Path>, split: Option<&str>) -> Result<Vec<Utterance>> {
    let root = dir.as_ref();
    let manifest = Manifest::from_path(root.join(DATASET_INDEX))?;
    let mut out = Vec::new();
    for entry in manifest
        .utterances
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
    {
        let read = |part| read_wav(utterance_path(root, &entry.split, &entry.id, part));
        let (clean, noise, noisy) = (read("clean")?, read("noise")?, read("noisy")?);
        for wave in [&noise, &noisy] {
            if wave.len() != clean.len() {
                return Err(Error::LengthMismatch {
                    expected: clean.len(),
                    actual: wave.len(),
                });
            }
        }
        out.push(Utterance {
            id: entry.id.clone(),
            split: entry.split.clone(),
            snr_db: entry.snr_db,
            noise_kind: entry.noise_kind,
            clean,
            noise,
            noisy,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
