//! 16-bit PCM mono WAV input/output.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Full-scale value of a 16-bit sample.
pub const PCM_SCALE: f64 = 32768.0;

/// Clamps to `[-1, 1]` and rounds to the nearest 16-bit code.
pub fn quantize_sample(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * PCM_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() == 0 {
        return Err(Error::WavFormat("empty file".into()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Multichannel {
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} {}-bit samples (need 16-bit integer PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in wave.samples() {
        writer
            .write_sample(quantize_sample(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::WavFormat("truncated file".into())
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::WavFormat(msg.into()),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported wav feature".into()),
        hound::Error::TooWide => Error::UnsupportedFormat("sample width too large".into()),
        hound::Error::InvalidSampleFormat => Error::UnsupportedFormat("sample format".into()),
        other => Error::WavFormat(other.to_string()),
    }
}
