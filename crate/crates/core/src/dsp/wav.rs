use std::path::Path;

use super::{DspError, Waveform, SAMPLE_RATE};

const I16_SCALE: f64 = 32768.0;

/// Reads a mono 16-bit PCM WAV file at 8 kHz.
pub fn read_wav(path: &Path) -> Result<Waveform, DspError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let bad = |reason: String| DspError::WavFormat {
        path: path.to_path_buf(),
        reason,
    };
    if spec.channels != 1 {
        return Err(bad(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(bad(format!("{} Hz, expected {SAMPLE_RATE} Hz", spec.sample_rate)));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(bad("expected 16-bit integer PCM".into()));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / I16_SCALE))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Waveform::new(samples))
}

/// Writes a waveform as mono 16-bit PCM, clipping to the i16 range.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &x in &w.samples {
        writer.write_sample(quantize_i16(x))?;
    }
    writer.finalize()?;
    Ok(())
}

pub(crate) fn quantize_i16(x: f64) -> i16 {
    (x * I16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Snaps a value onto the 16-bit grid so that it survives a WAV roundtrip.
pub(crate) fn snap_i16(x: f64) -> f64 {
    quantize_i16(x) as f64 / I16_SCALE
}
