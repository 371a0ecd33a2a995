//! Mono WAV input/output (PCM-16 or 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    /// Lossless for enrolled buffers, which are held as `f32`.
    #[default]
    Float32,
    Pcm16,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidArgument(format!("expected mono audio, got {} channels", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<Vec<_>, _>>()?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<Vec<_>, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::InvalidArgument(format!("unsupported WAV encoding {fmt:?}/{bits}")));
        }
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Write `audio` clamped to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: match format {
            WavFormat::Float32 => 32,
            WavFormat::Pcm16 => 16,
        },
        sample_format: match format {
            WavFormat::Float32 => SampleFormat::Float,
            WavFormat::Pcm16 => SampleFormat::Int,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        let s = s.clamp(-1.0, 1.0);
        match format {
            WavFormat::Float32 => writer.write_sample(s)?,
            WavFormat::Pcm16 => writer.write_sample((s as f64 * 32767.0).round() as i16)?,
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_and_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = AudioBuffer::new(vec![0.1, -0.25, 1.5, -2.0, 0.123_456_79], 16_000);
        write_wav(&path, &audio, WavFormat::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples, vec![0.1, -0.25, 1.0, -1.0, 0.123_456_79]);
    }

    #[test]
    fn pcm16_round_trip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let audio = AudioBuffer::new(vec![0.5, -0.5, 0.001], 16_000);
        write_wav(&path, &audio, WavFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32_000.0);
        }
    }
}
