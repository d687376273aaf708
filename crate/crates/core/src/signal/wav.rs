use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Result, TsdError};

use super::Waveform;

/// Reads a PCM (integer) or 32-bit float WAV file. Multichannel audio is
/// downmixed by averaging channels.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(mono, spec.sample_rate).map_err(|e| match e {
        TsdError::InvalidArgument(msg) => {
            TsdError::InvalidArgument(format!("{}: {msg}", path.as_ref().display()))
        }
        other => other,
    })
}

/// Duration in seconds from the header alone.
pub fn wav_duration(path: impl AsRef<Path>) -> Result<f64> {
    let reader = WavReader::open(path.as_ref())?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

/// Writes mono 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for &s in w.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}
