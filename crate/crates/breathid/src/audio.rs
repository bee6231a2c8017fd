//! Loading, normalizing and framing of breath-sound recordings.
//!
//! Only 16-bit mono PCM WAV input is accepted; samples are mapped to
//! `[-1, 1]` by dividing by 32768 so that a written-then-reloaded file is
//! bit-exact when the source samples already sit on the 16-bit grid.

use std::path::Path;

use crate::error::{Error, Result};

/// A sampled audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Amplitudes, nominal range `[-1, 1]`.
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    /// Length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Read a RIFF/WAVE file containing 16-bit integer PCM, one channel.
///
/// Samples are divided by 32768; the sample rate comes from the header.
/// Missing files, non-PCM encodings and multi-channel files each get their
/// own error variant.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::NotWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannelCount {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::NonPcmEncoding {
            path: path.to_path_buf(),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f64 / 32768.0).map_err(|e| Error::NotWav {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Scale a signal so its mean squared amplitude is exactly 1.
///
/// The gain is `1 / sqrt(mean(x^2))`; applying the operation twice changes
/// nothing. An all-zero signal is rejected.
pub fn energy_normalize(w: &Waveform) -> Result<Waveform> {
    if w.samples.is_empty() {
        return Err(Error::InputTooShort { needed: 1, got: 0 });
    }
    let mean_sq: f64 =
        w.samples.iter().map(|x| x * x).sum::<f64>() / w.samples.len() as f64;
    if mean_sq == 0.0 {
        return Err(Error::SilentInput);
    }
    let gain = 1.0 / mean_sq.sqrt();
    Ok(Waveform {
        samples: w.samples.iter().map(|x| x * gain).collect(),
        sample_rate: w.sample_rate,
    })
}

/// Frame placement for a signal: start indices plus frame geometry.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    /// Start index of each frame, `round(t * hop_ms * rate / 1000)`.
    pub starts: Vec<usize>,
    /// Frame length in samples.
    pub frame_len: usize,
    /// Exact (unrounded) hop in samples.
    pub hop_samples: f64,
}

impl FrameLayout {
    /// Center sample index of frame `t`.
    pub fn center(&self, t: usize) -> usize {
        self.starts[t] + self.frame_len / 2
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Compute frame starts for a signal of `len` samples.
///
/// Frame count is `floor((len - frame_len) / hop_len) + 1`; start `t` is
/// `round(t * hop_ms * rate / 1000)`, so non-integer hops do not accumulate
/// rounding drift. The trailing frame is zero-padded by the consumer when a
/// rounded start pushes it past the end of the signal.
pub fn frame_layout(len: usize, rate: u32, frame_ms: f64, hop_ms: f64) -> Result<FrameLayout> {
    if !(hop_ms > 0.0 && hop_ms <= frame_ms) {
        return Err(Error::InvalidParameter(format!(
            "hop ({hop_ms} ms) must be positive and no longer than the frame ({frame_ms} ms)"
        )));
    }
    let frame_len = (frame_ms * rate as f64 / 1000.0).round() as usize;
    let hop_samples = hop_ms * rate as f64 / 1000.0;
    let hop_len = hop_samples.round() as usize;
    if frame_len == 0 || hop_len == 0 {
        return Err(Error::InvalidParameter(format!(
            "frame ({frame_ms} ms) and hop ({hop_ms} ms) must each span at least one sample"
        )));
    }
    if len < frame_len {
        return Err(Error::InputTooShort {
            needed: frame_len,
            got: len,
        });
    }
    let n_frames = (len - frame_len) / hop_len + 1;
    let starts = (0..n_frames)
        .map(|t| (t as f64 * hop_samples).round() as usize)
        .collect();
    Ok(FrameLayout {
        starts,
        frame_len,
        hop_samples,
    })
}

/// Cut a signal into fixed-length frames; the last frame is zero-padded if
/// its rounded start leaves it short of `frame_len` samples.
pub fn frame_signal(w: &Waveform, frame_ms: f64, hop_ms: f64) -> Result<Vec<Vec<f64>>> {
    let layout = frame_layout(w.samples.len(), w.sample_rate, frame_ms, hop_ms)?;
    let frames = layout
        .starts
        .iter()
        .map(|&start| {
            let mut frame = vec![0.0; layout.frame_len];
            let end = (start + layout.frame_len).min(w.samples.len());
            frame[..end - start].copy_from_slice(&w.samples[start..end]);
            frame
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wave(samples: Vec<f64>, rate: u32) -> Waveform {
        Waveform::new(samples, rate)
    }

    #[test]
    fn energy_normalize_constant_half_becomes_one() {
        let w = wave(vec![0.5; 64], 16000);
        let n = energy_normalize(&w).unwrap();
        for &s in &n.samples {
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_normalize_unit_signal_unchanged() {
        let w = wave(vec![1.0, -1.0, 1.0, -1.0], 16000);
        let n = energy_normalize(&w).unwrap();
        assert_eq!(n.samples, w.samples);
    }

    #[test]
    fn energy_normalize_is_idempotent() {
        let samples: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let once = energy_normalize(&wave(samples, 8000)).unwrap();
        let twice = energy_normalize(&once).unwrap();
        let mean_sq: f64 =
            once.samples.iter().map(|x| x * x).sum::<f64>() / once.samples.len() as f64;
        assert!((mean_sq - 1.0).abs() < 1e-9);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_normalize_rejects_silence() {
        let err = energy_normalize(&wave(vec![0.0; 16], 16000)).unwrap_err();
        assert!(matches!(err, Error::SilentInput));
    }

    #[test]
    fn frame_exact_fit_yields_one_frame() {
        // 400 samples at 16 kHz, 25 ms frame (400 samples), 10 ms hop.
        let w = wave(vec![1.0; 400], 16000);
        let frames = frame_signal(&w, 25.0, 10.0).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 400);
    }

    #[test]
    fn frame_560_samples_gives_two_frames() {
        // frame = 400, hop = 160: floor((560 - 400) / 160) + 1 = 2,
        // starts at 0 and 160.
        let w = wave((0..560).map(|i| i as f64).collect(), 16000);
        let layout = frame_layout(w.samples.len(), w.sample_rate, 25.0, 10.0).unwrap();
        assert_eq!(layout.starts, vec![0, 160]);
        let frames = frame_signal(&w, 25.0, 10.0).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1][0], 160.0);
        assert_eq!(frames[1][399], 559.0);
    }

    #[test]
    fn frame_rejects_hop_longer_than_frame() {
        let w = wave(vec![0.0; 4000], 16000);
        assert!(frame_signal(&w, 10.0, 25.0).is_err());
    }

    #[test]
    fn frame_rejects_short_signal() {
        let w = wave(vec![0.0; 100], 16000);
        let err = frame_signal(&w, 25.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { needed: 400, got: 100 }));
    }

    #[test]
    fn frames_cover_signal_within_one_hop() {
        for len in [400usize, 777, 1024, 5000, 12345] {
            let w = wave(vec![0.1; len], 16000);
            let layout = frame_layout(len, 16000, 25.0, 10.0).unwrap();
            let last_end = layout.starts.last().unwrap() + layout.frame_len;
            assert!(last_end + layout.hop_samples as usize >= len, "len {len}");
        }
    }

    #[test]
    fn load_rejects_missing_file() {
        let err = load_wav(Path::new("/nonexistent/breath.wav")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn load_scales_int16_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -32768] {
            writer.write_sample(v).unwrap();
        }
        writer.finalize().unwrap();

        let w = load_wav(&path).unwrap();
        assert_eq!(w.sample_rate, 16000);
        assert_eq!(w.samples, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn load_rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..4 {
            writer.write_sample(0i16).unwrap();
        }
        writer.finalize().unwrap();

        let err = load_wav(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedChannelCount { channels: 2, .. }));
    }

    #[test]
    fn load_rejects_float_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("float.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        writer.write_sample(0.25f32).unwrap();
        writer.finalize().unwrap();

        let err = load_wav(&path).unwrap_err();
        assert!(matches!(err, Error::NonPcmEncoding { .. }));
    }
}
