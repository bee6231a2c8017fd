//! Mel-frequency cepstral coefficients with optional delta features.
//!
//! Per frame: pre-emphasis, Hamming window, power spectrum, triangular
//! mel filterbank, floored log, orthonormal DCT-II. Deltas and delta-deltas
//! are two-frame linear regressions appended when enabled.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::{frame_signal, Waveform};
use crate::error::Result;
use crate::features::cqt::MAGNITUDE_FLOOR;

/// MFCC extraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub n_mel_filters: usize,
    pub n_ceps: usize,
    pub include_deltas: bool,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            n_mel_filters: 40,
            n_ceps: 13,
            include_deltas: true,
            frame_ms: 25.0,
            hop_ms: 10.0,
            pre_emphasis: 0.97,
        }
    }
}

impl MfccConfig {
    /// Feature dimension: `n_ceps`, tripled when deltas are appended.
    pub fn output_dim(&self) -> usize {
        if self.include_deltas {
            3 * self.n_ceps
        } else {
            self.n_ceps
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as rows over `n_fft/2 + 1` spectrum bins.
fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    let mut fb = Array2::zeros((n_filters, n_bins));
    for f in 0..n_filters {
        let (lo, center, hi) = (edges[f], edges[f + 1], edges[f + 2]);
        for bin in 0..n_bins {
            let freq = bin as f64 * bin_hz;
            let w = if freq >= lo && freq <= center && center > lo {
                (freq - lo) / (center - lo)
            } else if freq > center && freq <= hi && hi > center {
                (hi - freq) / (hi - center)
            } else {
                0.0
            };
            fb[[f, bin]] = w;
        }
    }
    fb
}

/// Orthonormal DCT-II of `input`, keeping the first `n_out` coefficients.
fn dct2_ortho(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let mut sum = 0.0;
        for (i, &x) in input.iter().enumerate() {
            sum += x * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        out.push(sum * scale);
    }
    out
}

/// Two-frame regression deltas: `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`
/// with edge frames repeated.
fn deltas(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t_max = frames.len();
    let dim = frames[0].len();
    let denom = 2.0 * (1.0 + 4.0);
    (0..t_max)
        .map(|t| {
            let mut d = vec![0.0; dim];
            for n in 1..=2usize {
                let fwd = &frames[(t + n).min(t_max - 1)];
                let bwd = &frames[t.saturating_sub(n)];
                for j in 0..dim {
                    d[j] += n as f64 * (fwd[j] - bwd[j]) / denom;
                }
            }
            d
        })
        .collect()
}

fn power_spectrum(frame: &[f64], fft: &Arc<dyn Fft<f64>>, n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = frame
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    fft.process(&mut buf);
    buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// MFCC sequence of a waveform, one row per frame.
pub fn mfcc_sequence(w: &Waveform, cfg: &MfccConfig) -> Result<Array2<f64>> {
    let frames = frame_signal(w, cfg.frame_ms, cfg.hop_ms)?;
    let frame_len = frames[0].len();
    let n_fft = frame_len.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let filterbank = mel_filterbank(cfg.n_mel_filters, n_fft, w.sample_rate as f64);
    let window: Vec<f64> = (0..frame_len)
        .map(|n| {
            0.54 - 0.46
                * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1) as f64).cos()
        })
        .collect();

    let mut ceps_frames = Vec::with_capacity(frames.len());
    for frame in &frames {
        let mut pre = vec![0.0; frame_len];
        pre[0] = frame[0];
        for i in 1..frame_len {
            pre[i] = frame[i] - cfg.pre_emphasis * frame[i - 1];
        }
        for (x, w) in pre.iter_mut().zip(&window) {
            *x *= w;
        }
        let spectrum = power_spectrum(&pre, &fft, n_fft);
        let log_mel: Vec<f64> = (0..cfg.n_mel_filters)
            .map(|f| {
                let e: f64 = filterbank
                    .row(f)
                    .iter()
                    .zip(&spectrum)
                    .map(|(w, p)| w * p)
                    .sum();
                e.max(MAGNITUDE_FLOOR).ln()
            })
            .collect();
        ceps_frames.push(dct2_ortho(&log_mel, cfg.n_ceps));
    }

    let dim = cfg.output_dim();
    let mut out = Array2::zeros((ceps_frames.len(), dim));
    if cfg.include_deltas {
        let d = deltas(&ceps_frames);
        let dd = deltas(&d);
        for (t, ((c, dt), ddt)) in ceps_frames.iter().zip(&d).zip(&dd).enumerate() {
            for j in 0..cfg.n_ceps {
                out[[t, j]] = c[j];
                out[[t, cfg.n_ceps + j]] = dt[j];
                out[[t, 2 * cfg.n_ceps + j]] = ddt[j];
            }
        }
    } else {
        for (t, c) in ceps_frames.iter().enumerate() {
            for j in 0..cfg.n_ceps {
                out[[t, j]] = c[j];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_frame_is_dct_of_constant() {
        let cfg = MfccConfig {
            include_deltas: false,
            ..MfccConfig::default()
        };
        let w = Waveform::new(vec![0.0; 400], 16000);
        let seq = mfcc_sequence(&w, &cfg).unwrap();
        assert_eq!(seq.dim(), (1, 13));
        // All mel energies sit at the floor, so the log-mel vector is
        // constant and the orthonormal DCT keeps only coefficient 0:
        // c0 = sqrt(n_mel) * ln(floor).
        let expected_c0 = (cfg.n_mel_filters as f64).sqrt() * MAGNITUDE_FLOOR.ln();
        assert!((seq[[0, 0]] - expected_c0).abs() < 1e-9);
        for j in 1..13 {
            assert!(seq[[0, j]].abs() < 1e-9, "coefficient {j}");
        }
    }

    #[test]
    fn deltas_of_constant_sequence_are_zero() {
        let cfg = MfccConfig::default();
        // A periodic signal whose frames are identical: constant amplitude.
        let w = Waveform::new(vec![0.3; 1680], 16000);
        let seq = mfcc_sequence(&w, &cfg).unwrap();
        assert_eq!(seq.ncols(), 39);
        for t in 0..seq.nrows() {
            for j in 13..39 {
                assert!(seq[[t, j]].abs() < 1e-9, "frame {t} coefficient {j}");
            }
        }
    }

    #[test]
    fn white_noise_energy_coefficient_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..16000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let cfg = MfccConfig {
            include_deltas: false,
            ..MfccConfig::default()
        };
        let seq = mfcc_sequence(&Waveform::new(samples, 16000), &cfg).unwrap();
        let mean: Vec<f64> = (0..13)
            .map(|j| seq.column(j).sum() / seq.nrows() as f64)
            .collect();
        for j in 1..13 {
            assert!(
                mean[0].abs() > mean[j].abs(),
                "coefficient 0 ({}) should dominate coefficient {j} ({})",
                mean[0],
                mean[j]
            );
        }
    }

    #[test]
    fn output_dim_follows_config() {
        assert_eq!(MfccConfig::default().output_dim(), 39);
        let plain = MfccConfig {
            include_deltas: false,
            ..MfccConfig::default()
        };
        assert_eq!(plain.output_dim(), 13);
    }
}
