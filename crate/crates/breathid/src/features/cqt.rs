//! Constant-Q spectral analysis.
//!
//! Center frequencies are geometrically spaced, `f_k = f_0 * 2^(k/b)` for
//! `k = 1..K`, so every filter keeps the same ratio `Q = f_k / bandwidth_k`.
//! Bin `k` of a frame is a windowed DFT of length `N_k = round(Q * f_s / f_k)`
//! evaluated at exactly `f_k`:
//!
//! ```text
//! x[k] = (1/N_k) * sum_{n < N_k} s[n] w_{N_k}[n] exp(-j 2 pi n Q / N_k)
//! ```
//!
//! Low bins use windows far longer than a breath segment; those windows are
//! truncated to the available samples and renormalized by the effective
//! count.

use ndarray::Array2;
use num_complex::Complex64;

use crate::audio::{frame_layout, Waveform};
use crate::error::{Error, Result};

/// Magnitudes are floored here before the log so silent frames stay finite.
pub const MAGNITUDE_FLOOR: f64 = 1e-10;

/// Tapering window applied to each analysis frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
}

impl WindowKind {
    /// Window value at position `n` of an `len`-point symmetric window.
    pub fn value(self, n: usize, len: usize) -> f64 {
        if len <= 1 {
            return 1.0;
        }
        let x = 2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64;
        match self {
            WindowKind::Hann => 0.5 * (1.0 - x.cos()),
            WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
        }
    }
}

/// Constant-Q analysis parameters, with every derived quantity exposed as a
/// method so configurations stay internally consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtConfig {
    /// Sampling frequency in Hz.
    pub sample_rate: f64,
    /// Minimum analysis frequency in Hz.
    pub f_min: f64,
    /// Maximum analysis frequency in Hz.
    pub f_max: f64,
    /// Filters per octave.
    pub bins_per_octave: u32,
    pub window: WindowKind,
}

impl CqtConfig {
    pub fn new(sample_rate: f64, f_min: f64, f_max: f64, bins_per_octave: u32) -> Result<Self> {
        if !(sample_rate > 0.0 && f_min > 0.0) || bins_per_octave == 0 {
            return Err(Error::InvalidParameter(
                "sample rate, minimum frequency and bins per octave must be positive".into(),
            ));
        }
        if f_max <= f_min || f_max > sample_rate / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "maximum frequency {f_max} Hz must lie in ({f_min}, {}] Hz",
                sample_rate / 2.0
            )));
        }
        let cfg = CqtConfig {
            sample_rate,
            f_min,
            f_max,
            bins_per_octave,
            window: WindowKind::Hann,
        };
        if cfg.n_bins() < 1 {
            return Err(Error::InvalidParameter(format!(
                "frequency range {f_min}..{f_max} Hz spans no full bin at {bins_per_octave} bins/octave"
            )));
        }
        // Window lengths must be strictly decreasing for the bins to be
        // distinct filters.
        for k in 2..=cfg.n_bins() {
            if cfg.window_len(k) >= cfg.window_len(k - 1) {
                return Err(Error::InvalidParameter(format!(
                    "degenerate config: N_{k} >= N_{}",
                    k - 1
                )));
            }
        }
        Ok(cfg)
    }

    /// Paper-style configuration for a given sample rate: 27.5 Hz minimum,
    /// Nyquist maximum, 48 bins per octave.
    pub fn standard(sample_rate: f64) -> Result<Self> {
        CqtConfig::new(sample_rate, 27.5, sample_rate / 2.0, 48)
    }

    /// Number of frequency bins `K = floor(b * log2(f_max / f_min))`.
    pub fn n_bins(&self) -> usize {
        (self.bins_per_octave as f64 * (self.f_max / self.f_min).log2()).floor() as usize
    }

    /// Quality factor `Q = 1 / (2^(1/b) - 1)`.
    pub fn q_factor(&self) -> f64 {
        1.0 / ((1.0 / self.bins_per_octave as f64).exp2() - 1.0)
    }

    /// Center frequency of bin `k` (1-based): `f_min * 2^(k/b)`.
    ///
    /// The exponent is split into integer and fractional octaves so that
    /// `center_freq(k + b) == 2 * center_freq(k)` holds exactly.
    pub fn center_freq(&self, k: usize) -> f64 {
        let b = self.bins_per_octave as usize;
        let octaves = (k / b) as i32;
        let frac = (k % b) as f64 / b as f64;
        self.f_min * frac.exp2() * f64::powi(2.0, octaves)
    }

    /// Bandwidth of bin `k`: `f_k * (2^(1/b) - 1) = f_k / Q`.
    pub fn bandwidth(&self, k: usize) -> f64 {
        self.center_freq(k) / self.q_factor()
    }

    /// Window length of bin `k` in samples: `round(Q * f_s / f_k)`.
    pub fn window_len(&self, k: usize) -> usize {
        (self.q_factor() * self.sample_rate / self.center_freq(k)).round() as usize
    }

    /// Center frequencies of all bins, low to high.
    pub fn freq_axis(&self) -> Vec<f64> {
        (1..=self.n_bins()).map(|k| self.center_freq(k)).collect()
    }
}

/// A constant-Q log-magnitude spectrogram: `K` frequency rows by `T` frame
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Log magnitudes, shape `(K, T)`.
    pub values: Array2<f64>,
    /// Center frequency in Hz of each row.
    pub freq_axis: Vec<f64>,
    /// Hop between frame centers in seconds.
    pub frame_hop: f64,
    pub config: CqtConfig,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Constant-Q transform of one frame, all `K` bins.
///
/// The `N_k`-sample window of bin `k` is centered on `center` (signal index
/// `center - N_k/2 + n`); out-of-range samples read as zero. When `N_k`
/// exceeds the signal length the window is truncated to the samples that
/// exist and the `1/N_k` normalization becomes `1/(effective count)`.
pub fn cqt_frame(signal: &[f64], center: usize, cfg: &CqtConfig) -> Vec<Complex64> {
    let k_max = cfg.n_bins();
    let q = cfg.q_factor();
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let n_k = cfg.window_len(k);
        let start = center as isize - (n_k / 2) as isize;
        // Phasor recurrence for exp(-j 2 pi n Q / N_k).
        let step = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * q / n_k as f64);
        let mut phase = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut effective = 0usize;
        for n in 0..n_k {
            let idx = start + n as isize;
            if idx >= 0 && (idx as usize) < signal.len() {
                let s = signal[idx as usize];
                if s != 0.0 {
                    acc += phase * (s * cfg.window.value(n, n_k));
                }
                effective += 1;
            }
            phase *= step;
        }
        let norm = if n_k <= signal.len() { n_k } else { effective.max(1) };
        out.push(acc / norm as f64);
    }
    out
}

/// Constant-Q spectrogram of a waveform: one column per frame, values
/// `log(max(|x[k]|, floor))`.
pub fn cqt_spectrogram(
    w: &Waveform,
    cfg: &CqtConfig,
    frame_ms: f64,
    hop_ms: f64,
) -> Result<Spectrogram> {
    let layout = frame_layout(w.samples.len(), w.sample_rate, frame_ms, hop_ms)?;
    let k_max = cfg.n_bins();
    let mut values = Array2::zeros((k_max, layout.len()));
    for t in 0..layout.len() {
        let spectrum = cqt_frame(&w.samples, layout.center(t), cfg);
        for (k, x) in spectrum.iter().enumerate() {
            values[[k, t]] = x.norm().max(MAGNITUDE_FLOOR).ln();
        }
    }
    Ok(Spectrogram {
        values,
        freq_axis: cfg.freq_axis(),
        frame_hop: layout.hop_samples / w.sample_rate as f64,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_config() -> CqtConfig {
        CqtConfig::new(44100.0, 27.5, 22050.0, 48).unwrap()
    }

    #[test]
    fn paper_configuration_has_463_bins() {
        assert_eq!(paper_config().n_bins(), 463);
    }

    #[test]
    fn q_factor_matches_formula_value() {
        // 1 / (2^(1/48) - 1), evaluated independently at high precision.
        assert_relative_eq!(paper_config().q_factor(), 68.750565339, epsilon = 1e-6);
    }

    #[test]
    fn octave_doubling_is_exact() {
        let cfg = paper_config();
        assert_eq!(cfg.center_freq(48), 55.0);
        for k in 1..=cfg.n_bins() - 48 {
            assert_eq!(cfg.center_freq(k + 48), 2.0 * cfg.center_freq(k), "k = {k}");
        }
    }

    #[test]
    fn bandwidth_ratio_is_q_for_every_bin() {
        let cfg = paper_config();
        let q = cfg.q_factor();
        for k in 1..=cfg.n_bins() {
            let ratio = cfg.center_freq(k) / cfg.bandwidth(k);
            assert_relative_eq!(ratio, q, epsilon = 1e-9);
        }
    }

    #[test]
    fn window_lengths_strictly_decrease() {
        let cfg = CqtConfig::new(16000.0, 150.0, 8000.0, 12).unwrap();
        assert_eq!(cfg.n_bins(), 68);
        for k in 2..=cfg.n_bins() {
            assert!(cfg.window_len(k) < cfg.window_len(k - 1));
        }
    }

    #[test]
    fn pure_tone_peaks_at_its_own_bin() {
        let cfg = CqtConfig::new(16000.0, 150.0, 8000.0, 12).unwrap();
        for k in [10usize, 30, 50] {
            let f = cfg.center_freq(k);
            let len = cfg.window_len(1) + 256;
            let signal: Vec<f64> = (0..len)
                .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).cos())
                .collect();
            let spectrum = cqt_frame(&signal, len / 2, &cfg);
            let peak = spectrum
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap()
                .0;
            assert_eq!(peak + 1, k, "tone at bin {k} peaked at {}", peak + 1);
        }
    }

    #[test]
    fn zero_signal_gives_zero_vector() {
        let cfg = CqtConfig::new(16000.0, 150.0, 8000.0, 12).unwrap();
        let signal = vec![0.0; 4000];
        for x in cqt_frame(&signal, 2000, &cfg) {
            assert_eq!(x, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn cqt_frame_is_linear() {
        let cfg = CqtConfig::new(16000.0, 300.0, 8000.0, 12).unwrap();
        let mut rng_state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let s1: Vec<f64> = (0..3000).map(|_| next()).collect();
        let s2: Vec<f64> = (0..3000).map(|_| next()).collect();
        let a = 2.75;
        let combined: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + y).collect();

        let c1 = cqt_frame(&s1, 1500, &cfg);
        let c2 = cqt_frame(&s2, 1500, &cfg);
        let cc = cqt_frame(&combined, 1500, &cfg);
        for k in 0..cc.len() {
            let expected = a * c1[k] + c2[k];
            assert!((cc[k] - expected).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn spectrogram_shape_and_log_shift() {
        let cfg = CqtConfig::new(16000.0, 300.0, 8000.0, 12).unwrap();
        let n = 420;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 700.0 * i as f64 / 16000.0).sin() * 0.05)
            .collect();
        let w = Waveform::new(samples.clone(), 16000);
        let spec = cqt_spectrogram(&w, &cfg, 25.0, 10.0).unwrap();
        assert_eq!(spec.n_bins(), cfg.n_bins());
        assert_eq!(spec.n_frames(), 2);

        let scaled = Waveform::new(samples.iter().map(|x| x * 10.0).collect(), 16000);
        let spec10 = cqt_spectrogram(&scaled, &cfg, 25.0, 10.0).unwrap();
        let shift = 10f64.ln();
        for (a, b) in spec.values.iter().zip(spec10.values.iter()) {
            if *a > MAGNITUDE_FLOOR.ln() && *b > MAGNITUDE_FLOOR.ln() {
                assert_relative_eq!(b - a, shift, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rejects_f_max_above_nyquist() {
        assert!(CqtConfig::new(16000.0, 27.5, 9000.0, 48).is_err());
    }
}
