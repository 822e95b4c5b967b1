//! Time-series synthesis and spectral estimation.
//!
//! The magnetometer output is a uniformly sampled field record: white
//! Gaussian noise at a target amplitude-spectral-density floor plus injected
//! calibration tones, optionally with a 1/f drift component. Spectral
//! estimation follows Welch's method with a 4-term Blackman-Harris window,
//! calibrated so that a sinusoid of amplitude a integrates across its peak
//! to a/sqrt(2) RMS and white noise of per-sample deviation sigma comes out
//! at a flat floor of sigma*sqrt(2/fs).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{ensure_domain, Error, Result};

/// Differential readout S1/S2 - S3/S4.
///
/// The two normalizing integrals S2, S4 reference full fluorescence, so they
/// must be positive; a common gain on all four inputs cancels.
pub fn differential_readout(s1: f64, s2: f64, s3: f64, s4: f64) -> Result<f64> {
    ensure_domain!(
        [s1, s2, s3, s4].iter().all(|v| v.is_finite()),
        "fluorescence integrals must be finite"
    );
    ensure_domain!(
        s2 > 0.0 && s4 > 0.0,
        "normalizing integrals must be positive, got S2 = {s2}, S4 = {s4}"
    );
    Ok(s1 / s2 - s3 / s4)
}

/// A deterministic injected tone a*sin(2*pi*f*t + phi).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tone {
    /// Frequency, Hz.
    pub frequency: f64,
    /// Amplitude, T.
    pub amplitude: f64,
    /// Phase offset, rad.
    pub phase: f64,
}

impl Tone {
    pub fn new(frequency: f64, amplitude: f64) -> Self {
        Tone {
            frequency,
            amplitude,
            phase: 0.0,
        }
    }
}

/// Optional 1/f drift rider on top of the white floor.
///
/// The drift ASD is floor*sqrt(corner/f), so it crosses the white floor at
/// the corner frequency and dominates below it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriftModel {
    /// Corner frequency where drift and white floor are equal, Hz.
    pub corner_hz: f64,
}

/// Everything needed to synthesize a magnetometer record.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SynthesisConfig {
    /// Target white-noise floor, T/sqrt(Hz).
    pub target_floor: f64,
    /// Sampling rate, Hz.
    pub fs: f64,
    /// Record length, s.
    pub duration: f64,
    /// Injected tones.
    pub tones: Vec<Tone>,
    /// RNG seed.
    pub seed: u64,
    /// Optional 1/f drift; None keeps the record non-resonant.
    pub drift: Option<DriftModel>,
}

/// Uniformly sampled field record in tesla.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    fs: f64,
    seed: Option<u64>,
    tones: Vec<Tone>,
}

impl TimeSeries {
    /// Wraps an existing record (for example one loaded from disk). No seed
    /// or tone declarations are attached.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        ensure_domain!(
            fs.is_finite() && fs > 0.0,
            "sampling rate must be positive, got {fs}"
        );
        ensure_domain!(!samples.is_empty(), "time series must not be empty");
        ensure_domain!(
            samples.iter().all(|v| v.is_finite()),
            "time series samples must be finite"
        );
        Ok(TimeSeries {
            samples,
            fs,
            seed: None,
            tones: Vec::new(),
        })
    }

    /// Declares tones after the fact so spectral floor estimation can mask
    /// them (used when the record was loaded rather than synthesized).
    pub fn with_declared_tones(mut self, tones: Vec<Tone>) -> Self {
        self.tones = tones;
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn tones(&self) -> &[Tone] {
        &self.tones
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Sample instants in seconds, starting at 0.
    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|i| i as f64 / self.fs)
            .collect()
    }

    /// Returns a copy with every sample multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.samples {
            *v *= c;
        }
        for t in &mut out.tones {
            t.amplitude *= c;
        }
        out
    }
}

/// Synthesizes a field record: white Gaussian noise with per-sample
/// deviation sigma = target_floor*sqrt(fs/2), plus the injected tones, plus
/// the optional 1/f drift. Deterministic given the seed.
pub fn synthesize_timeseries(cfg: &SynthesisConfig) -> Result<TimeSeries> {
    ensure_domain!(
        cfg.fs.is_finite() && cfg.fs > 0.0,
        "sampling rate must be positive, got {}",
        cfg.fs
    );
    ensure_domain!(
        cfg.duration.is_finite() && cfg.duration > 0.0,
        "duration must be positive, got {}",
        cfg.duration
    );
    ensure_domain!(
        cfg.target_floor.is_finite() && cfg.target_floor >= 0.0,
        "noise floor must be nonnegative, got {}",
        cfg.target_floor
    );
    let nyquist = cfg.fs / 2.0;
    for tone in &cfg.tones {
        ensure_domain!(
            tone.amplitude.is_finite() && tone.amplitude >= 0.0 && tone.phase.is_finite(),
            "tone amplitude must be nonnegative and phase finite"
        );
        ensure_domain!(
            tone.frequency > 0.0 && tone.frequency < nyquist,
            "tone at {} Hz aliases: frequencies must lie in (0, {nyquist}) Hz",
            tone.frequency
        );
    }
    let n = (cfg.fs * cfg.duration).round() as usize;
    ensure_domain!(n >= 1, "record is shorter than one sample");

    let sigma = cfg.target_floor * (cfg.fs / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sigma * g
        })
        .collect();
    for tone in &cfg.tones {
        let w = std::f64::consts::TAU * tone.frequency / cfg.fs;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += tone.amplitude * (w * i as f64 + tone.phase).sin();
        }
    }
    if let Some(drift) = cfg.drift {
        ensure_domain!(
            drift.corner_hz.is_finite() && drift.corner_hz > 0.0,
            "drift corner must be positive, got {}",
            drift.corner_hz
        );
        add_one_over_f(&mut samples, cfg.fs, sigma, drift.corner_hz, &mut rng);
    }
    Ok(TimeSeries {
        samples,
        fs: cfg.fs,
        seed: Some(cfg.seed),
        tones: cfg.tones.clone(),
    })
}

/// Adds a 1/f component by spectrally shaping an independent white record:
/// gain sqrt(corner/f) per bin, DC removed, so the added ASD is
/// floor*sqrt(corner/f).
fn add_one_over_f(samples: &mut [f64], fs: f64, sigma: f64, corner_hz: f64, rng: &mut ChaCha8Rng) {
    let n = samples.len();
    if n < 2 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            Complex::new(sigma * g, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let df = fs / n as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        // Hermitian-symmetric gain keeps the inverse transform real.
        let f = df * (k.min(n - k)) as f64;
        let gain = if k == 0 { 0.0 } else { (corner_hz / f).sqrt() };
        *v *= gain;
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (s, v) in samples.iter_mut().zip(&buf) {
        *s += v.re * scale;
    }
}

/// 4-term minimum-sidelobe Blackman-Harris window (symmetric form).
pub fn blackman_harris(n: usize) -> Vec<f64> {
    const A: [f64; 4] = [0.35875, 0.48829, 0.14128, 0.01168];
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = std::f64::consts::TAU * i as f64 / denom;
            A[0] - A[1] * x.cos() + A[2] * (2.0 * x).cos() - A[3] * (3.0 * x).cos()
        })
        .collect()
}

/// Welch estimator controls.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WelchConfig {
    /// Window length in samples.
    pub window_len: usize,
    /// Fractional segment overlap in [0, 1).
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            window_len: 1380,
            overlap: 0.5,
        }
    }
}

/// Window and segmentation bookkeeping attached to a spectrum.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WindowMeta {
    pub name: &'static str,
    pub len: usize,
    pub overlap: f64,
    pub segments: usize,
    /// Sum of window samples (coherent gain numerator).
    pub window_sum: f64,
    /// Sum of squared window samples (power normalization).
    pub window_sq_sum: f64,
}

/// One-sided amplitude spectral density.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Spectrum {
    /// Frequency grid in Hz, 0 to fs/2.
    pub frequency: Vec<f64>,
    /// ASD in T/sqrt(Hz), nonnegative.
    pub asd: Vec<f64>,
    /// Sampling rate of the underlying record, Hz.
    pub fs: f64,
    /// Tone frequencies declared by the record, for floor masking.
    pub declared_tones: Vec<f64>,
    pub meta: WindowMeta,
}

impl Spectrum {
    /// Frequency resolution fs/window_len, Hz.
    pub fn bin_width(&self) -> f64 {
        self.fs / self.meta.len as f64
    }

    /// Nearest bin index for a frequency.
    pub fn bin_of(&self, f: f64) -> usize {
        ((f / self.bin_width()).round() as usize).min(self.frequency.len() - 1)
    }
}

/// Welch ASD of a record.
///
/// Segments of `window_len` samples at the configured overlap are windowed,
/// transformed, and averaged as one-sided PSD 2|X|^2/(fs*sum(w^2)) (no
/// doubling at DC or Nyquist); the ASD is its square root.
pub fn welch_asd(ts: &TimeSeries, cfg: &WelchConfig) -> Result<Spectrum> {
    let n = cfg.window_len;
    ensure_domain!(n >= 4, "window length must be at least 4, got {n}");
    ensure_domain!(
        (0.0..1.0).contains(&cfg.overlap),
        "overlap must lie in [0, 1), got {}",
        cfg.overlap
    );
    ensure_domain!(
        ts.len() >= n,
        "series of {} samples is shorter than one {n}-point window",
        ts.len()
    );
    let step = (((n as f64) * (1.0 - cfg.overlap)).round() as usize).max(1);
    let segments = (ts.len() - n) / step + 1;

    let window = blackman_harris(n);
    let window_sum: f64 = window.iter().sum();
    let window_sq_sum: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let n_bins = n / 2 + 1;
    let mut psd_acc = vec![0.0f64; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in 0..segments {
        let start = s * step;
        for (i, v) in buf.iter_mut().enumerate() {
            *v = Complex::new(window[i] * ts.samples[start + i], 0.0);
        }
        fft.process(&mut buf);
        for (k, acc) in psd_acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            *acc += one_sided * buf[k].norm_sqr() / (ts.fs * window_sq_sum);
        }
    }
    let inv = 1.0 / segments as f64;
    let df = ts.fs / n as f64;
    let frequency: Vec<f64> = (0..n_bins).map(|k| k as f64 * df).collect();
    let asd: Vec<f64> = psd_acc.iter().map(|p| (p * inv).sqrt()).collect();
    Ok(Spectrum {
        frequency,
        asd,
        fs: ts.fs,
        declared_tones: ts.tones.iter().map(|t| t.frequency).collect(),
        meta: WindowMeta {
            name: "blackman-harris-4",
            len: n,
            overlap: cfg.overlap,
            segments,
            window_sum,
            window_sq_sum,
        },
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Median ASD over a frequency band, with bins within 2 of any declared
/// tone masked out.
pub fn noise_floor(sp: &Spectrum, band: (f64, f64)) -> Result<f64> {
    let (lo, hi) = band;
    ensure_domain!(
        lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi,
        "band must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
    );
    let f_max = *sp.frequency.last().expect("spectrum has at least one bin");
    ensure_domain!(
        hi <= f_max * (1.0 + 1e-12),
        "band edge {hi} Hz exceeds the spectrum range ({f_max} Hz)"
    );
    let tone_bins: Vec<usize> = sp.declared_tones.iter().map(|&f| sp.bin_of(f)).collect();
    let mut kept: Vec<f64> = sp
        .frequency
        .iter()
        .zip(&sp.asd)
        .enumerate()
        .filter(|(k, (f, _))| {
            **f >= lo && **f <= hi && tone_bins.iter().all(|&t| k.abs_diff(t) > 2)
        })
        .map(|(_, (_, a))| *a)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyBand);
    }
    Ok(median(&mut kept))
}

/// Estimates the amplitude of a tone near frequency `f`.
///
/// The peak bin is searched within 3 bins of the request; the local floor is
/// the median ASD of bins 4 to 25 away. A peak below 3x that floor is
/// reported as not detected. The amplitude applies the window's coherent
/// gain correction a = asd*sqrt(2*fs*sum(w^2))/sum(w).
pub fn recover_tone(sp: &Spectrum, f: f64) -> Result<f64> {
    let f_max = *sp.frequency.last().expect("spectrum has at least one bin");
    ensure_domain!(
        f.is_finite() && f > 0.0 && f <= f_max,
        "tone frequency {f} Hz is outside the spectrum range (0, {f_max}] Hz"
    );
    let n_bins = sp.asd.len();
    let k_req = sp.bin_of(f);
    let k_lo = k_req.saturating_sub(3).max(1);
    let k_hi = (k_req + 3).min(n_bins.saturating_sub(2));
    ensure_domain!(k_lo <= k_hi, "spectrum is too short to search for a peak");
    let k_peak = (k_lo..=k_hi)
        .max_by(|&a, &b| sp.asd[a].partial_cmp(&sp.asd[b]).unwrap())
        .expect("peak search range is nonempty");
    let peak = sp.asd[k_peak];

    let mut ring: Vec<f64> = (4..=25)
        .flat_map(|d| {
            let mut v = Vec::new();
            if k_peak >= d {
                v.push(sp.asd[k_peak - d]);
            }
            if k_peak + d < n_bins {
                v.push(sp.asd[k_peak + d]);
            }
            v
        })
        .collect();
    ensure_domain!(
        !ring.is_empty(),
        "spectrum is too short to estimate a local floor"
    );
    let floor = median(&mut ring);
    if peak < 3.0 * floor {
        return Err(Error::ToneNotDetected {
            freq: f,
            peak,
            floor,
        });
    }
    let gain = (2.0 * sp.fs * sp.meta.window_sq_sum).sqrt() / sp.meta.window_sum;
    Ok(peak * gain)
}
