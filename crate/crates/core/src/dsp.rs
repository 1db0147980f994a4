//! Signal conditioning and epoching.
//!
//! The conditioning chain is: 50 Hz notch (Q = 30), 0.01 Hz order-4
//! Butterworth high-pass, 40 Hz order-3 Butterworth low-pass, then baseline
//! correction (subtract a 0.05 Hz low-pass of the signal). All filters run
//! causally in a single forward pass; phase distortion is accepted in
//! exchange for streaming-compatible behavior. Filtering is done in `f64`
//! throughout — the 0.01 Hz sections have poles close enough to the unit
//! circle that single precision would be marginal.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ingest::{BinaryLabel, EcgRecording, Emotion};

/// Conditioning-chain constants.
pub const NOTCH_FREQ_HZ: f64 = 50.0;
pub const NOTCH_Q: f64 = 30.0;
pub const HIGHPASS_CUTOFF_HZ: f64 = 0.01;
pub const HIGHPASS_ORDER: usize = 4;
pub const LOWPASS_CUTOFF_HZ: f64 = 40.0;
pub const LOWPASS_ORDER: usize = 3;
pub const BASELINE_CUTOFF_HZ: f64 = 0.05;
pub const BASELINE_ORDER: usize = 2;

/// Default epoch length in seconds.
pub const DEFAULT_EPOCH_SECONDS: f64 = 10.0;

/// Filter kinds expressible through [`FilterSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    Notch,
    ButterworthHighpass,
    ButterworthLowpass,
}

/// Declarative filter description.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Cutoff frequency, or center frequency for the notch, in Hz.
    pub cutoff_hz: f64,
    /// Butterworth order; ignored by the notch.
    pub order: usize,
    /// Notch quality factor (center frequency / bandwidth); ignored by
    /// Butterworth kinds.
    pub quality_factor: f64,
}

impl FilterSpec {
    pub fn lowpass(cutoff_hz: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::ButterworthLowpass,
            cutoff_hz,
            order,
            quality_factor: 0.0,
        }
    }

    pub fn highpass(cutoff_hz: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::ButterworthHighpass,
            cutoff_hz,
            order,
            quality_factor: 0.0,
        }
    }

    pub fn notch(center_hz: f64, quality_factor: f64) -> Self {
        Self {
            kind: FilterKind::Notch,
            cutoff_hz: center_hz,
            order: 2,
            quality_factor,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(fs > 0.0) {
            return Err(Error::InvalidFrequency(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if !(self.cutoff_hz > 0.0) || self.cutoff_hz >= fs / 2.0 {
            return Err(Error::InvalidFrequency(format!(
                "cutoff {} Hz must lie in (0, {}) at fs = {fs} Hz",
                self.cutoff_hz,
                fs / 2.0
            )));
        }
        match self.kind {
            FilterKind::Notch => {
                if !(self.quality_factor > 0.0) {
                    return Err(Error::InvalidFrequency(format!(
                        "notch quality factor must be positive, got {}",
                        self.quality_factor
                    )));
                }
            }
            _ => {
                if self.order == 0 {
                    return Err(Error::InvalidFrequency(
                        "Butterworth order must be at least 1".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One second-order section in Direct Form II transposed.
///
/// Coefficients are normalized so `a0 = 1`. First-order sections are stored
/// with `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Largest pole magnitude of this section.
    fn pole_magnitude(&self) -> f64 {
        // z^2 + a1 z + a2 = 0
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.sqrt()
        } else {
            let r = disc.sqrt();
            let p1 = (-self.a1 + r) / 2.0;
            let p2 = (-self.a1 - r) / 2.0;
            p1.abs().max(p2.abs())
        }
    }

    fn check_stable(&self) -> Result<()> {
        let mag = self.pole_magnitude();
        if mag >= 1.0 {
            Err(Error::UnstableFilter(mag))
        } else {
            Ok(())
        }
    }
}

/// Apply a cascade of sections causally with zero initial state.
fn run_cascade(sections: &[Biquad], signal: &[f64]) -> Vec<f64> {
    let mut out = signal.to_vec();
    for q in sections {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for x in out.iter_mut() {
            let y = q.b0 * *x + s1;
            s1 = q.b1 * *x - q.a1 * y + s2;
            s2 = q.b2 * *x - q.a2 * y;
            *x = y;
        }
    }
    out
}

/// Normalized Butterworth poles in the upper half plane (plus the real pole
/// for odd orders), for a prototype with cutoff 1 rad/s.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    let mut poles = Vec::new();
    for k in 0..(order + 1) / 2 {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        poles.push(Complex64::new(theta.cos(), theta.sin()));
    }
    poles
}

/// Bilinear transform of one analog section
/// `(β0 s² + β1 s + β2) / (s² + α1 s + α2)` at transform constant `k = 2 fs`.
fn bilinear_quadratic(beta: [f64; 3], alpha: [f64; 2], k: f64) -> Biquad {
    let k2 = k * k;
    let b0 = beta[0] * k2 + beta[1] * k + beta[2];
    let b1 = 2.0 * (beta[2] - beta[0] * k2);
    let b2 = beta[0] * k2 - beta[1] * k + beta[2];
    let a0 = k2 + alpha[0] * k + alpha[1];
    let a1 = 2.0 * (alpha[1] - k2);
    let a2 = k2 - alpha[0] * k + alpha[1];
    Biquad {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: b2 / a0,
        a1: a1 / a0,
        a2: a2 / a0,
    }
}

/// Bilinear transform of one analog first-order section
/// `(β0 s + β1) / (s + α)`.
fn bilinear_linear(beta: [f64; 2], alpha: f64, k: f64) -> Biquad {
    let b0 = beta[0] * k + beta[1];
    let b1 = beta[1] - beta[0] * k;
    let a0 = k + alpha;
    let a1 = alpha - k;
    Biquad {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: 0.0,
        a1: a1 / a0,
        a2: 0.0,
    }
}

/// Design a Butterworth low- or high-pass as cascaded second-order sections.
///
/// The analog prototype is discretized with the bilinear transform after
/// pre-warping the cutoff, so the -3 dB point lands exactly on `cutoff_hz`.
pub fn butterworth_sos(spec: &FilterSpec, fs: f64) -> Result<Vec<Biquad>> {
    spec.validate(fs)?;
    let highpass = match spec.kind {
        FilterKind::ButterworthHighpass => true,
        FilterKind::ButterworthLowpass => false,
        FilterKind::Notch => {
            return Err(Error::InvalidFrequency(
                "notch is not a Butterworth design".to_string(),
            ))
        }
    };
    let warped = 2.0 * fs * (PI * spec.cutoff_hz / fs).tan();
    let k = 2.0 * fs;
    let mut sections = Vec::new();
    for p in prototype_poles(spec.order) {
        if p.im.abs() < 1e-12 {
            // Real pole at -1: first-order section.
            let alpha = warped;
            let q = if highpass {
                bilinear_linear([1.0, 0.0], alpha, k)
            } else {
                bilinear_linear([0.0, warped], alpha, k)
            };
            sections.push(q);
        } else {
            let pole = if highpass { warped / p } else { p * warped };
            let alpha1 = -2.0 * pole.re;
            let alpha2 = pole.norm_sqr();
            let q = if highpass {
                bilinear_quadratic([1.0, 0.0, 0.0], [alpha1, alpha2], k)
            } else {
                bilinear_quadratic([0.0, 0.0, alpha2], [alpha1, alpha2], k)
            };
            sections.push(q);
        }
    }
    for q in &sections {
        q.check_stable()?;
    }
    Ok(sections)
}

/// Design the second-order IIR notch for center `f0` and quality factor `q`
/// (`q = f0 / bandwidth`).
pub fn notch_biquad(f0: f64, q: f64, fs: f64) -> Result<Biquad> {
    FilterSpec::notch(f0, q).validate(fs)?;
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cosw = w0.cos();
    let a0 = 1.0 + alpha;
    let section = Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cosw / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cosw / a0,
        a2: (1.0 - alpha) / a0,
    };
    section.check_stable()?;
    Ok(section)
}

/// Remove a narrow band around `f0` (powerline interference).
pub fn notch_filter(signal: &[f64], fs: f64, f0: f64, q: f64) -> Result<Vec<f64>> {
    let section = notch_biquad(f0, q, fs)?;
    Ok(run_cascade(&[section], signal))
}

/// Apply a Butterworth filter described by `spec`.
pub fn butterworth_filter(signal: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    let sections = butterworth_sos(spec, fs)?;
    Ok(run_cascade(&sections, signal))
}

/// Subtract the sub-0.05 Hz component, isolating the dynamic fluctuations.
pub fn baseline_correct(signal: &[f64], fs: f64) -> Result<Vec<f64>> {
    let spec = FilterSpec::lowpass(BASELINE_CUTOFF_HZ, BASELINE_ORDER);
    let baseline = butterworth_filter(signal, fs, &spec)?;
    Ok(signal
        .iter()
        .zip(baseline.iter())
        .map(|(x, b)| x - b)
        .collect())
}

/// Full conditioning chain for one recording.
pub fn preprocess(recording: &EcgRecording) -> Result<Vec<f64>> {
    let fs = recording.sampling_rate_hz;
    let notched = notch_filter(&recording.samples, fs, NOTCH_FREQ_HZ, NOTCH_Q)?;
    let highpassed = butterworth_filter(
        &notched,
        fs,
        &FilterSpec::highpass(HIGHPASS_CUTOFF_HZ, HIGHPASS_ORDER),
    )?;
    let lowpassed = butterworth_filter(
        &highpassed,
        fs,
        &FilterSpec::lowpass(LOWPASS_CUTOFF_HZ, LOWPASS_ORDER),
    )?;
    baseline_correct(&lowpassed, fs)
}

/// One fixed-length conditioned segment; the unit of classification.
#[derive(Debug, Clone)]
pub struct EcgEpoch {
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
    pub subject_id: String,
    pub emotion: Emotion,
    pub label: BinaryLabel,
    pub epoch_index: usize,
}

/// Metadata attached to every epoch cut from one recording.
#[derive(Debug, Clone)]
pub struct EpochMeta {
    pub subject_id: String,
    pub emotion: Emotion,
    pub label: BinaryLabel,
}

impl EpochMeta {
    pub fn new(subject_id: impl Into<String>, emotion: Emotion) -> Result<Self> {
        Ok(Self {
            subject_id: subject_id.into(),
            emotion,
            label: emotion.binary_label()?,
        })
    }

    pub fn for_recording(recording: &EcgRecording) -> Result<Self> {
        Self::new(recording.subject_id.clone(), recording.emotion)
    }
}

/// Cut a signal into non-overlapping fixed-length epochs.
///
/// Every epoch has exactly `round(epoch_seconds * fs)` samples; the trailing
/// remainder is discarded. A signal shorter than one epoch yields an empty
/// vector.
pub fn segment(signal: &[f64], fs: f64, epoch_seconds: f64, meta: &EpochMeta) -> Vec<EcgEpoch> {
    let epoch_len = (epoch_seconds * fs).round() as usize;
    if epoch_len == 0 {
        return Vec::new();
    }
    signal
        .chunks_exact(epoch_len)
        .enumerate()
        .map(|(epoch_index, chunk)| EcgEpoch {
            samples: chunk.to_vec(),
            sampling_rate_hz: fs,
            subject_id: meta.subject_id.clone(),
            emotion: meta.emotion,
            label: meta.label,
            epoch_index,
        })
        .collect()
}

/// Condition a recording and cut it into epochs in one step.
pub fn condition_and_segment(
    recording: &EcgRecording,
    epoch_seconds: f64,
) -> Result<Vec<EcgEpoch>> {
    let meta = EpochMeta::for_recording(recording)?;
    let conditioned = preprocess(recording)?;
    Ok(segment(
        &conditioned,
        recording.sampling_rate_hz,
        epoch_seconds,
        &meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1000.0;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// RMS of the signal tail, after `discard` samples of transient.
    fn tail_rms(x: &[f64], discard: usize) -> f64 {
        rms(&x[discard..])
    }

    fn db(ratio: f64) -> f64 {
        -20.0 * ratio.log10()
    }

    #[test]
    fn notch_kills_50hz_and_passes_5hz() {
        let hum = sine(50.0, FS, 10_000);
        let out = notch_filter(&hum, FS, 50.0, 30.0).unwrap();
        let ratio = tail_rms(&out, 1000) / tail_rms(&hum, 1000);
        assert!(ratio < 0.05, "50 Hz residual ratio {ratio}");
        assert!(db(ratio) > 26.0, "attenuation {} dB", db(ratio));

        let low = sine(5.0, FS, 10_000);
        let out = notch_filter(&low, FS, 50.0, 30.0).unwrap();
        let ratio = tail_rms(&out, 1000) / tail_rms(&low, 1000);
        assert!((ratio - 1.0).abs() < 0.02, "5 Hz ratio {ratio}");
    }

    #[test]
    fn notch_zero_in_zero_out() {
        let out = notch_filter(&vec![0.0; 5000], FS, 50.0, 30.0).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn notch_rejects_frequency_above_nyquist() {
        assert!(matches!(
            notch_filter(&[0.0; 10], 80.0, 50.0, 30.0),
            Err(Error::InvalidFrequency(_))
        ));
    }

    #[test]
    fn lowpass_40_attenuates_100hz() {
        let tone = sine(100.0, FS, 20_000);
        let spec = FilterSpec::lowpass(40.0, 3);
        let out = butterworth_filter(&tone, FS, &spec).unwrap();
        let atten = db(tail_rms(&out, 2000) / tail_rms(&tone, 2000));
        // Analog rolloff predicts ~24 dB one octave+ above cutoff.
        assert!(atten > 15.0, "attenuation {atten} dB");
        assert!(atten < 35.0, "attenuation {atten} dB implausibly high");
    }

    #[test]
    fn lowpass_passes_dc() {
        let step = vec![1.0; 30_000];
        let spec = FilterSpec::lowpass(40.0, 3);
        let out = butterworth_filter(&step, FS, &spec).unwrap();
        assert!((out[29_999] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn highpass_001_step_response_decays() {
        // Step-response oracle for the 0.01 Hz order-4 high-pass. The
        // dominant pole pair decays like exp(-2*pi*0.01*sin(22.5deg)*t), a
        // ~42 s time constant, so the response is still O(0.1) of the step
        // at t = 60 s; it only falls below 1e-3 of a unit step permanently
        // after roughly six minutes. Within the first 60 s the oscillatory
        // response does swing through zero, which is what the minimum-level
        // check captures.
        let step = vec![7.0; 450_000];
        let spec = FilterSpec::highpass(0.01, 4);
        let out = butterworth_filter(&step, FS, &spec).unwrap();

        let min_within_60s = out[..60_000]
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        assert!(
            min_within_60s < 1e-3,
            "min |y| in first 60 s: {min_within_60s}"
        );

        // Sustained decay: every sample beyond 420 s is below 1e-3.
        let late_max = out[420_000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(late_max < 1e-3, "|y| after 420 s: {late_max}");
    }

    #[test]
    fn impulse_response_is_absolutely_summable() {
        let mut impulse = vec![0.0; 1_000_000];
        impulse[0] = 1.0;
        let specs = [
            FilterSpec::lowpass(40.0, 3),
            FilterSpec::highpass(0.01, 4),
            FilterSpec::lowpass(0.05, 2),
        ];
        for spec in specs {
            let h = butterworth_filter(&impulse, FS, &spec).unwrap();
            let total: f64 = h.iter().map(|v| v.abs()).sum();
            let tail: f64 = h[900_000..].iter().map(|v| v.abs()).sum();
            assert!(total.is_finite());
            assert!(
                tail < 1e-9 * total.max(1.0),
                "tail {tail} vs total {total} for {spec:?}"
            );
        }
        let h = notch_filter(&impulse, FS, 50.0, 30.0).unwrap();
        let tail: f64 = h[900_000..].iter().map(|v| v.abs()).sum();
        assert!(tail < 1e-12);
    }

    #[test]
    fn unstable_design_is_rejected_not_returned() {
        // No realizable spec in range should trip the stability check; verify
        // the check itself by corrupting a section.
        let q = Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: 0.0,
            a1: -2.1,
            a2: 1.1,
        };
        assert!(matches!(q.check_stable(), Err(Error::UnstableFilter(_))));
    }

    #[test]
    fn baseline_removes_dc() {
        let constant = vec![3.0; 120_000];
        let out = baseline_correct(&constant, FS).unwrap();
        assert!(out[119_999].abs() < 1e-4, "residual {}", out[119_999]);
    }

    #[test]
    fn baseline_passes_1hz() {
        let tone = sine(1.0, FS, 60_000);
        let out = baseline_correct(&tone, FS).unwrap();
        let ratio = tail_rms(&out, 30_000) / tail_rms(&tone, 30_000);
        assert!(ratio > 0.99, "1 Hz ratio {ratio}");
    }

    #[test]
    fn baseline_attenuates_slow_drift_under_carrier() {
        // 0.005 Hz drift + 10 Hz carrier. Causal subtraction leaves the
        // phase-lag residual |1 - H(j w)| of the 0.05 Hz order-2 low-pass,
        // which the oracle puts at ~17 dB for this drift frequency (a
        // zero-phase filter would do far better; causal operation is the
        // documented trade).
        let n = 800_000; // 800 s: four drift periods
        let drift: Vec<f64> = (0..n)
            .map(|i| 2.0 * (2.0 * PI * 0.005 * i as f64 / FS).sin())
            .collect();
        let carrier = sine(10.0, FS, n);
        let mixed: Vec<f64> = drift.iter().zip(&carrier).map(|(d, c)| d + c).collect();
        let out = baseline_correct(&mixed, FS).unwrap();

        // Estimate per-band content by correlating against the known parts.
        let discard = 200_000;
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a[discard..]
                .iter()
                .zip(&b[discard..])
                .map(|(x, y)| x * y)
                .sum::<f64>()
        };
        let drift_gain = dot(&out, &drift) / dot(&drift, &drift);
        let carrier_gain = dot(&out, &carrier) / dot(&carrier, &carrier);
        let drift_db = -20.0 * drift_gain.abs().log10();
        assert!(drift_db > 15.0, "drift attenuation {drift_db} dB");
        assert!(carrier_gain > 0.99, "carrier gain {carrier_gain}");
    }

    #[test]
    fn preprocess_zero_is_zero() {
        let rec = EcgRecording {
            subject_id: "s".into(),
            emotion: Emotion::Anger,
            samples: vec![0.0; 20_000],
            sampling_rate_hz: FS,
        };
        let out = preprocess(&rec).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn preprocess_recovers_clean_ecg_from_hum_and_drift() {
        // The drift sits well below the 0.05 Hz baseline knee; the band
        // between the 0.01 Hz high-pass and that knee is passband by design
        // and is not expected to be cleaned.
        let clean_spec = crate::synth::SynthEcgSpec {
            heart_rate_bpm: 70.0,
            duration_s: 60.0,
            fs_hz: FS,
            qrs_amplitude: 1.0,
            noise_std: 0.0,
            hum_50hz_amplitude: 0.0,
            drift_amplitude: 0.0,
            drift_freq_hz: 0.0,
            seed: 7,
        };
        let (clean, _) = crate::synth::generate(&clean_spec);
        let dirty_spec = crate::synth::SynthEcgSpec {
            noise_std: 0.02,
            hum_50hz_amplitude: 0.5,
            drift_amplitude: 0.3,
            drift_freq_hz: 0.005,
            ..clean_spec
        };
        let (dirty, _) = crate::synth::generate(&dirty_spec);
        let rec = EcgRecording {
            subject_id: "s".into(),
            emotion: Emotion::Anger,
            samples: dirty,
            sampling_rate_hz: FS,
        };
        let out = preprocess(&rec).unwrap();

        // The causal chain delays the signal slightly; scan forward lags on
        // the output to align before correlating.
        let discard = 30_000;
        let clean_tail = &clean[discard..];
        let mut best = f64::NEG_INFINITY;
        for lag in 0..60usize {
            let out_tail = &out[discard + lag..];
            let n = clean_tail.len().min(out_tail.len());
            let (a, b) = (&clean_tail[..n], &out_tail[..n]);
            let ma = a.iter().sum::<f64>() / n as f64;
            let mb = b.iter().sum::<f64>() / n as f64;
            let mut num = 0.0;
            let mut da = 0.0;
            let mut dbb = 0.0;
            for i in 0..n {
                let xa = a[i] - ma;
                let xb = b[i] - mb;
                num += xa * xb;
                da += xa * xa;
                dbb += xb * xb;
            }
            best = best.max(num / (da * dbb).sqrt());
        }
        assert!(best > 0.95, "correlation {best}");
    }

    #[test]
    fn preprocess_is_exactly_the_documented_composition() {
        // Regression pin on the stage order. The stages are all LTI, so a
        // permuted chain differs only in floating-point rounding; the pin is
        // therefore bit-level: the canonical composition reproduces
        // `preprocess` exactly, the permuted one does not.
        let spec = crate::synth::SynthEcgSpec {
            heart_rate_bpm: 70.0,
            duration_s: 20.0,
            fs_hz: FS,
            qrs_amplitude: 1.0,
            noise_std: 0.05,
            hum_50hz_amplitude: 0.3,
            drift_amplitude: 0.5,
            drift_freq_hz: 0.02,
            seed: 3,
        };
        let (samples, _) = crate::synth::generate(&spec);
        let rec = EcgRecording {
            subject_id: "s".into(),
            emotion: Emotion::Anger,
            samples: samples.clone(),
            sampling_rate_hz: FS,
        };
        let canonical = preprocess(&rec).unwrap();

        // Same order, composed by hand: must match bit for bit.
        let no = notch_filter(&samples, FS, 50.0, 30.0).unwrap();
        let hp = butterworth_filter(&no, FS, &FilterSpec::highpass(0.01, 4)).unwrap();
        let lp = butterworth_filter(&hp, FS, &FilterSpec::lowpass(40.0, 3)).unwrap();
        let composed = baseline_correct(&lp, FS).unwrap();
        assert!(canonical
            .iter()
            .zip(&composed)
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        // Permuted double: low-pass before high-pass before notch.
        let lp = butterworth_filter(&samples, FS, &FilterSpec::lowpass(40.0, 3)).unwrap();
        let hp = butterworth_filter(&lp, FS, &FilterSpec::highpass(0.01, 4)).unwrap();
        let no = notch_filter(&hp, FS, 50.0, 30.0).unwrap();
        let permuted = baseline_correct(&no, FS).unwrap();
        assert!(
            canonical
                .iter()
                .zip(&permuted)
                .any(|(a, b)| a.to_bits() != b.to_bits()),
            "permuted pipeline unexpectedly identical"
        );
    }

    #[test]
    fn segment_arithmetic() {
        let meta = EpochMeta::new("s1", Emotion::Anger).unwrap();
        let signal = vec![1.0; 25_000];
        let epochs = segment(&signal, FS, 10.0, &meta);
        assert_eq!(epochs.len(), 2);
        assert!(epochs.iter().all(|e| e.samples.len() == 10_000));

        assert!(segment(&vec![0.0; 9_999], FS, 10.0, &meta).is_empty());

        let epochs = segment(&vec![0.0; 30_000], FS, 10.0, &meta);
        let indices: Vec<usize> = epochs.iter().map(|e| e.epoch_index).collect();
        assert_eq!(indices, vec![0, 1, 2]);
    }

    #[test]
    fn segment_concat_reproduces_prefix() {
        let meta = EpochMeta::new("s1", Emotion::Sadness).unwrap();
        let signal: Vec<f64> = (0..10_500).map(|i| i as f64 * 0.25).collect();
        let epochs = segment(&signal, 100.0, 10.0, &meta);
        let concat: Vec<f64> = epochs.iter().flat_map(|e| e.samples.clone()).collect();
        assert_eq!(concat.as_slice(), &signal[..10_000]);
    }

    #[test]
    fn filters_are_linear_and_time_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();

        let spec = FilterSpec::lowpass(40.0, 3);
        let fx = butterworth_filter(&x, FS, &spec).unwrap();
        let fy = butterworth_filter(&y, FS, &spec).unwrap();
        let fc = butterworth_filter(&combo, FS, &spec).unwrap();
        let scale = fc.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        for i in 0..n {
            assert!(
                (fc[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9 * scale,
                "linearity violated at {i}"
            );
        }

        // Shift by k samples (zero-padded head): output shifts by k exactly.
        let k = 137;
        let mut shifted = vec![0.0; k];
        shifted.extend_from_slice(&x[..n - k]);
        let fs_shift = butterworth_filter(&shifted, FS, &spec).unwrap();
        for i in k..n {
            assert!(
                (fs_shift[i] - fx[i - k]).abs() <= 1e-12 * scale,
                "time invariance violated at {i}"
            );
        }
    }

    #[test]
    fn preprocess_output_finite_for_finite_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..30_000).map(|_| rng.gen_range(-1e6..1e6)).collect();
        let rec = EcgRecording {
            subject_id: "s".into(),
            emotion: Emotion::Disgust,
            samples,
            sampling_rate_hz: FS,
        };
        let out = preprocess(&rec).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
