//! Deterministic synthetic ECG and synthetic datasets.
//!
//! The generator produces QRS-like Gaussian pulses at exact RR spacing with
//! optional P/T-like bumps, seeded Gaussian noise, 50 Hz hum, and sinusoidal
//! drift, and returns the ground-truth peak positions. It is intentionally
//! non-physiological: the point is a signal whose heart rate, peak sample
//! indices, and contamination are known exactly, so downstream stages can be
//! tested against construction-time truth.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp;
use crate::error::Result;
use crate::features::{self, FeatureTable, WelchParams};
use crate::ingest::{EcgRecording, Emotion, IngestSchema};
use crate::matrix::Matrix;
use crate::rngutil::{derive_seed, gauss};

/// Parameters of one synthetic ECG trace.
#[derive(Debug, Clone, Copy)]
pub struct SynthEcgSpec {
    pub heart_rate_bpm: f64,
    pub duration_s: f64,
    pub fs_hz: f64,
    pub qrs_amplitude: f64,
    pub noise_std: f64,
    pub hum_50hz_amplitude: f64,
    pub drift_amplitude: f64,
    pub drift_freq_hz: f64,
    pub seed: u64,
}

impl Default for SynthEcgSpec {
    fn default() -> Self {
        Self {
            heart_rate_bpm: 70.0,
            duration_s: 10.0,
            fs_hz: 1000.0,
            qrs_amplitude: 1.0,
            noise_std: 0.0,
            hum_50hz_amplitude: 0.0,
            drift_amplitude: 0.0,
            drift_freq_hz: 0.02,
            seed: 0,
        }
    }
}

/// QRS pulse sigma in seconds (~20 ms total width).
const QRS_SIGMA_S: f64 = 0.005;

/// Add a truncated Gaussian pulse centered at `center` (samples).
fn add_pulse(signal: &mut [f64], center: f64, amplitude: f64, sigma_samples: f64) {
    let reach = (4.0 * sigma_samples).ceil() as i64;
    let c = center.round() as i64;
    for i in (c - reach).max(0)..=(c + reach).min(signal.len() as i64 - 1) {
        let d = (i as f64 - center) / sigma_samples;
        signal[i as usize] += amplitude * (-0.5 * d * d).exp();
    }
}

/// Generate one synthetic trace; returns `(samples, true_peak_indices)`.
///
/// Peak spacing is exactly `round(fs * 60 / bpm)` samples; the first peak
/// sits half a period into the signal.
pub fn generate(spec: &SynthEcgSpec) -> (Vec<f64>, Vec<usize>) {
    let n = (spec.duration_s * spec.fs_hz).round() as usize;
    let mut signal = vec![0.0; n];
    let period = (spec.fs_hz * 60.0 / spec.heart_rate_bpm).round() as usize;
    let period = period.max(1);
    let sigma_qrs = QRS_SIGMA_S * spec.fs_hz;

    // P/T placement scales with the cycle so fast rates stay plausible.
    let period_s = period as f64 / spec.fs_hz;
    let m = period_s.min(1.0);

    let mut peaks = Vec::new();
    let mut center = period / 2;
    while center < n {
        peaks.push(center);
        let c = center as f64;
        add_pulse(&mut signal, c, spec.qrs_amplitude, sigma_qrs);
        add_pulse(
            &mut signal,
            c - 0.16 * m * spec.fs_hz,
            0.15 * spec.qrs_amplitude,
            0.025 * m * spec.fs_hz,
        );
        add_pulse(
            &mut signal,
            c + 0.25 * m * spec.fs_hz,
            0.3 * spec.qrs_amplitude,
            0.04 * m * spec.fs_hz,
        );
        center += period;
    }

    if spec.noise_std > 0.0 || spec.hum_50hz_amplitude > 0.0 || spec.drift_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for (i, x) in signal.iter_mut().enumerate() {
            let t = i as f64 / spec.fs_hz;
            if spec.noise_std > 0.0 {
                *x += spec.noise_std * gauss(&mut rng);
            }
            if spec.hum_50hz_amplitude > 0.0 {
                *x += spec.hum_50hz_amplitude * (2.0 * std::f64::consts::PI * 50.0 * t).sin();
            }
            if spec.drift_amplitude > 0.0 {
                *x += spec.drift_amplitude
                    * (2.0 * std::f64::consts::PI * spec.drift_freq_hz * t).sin();
            }
        }
    }

    (signal, peaks)
}

/// Parameters of a full synthetic dataset: several subjects, one recording
/// per in-scope emotion, heart rate carrying the class signal.
///
/// Each subject also gets a fixed QRS-amplitude factor, so subject identity
/// is recoverable from the amplitude-sensitive features. Without such a
/// signature every feature is a pure function of heart rate and no model can
/// benefit from having seen a subject before.
#[derive(Debug, Clone)]
pub struct SynthDatasetSpec {
    pub n_subjects: usize,
    /// Base heart rate per emotion; the class gap lives here.
    pub emotion_bpm: BTreeMap<Emotion, f64>,
    pub epochs_per_group: usize,
    /// Standard deviation of per-subject heart-rate offsets.
    pub subject_bpm_sigma: f64,
    /// Log-scale sigma of the per-subject QRS amplitude factor.
    pub subject_amplitude_sigma: f64,
    pub noise_std: f64,
    pub hum_50hz_amplitude: f64,
    pub drift_amplitude: f64,
    pub epoch_seconds: f64,
    pub seed: u64,
}

impl SynthDatasetSpec {
    /// Dataset where all positive emotions run `gap` bpm slower than all
    /// negative ones, centered on `base_bpm`.
    pub fn with_class_gap(
        n_subjects: usize,
        epochs_per_group: usize,
        base_bpm: f64,
        class_gap_bpm: f64,
        subject_bpm_sigma: f64,
        seed: u64,
    ) -> Self {
        let mut emotion_bpm = BTreeMap::new();
        for emotion in Emotion::IN_SCOPE {
            let bpm = match emotion.binary_label().unwrap().value() {
                1 => base_bpm - class_gap_bpm / 2.0,
                _ => base_bpm + class_gap_bpm / 2.0,
            };
            emotion_bpm.insert(emotion, bpm);
        }
        Self {
            n_subjects,
            emotion_bpm,
            epochs_per_group,
            subject_bpm_sigma,
            subject_amplitude_sigma: 0.15,
            noise_std: 0.05,
            hum_50hz_amplitude: 0.2,
            drift_amplitude: 0.3,
            epoch_seconds: dsp::DEFAULT_EPOCH_SECONDS,
            seed,
        }
    }

    fn subject_id(&self, index: usize) -> String {
        format!("S{:03}", index + 1)
    }
}

/// Synthesize the raw recordings for a dataset spec.
pub fn generate_recordings(spec: &SynthDatasetSpec) -> Vec<EcgRecording> {
    let mut subject_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let mut recordings = Vec::new();
    for s in 0..spec.n_subjects {
        let offset = spec.subject_bpm_sigma * gauss(&mut subject_rng);
        let amplitude = (spec.subject_amplitude_sigma * gauss(&mut subject_rng)).exp();
        for (e, (&emotion, &base)) in spec.emotion_bpm.iter().enumerate() {
            let bpm = (base + offset).clamp(40.0, 180.0);
            let ecg_spec = SynthEcgSpec {
                heart_rate_bpm: bpm,
                duration_s: spec.epochs_per_group as f64 * spec.epoch_seconds,
                fs_hz: 1000.0,
                qrs_amplitude: amplitude,
                noise_std: spec.noise_std,
                hum_50hz_amplitude: spec.hum_50hz_amplitude,
                drift_amplitude: spec.drift_amplitude,
                drift_freq_hz: 0.02,
                seed: derive_seed(spec.seed, (s as u64 + 1) * 64 + e as u64 + 1),
            };
            let (samples, _) = generate(&ecg_spec);
            recordings.push(EcgRecording {
                subject_id: spec.subject_id(s),
                emotion,
                samples,
                sampling_rate_hz: 1000.0,
            });
        }
    }
    recordings
}

/// Run the full conditioning + feature pipeline over a synthetic dataset.
pub fn generate_dataset(spec: &SynthDatasetSpec) -> Result<FeatureTable> {
    let params = WelchParams::default();
    let mut table = FeatureTable::new();
    for recording in generate_recordings(spec) {
        let epochs = dsp::condition_and_segment(&recording, spec.epoch_seconds)?;
        for epoch in &epochs {
            table.push(features::extract(epoch, &params)?);
        }
    }
    Ok(table)
}

/// Emit a synthetic dataset as one CSV file per subject-emotion recording,
/// in the layout described by `schema`, so the ingest stage can be exercised
/// end to end.
pub fn write_dataset_csv(
    spec: &SynthDatasetSpec,
    dir: &Path,
    schema: &IngestSchema,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for recording in generate_recordings(spec) {
        paths.push(crate::ingest::write_recording_csv(&recording, dir, schema)?);
    }
    Ok(paths)
}

/// Two interleaved Gaussian blobs in `dim` dimensions, classes centered at
/// `-separation/2` and `+separation/2` on every axis. Used as training data
/// for classifier sanity checks.
pub fn gaussian_blobs(
    n_per_class: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for class in 0..2u8 {
            let center = if class == 0 {
                -separation / 2.0
            } else {
                separation / 2.0
            };
            let row: Vec<f64> = (0..dim).map(|_| center + sigma * gauss(&mut rng)).collect();
            rows.push(row);
            labels.push(class);
        }
    }
    (Matrix::from_rows(&rows), labels)
}

/// Uniformly random matrix in `[-1, 1]`, for chance-level checks.
pub fn uniform_noise(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_flat(rows, cols, data)
}
