//! Multidomain feature extraction: 22 features per epoch.
//!
//! Time-domain statistics use population (1/N) normalization and quantiles by
//! linear interpolation between order statistics. Frequency features come
//! from a Welch PSD of the epoch itself (Hann window, 50% overlap, mean
//! detrend per segment); the LF/HF bands are integrated on that grid by
//! trapezoid with interpolated endpoints. HRV features come from detected
//! R peaks; epochs with fewer than two peaks get an all-zero HRV block so
//! the vector keeps its dimensionality.

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::EcgEpoch;
use crate::error::{Error, Result};
use crate::ingest::{BinaryLabel, Emotion};
use crate::matrix::Matrix;

/// Frozen feature ordering. Selection indices and CSV columns refer to this
/// list; do not reorder.
pub const FEATURE_NAMES: [&str; 22] = [
    "mean",
    "std",
    "min",
    "max",
    "q1",
    "q3",
    "median",
    "skewness",
    "kurtosis",
    "abs_sum",
    "energy",
    "psd_mean",
    "psd_std",
    "psd_max",
    "total_power",
    "lf_power",
    "hf_power",
    "rr_mean",
    "rr_std",
    "heart_rate",
    "rr_min",
    "rr_max",
];

/// Number of features in the vector (excluding label and metadata).
pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// LF band on the epoch PSD, Hz.
pub const LF_BAND_HZ: (f64, f64) = (0.03, 0.15);
/// HF band on the epoch PSD, Hz.
pub const HF_BAND_HZ: (f64, f64) = (0.15, 0.4);

/// Welch estimator parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WelchParams {
    /// Segment length in samples; `None` means `min(N, 4096)`.
    pub segment_length: Option<usize>,
    /// Overlap fraction in `[0, 1)`.
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self {
            segment_length: None,
            overlap: 0.5,
        }
    }
}

const DEFAULT_SEGMENT_CAP: usize = 4096;

/// One-sided PSD estimate on a uniform frequency grid.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdEstimate {
    /// Linear interpolation of the PSD polyline at `f`.
    fn interp(&self, f: f64) -> f64 {
        let freqs = &self.frequencies;
        if f <= freqs[0] {
            return self.power[0];
        }
        if f >= freqs[freqs.len() - 1] {
            return self.power[freqs.len() - 1];
        }
        let j = freqs.partition_point(|&g| g <= f);
        let (f0, f1) = (freqs[j - 1], freqs[j]);
        let (p0, p1) = (self.power[j - 1], self.power[j]);
        p0 + (p1 - p0) * (f - f0) / (f1 - f0)
    }

    /// Trapezoidal band power over `[lo, hi]` with interpolated endpoints.
    pub fn band_power(&self, lo: f64, hi: f64) -> Result<f64> {
        let max = *self.frequencies.last().expect("non-empty grid");
        if hi > max + 1e-9 || lo < -1e-9 || hi <= lo {
            return Err(Error::BandOutsideGrid { lo, hi, max });
        }
        let lo = lo.max(self.frequencies[0]);
        let hi = hi.min(max);
        let mut points = vec![(lo, self.interp(lo))];
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            if *f > lo && *f < hi {
                points.push((*f, *p));
            }
        }
        points.push((hi, self.interp(hi)));
        let mut acc = 0.0;
        for w in points.windows(2) {
            acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        Ok(acc)
    }

    /// Integral of the PSD over the whole grid.
    pub fn total_power(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.frequencies.len() {
            acc += 0.5
                * (self.power[i - 1] + self.power[i])
                * (self.frequencies[i] - self.frequencies[i - 1]);
        }
        acc
    }
}

/// Detected R peaks and the RR intervals between them.
#[derive(Debug, Clone, PartialEq)]
pub struct RrSeries {
    /// Strictly increasing sample indices of accepted peaks.
    pub peak_indices: Vec<usize>,
    /// Intervals between consecutive peaks, seconds.
    pub rr_intervals: Vec<f64>,
}

/// One feature row: the 22 features plus label and epoch metadata.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: BinaryLabel,
    pub subject_id: String,
    pub emotion: Emotion,
    pub epoch_index: usize,
}

/// Centered moving average with window `2 * half + 1`, truncated at the ends.
fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// The 11 time-domain features, in [`FEATURE_NAMES`] order.
///
/// A constant epoch has zero standard deviation; skewness and kurtosis are
/// defined as 0 there rather than failing.
pub fn time_features(samples: &[f64]) -> [f64; 11] {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let q1 = percentile_sorted(&sorted, 0.25);
    let q3 = percentile_sorted(&sorted, 0.75);
    let median = percentile_sorted(&sorted, 0.5);

    let (skewness, kurtosis) = if std > 0.0 {
        let mut s3 = 0.0;
        let mut s4 = 0.0;
        for x in samples {
            let z = (x - mean) / std;
            let z2 = z * z;
            s3 += z2 * z;
            s4 += z2 * z2;
        }
        (s3 / n, s4 / n)
    } else {
        (0.0, 0.0)
    };

    let abs_sum = samples.iter().map(|x| x.abs()).sum::<f64>();
    let energy = samples.iter().map(|x| x * x).sum::<f64>();

    [
        mean, std, min, max, q1, q3, median, skewness, kurtosis, abs_sum, energy,
    ]
}

/// Welch PSD: averaged modified periodograms, one-sided, density scaling so
/// that the grid integral approximates the time-domain mean power.
pub fn welch_psd(samples: &[f64], fs: f64, params: &WelchParams) -> Result<PsdEstimate> {
    let n = samples.len();
    let seg_len = params.segment_length.unwrap_or(n.min(DEFAULT_SEGMENT_CAP));
    if seg_len > n || seg_len < 2 {
        return Err(Error::SegmentTooLong {
            segment: seg_len,
            signal: n,
        });
    }
    let overlap = ((seg_len as f64) * params.overlap).floor() as usize;
    let step = (seg_len - overlap).max(1);

    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / seg_len as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let n_bins = seg_len / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let mut fft_planner = FftPlanner::new();
    let fft = fft_planner.plan_fft_forward(seg_len);
    let mut buffer = vec![Complex64::new(0.0, 0.0); seg_len];

    let mut n_segments = 0usize;
    let mut start = 0usize;
    while start + seg_len <= n {
        let segment = &samples[start..start + seg_len];
        let seg_mean = segment.iter().sum::<f64>() / seg_len as f64;
        for (i, (x, w)) in segment.iter().zip(&window).enumerate() {
            buffer[i] = Complex64::new((x - seg_mean) * w, 0.0);
        }
        fft.process(&mut buffer);
        for (k, bin) in psd.iter_mut().enumerate() {
            let mag2 = buffer[k].norm_sqr();
            let mut scale = 1.0 / (fs * window_power);
            let nyquist_bin = seg_len % 2 == 0 && k == seg_len / 2;
            if k != 0 && !nyquist_bin {
                scale *= 2.0;
            }
            *bin += mag2 * scale;
        }
        n_segments += 1;
        start += step;
    }

    for bin in &mut psd {
        *bin /= n_segments as f64;
    }
    let frequencies: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * fs / seg_len as f64)
        .collect();
    Ok(PsdEstimate {
        frequencies,
        power: psd,
    })
}

/// The 6 frequency-domain features, in [`FEATURE_NAMES`] order.
pub fn freq_features(psd: &PsdEstimate) -> Result<[f64; 6]> {
    let n = psd.power.len() as f64;
    let mean = psd.power.iter().sum::<f64>() / n;
    let var = psd
        .power
        .iter()
        .map(|p| (p - mean) * (p - mean))
        .sum::<f64>()
        / n;
    let max = psd.power.iter().fold(0.0f64, |m, p| m.max(*p));
    let total = psd.total_power();
    let lf = psd.band_power(LF_BAND_HZ.0, LF_BAND_HZ.1)?;
    let hf = psd.band_power(HF_BAND_HZ.0, HF_BAND_HZ.1)?;
    Ok([mean, var.sqrt(), max, total, lf, hf])
}

/// R-peak detection: squared-derivative emphasis (after a 10 ms smoothing
/// box that keeps broadband noise out of the difference), 150 ms
/// moving-average envelope, threshold at half the 98th percentile of the
/// envelope, 200 ms refractory period. The threshold is relative, so
/// detection is invariant to amplitude scaling.
pub fn detect_r_peaks(samples: &[f64], fs: f64) -> RrSeries {
    let empty = RrSeries {
        peak_indices: Vec::new(),
        rr_intervals: Vec::new(),
    };
    if samples.len() < 3 || !(fs > 0.0) {
        return empty;
    }

    let smoothed = moving_average(samples, ((0.01 * fs).round() as usize / 2).max(1));

    // Squared first difference.
    let energy: Vec<f64> = smoothed
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d
        })
        .collect();

    // Centered moving average, 150 ms window.
    let envelope = moving_average(&energy, ((0.15 * fs).round() as usize / 2).max(1));

    let mut sorted = envelope.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = 0.5 * percentile_sorted(&sorted, 0.98);
    if !(threshold > 0.0) {
        return empty;
    }

    // Local maxima above threshold, then refractory merge keeping the
    // stronger envelope.
    let refractory = (0.2 * fs).round() as usize;
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..envelope.len() - 1 {
        if envelope[i] > threshold
            && envelope[i] > envelope[i - 1]
            && envelope[i] >= envelope[i + 1]
        {
            match candidates.last() {
                Some(&last) if i - last < refractory => {
                    if envelope[i] > envelope[last] {
                        *candidates.last_mut().unwrap() = i;
                    }
                }
                _ => candidates.push(i),
            }
        }
    }

    // Refine each candidate to the strongest signal excursion nearby. The
    // envelope maximum can sit ~half the smoothing window before the QRS, so
    // the search reaches 100 ms to each side.
    let refine = (0.1 * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for c in candidates {
        let lo = c.saturating_sub(refine);
        let hi = (c + refine + 1).min(samples.len());
        let mut best = lo;
        for j in lo..hi {
            if samples[j].abs() > samples[best].abs() {
                best = j;
            }
        }
        match peaks.last() {
            Some(&last) if best <= last || best - last < refractory => {
                if samples[best].abs() > samples[last].abs() && best > last {
                    *peaks.last_mut().unwrap() = best;
                }
            }
            _ => peaks.push(best),
        }
    }

    let rr_intervals: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs)
        .collect();
    RrSeries {
        peak_indices: peaks,
        rr_intervals,
    }
}

/// The 5 HRV features, in [`FEATURE_NAMES`] order. Fewer than one interval
/// (i.e. fewer than two peaks) yields five zeros.
pub fn hrv_features(rr: &RrSeries) -> [f64; 5] {
    let intervals = &rr.rr_intervals;
    if intervals.is_empty() {
        return [0.0; 5];
    }
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let var = intervals
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    let min = intervals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = intervals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    [mean, var.sqrt(), 60.0 / mean, min, max]
}

/// Full 22-feature extraction for one epoch.
pub fn extract(epoch: &EcgEpoch, params: &WelchParams) -> Result<FeatureVector> {
    let time = time_features(&epoch.samples);
    let psd = welch_psd(&epoch.samples, epoch.sampling_rate_hz, params)?;
    let freq = freq_features(&psd)?;
    let rr = detect_r_peaks(&epoch.samples, epoch.sampling_rate_hz);
    let hrv = hrv_features(&rr);

    let mut values = Vec::with_capacity(N_FEATURES);
    values.extend_from_slice(&time);
    values.extend_from_slice(&freq);
    values.extend_from_slice(&hrv);
    debug_assert_eq!(values.len(), N_FEATURES);

    Ok(FeatureVector {
        values,
        label: epoch.label,
        subject_id: epoch.subject_id.clone(),
        emotion: epoch.emotion,
        epoch_index: epoch.epoch_index,
    })
}

/// In-memory feature matrix with metadata; the interchange format between
/// extraction and evaluation.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: FeatureVector) {
        assert_eq!(row.values.len(), N_FEATURES, "feature vector length");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    /// Feature matrix (rows x 22).
    pub fn matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| r.values.clone()).collect();
        if rows.is_empty() {
            Matrix::zeros(0, N_FEATURES)
        } else {
            Matrix::from_rows(&rows)
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label.value()).collect()
    }

    /// Write the table as CSV: feature names, then subject_id, emotion,
    /// label, epoch_index. Float formatting is shortest-round-trip, so a
    /// write/read cycle reproduces values bit for bit.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&FEATURE_NAMES.join(","));
        out.push_str(",subject_id,emotion,label,epoch_index\n");
        for row in &self.rows {
            for v in &row.values {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.subject_id,
                row.emotion,
                row.label.value(),
                row.epoch_index
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let headers = reader.headers()?.clone();
        let expected: Vec<&str> = FEATURE_NAMES
            .iter()
            .copied()
            .chain(["subject_id", "emotion", "label", "epoch_index"])
            .collect();
        let actual: Vec<&str> = headers.iter().collect();
        if actual != expected {
            return Err(Error::InvalidConfig(format!(
                "{}: unexpected feature CSV header",
                path.display()
            )));
        }
        let mut table = FeatureTable::new();
        for record in reader.records() {
            let record = record?;
            let mut values = Vec::with_capacity(N_FEATURES);
            for i in 0..N_FEATURES {
                let cell = record.get(i).unwrap_or("");
                values.push(cell.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("{}: bad feature value `{cell}`", path.display()))
                })?);
            }
            let subject_id = record.get(N_FEATURES).unwrap_or("").to_string();
            let emotion: Emotion = record.get(N_FEATURES + 1).unwrap_or("").parse()?;
            let label_value: u8 = record
                .get(N_FEATURES + 2)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::InvalidConfig("bad label".to_string()))?;
            let epoch_index: usize = record
                .get(N_FEATURES + 3)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::InvalidConfig("bad epoch_index".to_string()))?;
            table.push(FeatureVector {
                values,
                label: BinaryLabel::from_value(label_value)?,
                subject_id,
                emotion,
                epoch_index,
            });
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BinaryLabel;
    use crate::synth::{generate, SynthEcgSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn epoch_from(samples: Vec<f64>, fs: f64) -> EcgEpoch {
        EcgEpoch {
            samples,
            sampling_rate_hz: fs,
            subject_id: "s1".to_string(),
            emotion: Emotion::Anger,
            label: BinaryLabel::Negative,
            epoch_index: 0,
        }
    }

    #[test]
    fn time_features_closed_form() {
        let f = time_features(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f[0], 2.5); // mean
        assert!((f[1] - 1.25f64.sqrt()).abs() < 1e-15); // std
        assert_eq!(f[2], 1.0); // min
        assert_eq!(f[3], 4.0); // max
        assert_eq!(f[4], 1.75); // q1
        assert_eq!(f[5], 3.25); // q3
        assert_eq!(f[6], 2.5); // median
        assert_eq!(f[9], 10.0); // abs_sum
        assert_eq!(f[10], 30.0); // energy
    }

    #[test]
    fn symmetric_sequences_have_zero_skewness() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let f = time_features(&x);
        assert!(f[7].abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let half: Vec<f64> = (0..500).map(|_| rng.gen_range(0.1..5.0)).collect();
        let sym: Vec<f64> = half
            .iter()
            .cloned()
            .chain(half.iter().map(|v| -v))
            .collect();
        let f = time_features(&sym);
        assert!(f[7].abs() < 1e-12, "skewness {}", f[7]);
    }

    #[test]
    fn gaussian_kurtosis_near_three() {
        // Non-excess kurtosis of a Gaussian is 3; Monte-Carlo on 10k draws.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..10_000)
            .map(|_| crate::rngutil::gauss(&mut rng))
            .collect();
        let f = time_features(&x);
        assert!(f[8] > 2.7 && f[8] < 3.3, "kurtosis {}", f[8]);
    }

    #[test]
    fn constant_epoch_degenerates_to_zero_moments() {
        let f = time_features(&[5.0; 100]);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[7], 0.0);
        assert_eq!(f[8], 0.0);
    }

    #[test]
    fn welch_peak_lands_on_planted_tone() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..10_000)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin())
            .collect();
        let psd = welch_psd(&x, fs, &WelchParams::default()).unwrap();
        let argmax = psd
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let nearest = psd
            .frequencies
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 10.0).abs().partial_cmp(&(b.1 - 10.0).abs()).unwrap())
            .unwrap()
            .0;
        assert!(
            (argmax as i64 - nearest as i64).abs() <= 1,
            "argmax {argmax} nearest {nearest}"
        );
    }

    #[test]
    fn welch_parseval_on_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..10_000)
            .map(|_| crate::rngutil::gauss(&mut rng))
            .collect();
        let psd = welch_psd(&x, 1000.0, &WelchParams::default()).unwrap();
        let total = psd.total_power();
        assert!(total > 0.8 && total < 1.2, "total power {total}");
    }

    #[test]
    fn welch_zero_signal_zero_power() {
        let psd = welch_psd(&vec![0.0; 8000], 1000.0, &WelchParams::default()).unwrap();
        assert!(psd.power.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn welch_segment_too_long() {
        let err = welch_psd(
            &[0.0; 100],
            1000.0,
            &WelchParams {
                segment_length: Some(101),
                overlap: 0.5,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::SegmentTooLong { .. }));
    }

    #[test]
    fn band_integrals_on_constant_psd() {
        let frequencies: Vec<f64> = (0..=5000).map(|k| k as f64 * 0.1).collect();
        let c = 2.0;
        let psd = PsdEstimate {
            power: vec![c; frequencies.len()],
            frequencies,
        };
        let feats = freq_features(&psd).unwrap();
        assert!((feats[3] - 500.0 * c).abs() < 1e-6 * 500.0 * c); // total
        assert!((feats[4] - 0.12 * c).abs() < 1e-6, "lf {}", feats[4]);
        assert!((feats[5] - 0.25 * c).abs() < 1e-6, "hf {}", feats[5]);
    }

    #[test]
    fn spike_at_tenth_hz_is_all_lf() {
        let frequencies: Vec<f64> = (0..=100).map(|k| k as f64 / 20.0).collect();
        let mut power = vec![0.0; frequencies.len()];
        power[2] = 10.0; // exactly 0.1 Hz
        let psd = PsdEstimate { frequencies, power };
        let lf = psd.band_power(0.03, 0.15).unwrap();
        let hf = psd.band_power(0.15, 0.4).unwrap();
        assert_eq!(hf, 0.0);
        assert!(
            (lf - psd.total_power()).abs() < 1e-12,
            "lf carries the full mass"
        );
    }

    #[test]
    fn band_outside_grid_rejected() {
        let psd = PsdEstimate {
            frequencies: vec![0.0, 0.1, 0.2],
            power: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(
            psd.band_power(0.15, 0.4),
            Err(Error::BandOutsideGrid { .. })
        ));
    }

    #[test]
    fn two_tone_lf_hf_ratio() {
        // 0.1 Hz at amplitude 1 and 0.3 Hz at amplitude 0.5 need a fine
        // grid, so sample 400 s at 20 Hz: resolution ~5 mHz.
        let fs = 20.0;
        let n = 8000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 0.1 * t).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * 0.3 * t).sin()
            })
            .collect();
        let psd = welch_psd(&x, fs, &WelchParams::default()).unwrap();
        let lf = psd.band_power(0.03, 0.15).unwrap();
        let hf = psd.band_power(0.15, 0.4).unwrap();
        let ratio = lf / hf;
        assert!((ratio - 4.0).abs() / 4.0 < 0.2, "LF/HF {ratio}");
    }

    #[test]
    fn r_peaks_at_sixty_bpm() {
        let (samples, _) = generate(&SynthEcgSpec {
            heart_rate_bpm: 60.0,
            duration_s: 10.0,
            noise_std: 0.02,
            seed: 2,
            ..Default::default()
        });
        let rr = detect_r_peaks(&samples, 1000.0);
        assert!(
            rr.peak_indices.len() == 9 || rr.peak_indices.len() == 10,
            "{} peaks",
            rr.peak_indices.len()
        );
        for interval in &rr.rr_intervals {
            assert!(*interval >= 0.99 && *interval <= 1.01, "RR {interval}");
        }
    }

    #[test]
    fn r_peaks_zero_signal() {
        let rr = detect_r_peaks(&vec![0.0; 10_000], 1000.0);
        assert!(rr.peak_indices.is_empty());
        assert!(rr.rr_intervals.is_empty());
    }

    #[test]
    fn r_peaks_honor_refractory_at_180_bpm() {
        let (samples, truth) = generate(&SynthEcgSpec {
            heart_rate_bpm: 180.0,
            duration_s: 10.0,
            noise_std: 0.02,
            seed: 5,
            ..Default::default()
        });
        let rr = detect_r_peaks(&samples, 1000.0);
        for interval in &rr.rr_intervals {
            assert!(*interval >= 0.2, "RR {interval} violates refractory");
        }
        let diff = (rr.peak_indices.len() as i64 - truth.len() as i64).abs();
        assert!(
            diff <= 1,
            "found {} of {}",
            rr.peak_indices.len(),
            truth.len()
        );
    }

    #[test]
    fn hrv_closed_forms() {
        let rr = RrSeries {
            peak_indices: vec![0, 1000, 2000, 3000],
            rr_intervals: vec![1.0, 1.0, 1.0],
        };
        assert_eq!(hrv_features(&rr), [1.0, 0.0, 60.0, 1.0, 1.0]);

        let empty = RrSeries {
            peak_indices: vec![500],
            rr_intervals: vec![],
        };
        assert_eq!(hrv_features(&empty), [0.0; 5]);

        let rr = RrSeries {
            peak_indices: vec![0, 500, 1500],
            rr_intervals: vec![0.5, 1.0],
        };
        let f = hrv_features(&rr);
        assert_eq!(f[0], 0.75);
        assert_eq!(f[2], 80.0);
        assert_eq!(f[3], 0.5);
        assert_eq!(f[4], 1.0);
    }

    #[test]
    fn extract_zero_epoch_is_all_zero() {
        let epoch = epoch_from(vec![0.0; 10_000], 1000.0);
        let fv = extract(&epoch, &WelchParams::default()).unwrap();
        assert_eq!(fv.values.len(), N_FEATURES);
        assert!(fv.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extract_recovers_heart_rate() {
        let (samples, _) = generate(&SynthEcgSpec {
            heart_rate_bpm: 72.0,
            duration_s: 10.0,
            noise_std: 0.02,
            seed: 3,
            ..Default::default()
        });
        let fv = extract(&epoch_from(samples, 1000.0), &WelchParams::default()).unwrap();
        let hr = fv.values[19];
        assert!(hr > 69.0 && hr < 75.0, "heart rate {hr}");
    }

    #[test]
    fn extract_is_deterministic() {
        let (samples, _) = generate(&SynthEcgSpec {
            noise_std: 0.05,
            seed: 8,
            ..Default::default()
        });
        let a = extract(
            &epoch_from(samples.clone(), 1000.0),
            &WelchParams::default(),
        )
        .unwrap();
        let b = extract(&epoch_from(samples, 1000.0), &WelchParams::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn amplitude_scaling_behaves_per_feature() {
        let (samples, _) = generate(&SynthEcgSpec {
            heart_rate_bpm: 66.0,
            duration_s: 10.0,
            noise_std: 0.03,
            seed: 12,
            ..Default::default()
        });
        let c = 3.7;
        let scaled: Vec<f64> = samples.iter().map(|x| c * x).collect();
        let base = extract(&epoch_from(samples, 1000.0), &WelchParams::default()).unwrap();
        let scld = extract(&epoch_from(scaled, 1000.0), &WelchParams::default()).unwrap();

        let linear = [0usize, 1, 2, 3, 4, 5, 6, 9]; // mean..median, abs_sum
        let quadratic = [10usize, 11, 12, 13, 14, 15, 16]; // energy + PSD block
        let invariant = [7usize, 8, 17, 18, 19, 20, 21]; // shape + HRV
        for &i in &linear {
            let expected = c * base.values[i];
            assert!(
                (scld.values[i] - expected).abs() <= 1e-9 * expected.abs().max(1e-12),
                "feature {i}"
            );
        }
        for &i in &quadratic {
            let expected = c * c * base.values[i];
            assert!(
                (scld.values[i] - expected).abs() <= 1e-9 * expected.abs().max(1e-12),
                "feature {i}"
            );
        }
        for &i in &invariant {
            assert!(
                (scld.values[i] - base.values[i]).abs() <= 1e-9 * base.values[i].abs().max(1e-9),
                "feature {i}: {} vs {}",
                scld.values[i],
                base.values[i]
            );
        }
    }

    #[test]
    fn band_powers_never_exceed_total_power() {
        for seed in 0..10u64 {
            let (samples, _) = generate(&SynthEcgSpec {
                heart_rate_bpm: 60.0 + 7.0 * seed as f64,
                duration_s: 10.0,
                noise_std: 0.1,
                hum_50hz_amplitude: 0.2,
                drift_amplitude: 0.2,
                seed,
                ..Default::default()
            });
            let fv = extract(&epoch_from(samples, 1000.0), &WelchParams::default()).unwrap();
            let (total, lf, hf) = (fv.values[14], fv.values[15], fv.values[16]);
            assert!(lf >= 0.0 && hf >= 0.0);
            assert!(
                total >= lf + hf - 1e-9 * total.abs().max(1e-12),
                "total {total} < lf {lf} + hf {hf}"
            );
        }
    }

    #[test]
    fn quantile_ordering_holds_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.gen_range(2..200);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let f = time_features(&x);
            assert!(f[2] <= f[4] && f[4] <= f[6] && f[6] <= f[5] && f[5] <= f[3]);
        }
    }

    #[test]
    fn feature_table_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (samples, _) = generate(&SynthEcgSpec {
            noise_std: 0.05,
            seed: 21,
            ..Default::default()
        });
        let mut table = FeatureTable::new();
        table.push(extract(&epoch_from(samples, 1000.0), &WelchParams::default()).unwrap());
        let path = dir.path().join("features.csv");
        table.write_csv(&path).unwrap();
        let back = FeatureTable::read_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        for (a, b) in back.rows()[0].values.iter().zip(&table.rows()[0].values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.rows()[0].subject_id, "s1");
        assert_eq!(back.rows()[0].emotion, Emotion::Anger);
    }
}
