use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::ExperimentError;

/// Linear-interpolation quantile with rank `h = (len − 1)·p/100` on the
/// sorted samples.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, ExperimentError> {
    let mut sorted = samples.to_vec();
    sort_checked(&mut sorted)?;
    percentile_sorted(&sorted, p)
}

/// Sorts in place, rejecting empty or non-finite input.
pub fn sort_checked(samples: &mut [f64]) -> Result<(), ExperimentError> {
    if samples.is_empty() {
        return Err(ExperimentError::EmptySamples);
    }
    if !samples.iter().all(|s| s.is_finite()) {
        return Err(ExperimentError::NonFiniteSample);
    }
    samples.sort_by(f64::total_cmp);
    Ok(())
}

/// [`percentile`] on already sorted, finite, non-empty samples.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64, ExperimentError> {
    if sorted.is_empty() {
        return Err(ExperimentError::EmptySamples);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(ExperimentError::PercentileRange(p));
    }
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let (a, b) = (sorted[lo], sorted[hi]);
    // the clamp keeps rounding from stepping past the next sample
    Ok((a + (h - lo as f64) * (b - a)).clamp(a, b))
}

/// One-sided power spectral density by Welch's method: Hann-windowed
/// segments of `segment` samples, half overlap, mean removed per segment.
/// Returns `(frequencies in Hz, PSD in units²/Hz)`.
pub fn welch_psd(
    signal: &[f64],
    sample_hz: f64,
    segment: usize,
) -> Result<(Vec<f64>, Vec<f64>), ExperimentError> {
    if segment < 2 || signal.len() < segment {
        return Err(ExperimentError::ShortSignal {
            needed: segment.max(2),
            got: signal.len(),
        });
    }
    let window: Vec<f64> = (0..segment)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / segment as f64;
            x.sin().powi(2)
        })
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let bins = segment / 2 + 1;
    let mut psd = vec![0.0; bins];
    let step = segment / 2;
    let mut count = 0usize;
    let mut start = 0;
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    while start + segment <= signal.len() {
        let seg = &signal[start..start + segment];
        let mean = seg.iter().sum::<f64>() / segment as f64;
        for (b, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let mut v = buf[k].norm_sqr();
            if k != 0 && !(segment.is_multiple_of(2) && k == segment / 2) {
                v *= 2.0;
            }
            *p += v;
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (sample_hz * window_power * count as f64);
    psd.iter_mut().for_each(|p| *p *= scale);
    let freqs = (0..bins)
        .map(|k| k as f64 * sample_hz / segment as f64)
        .collect();
    Ok((freqs, psd))
}
