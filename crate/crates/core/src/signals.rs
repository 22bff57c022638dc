//! Discrete-time primitives: impulse responses, convolution, delays and
//! magnitude responses on a DFT grid.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite impulse response of a polynomial transfer function in the delay operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl ImpulseResponse {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput(
                "impulse response must have at least one sample".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at index {i}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid sample rate {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Unit impulse.
    pub fn delta(sample_rate_hz: f64) -> Self {
        Self {
            samples: vec![1.0],
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self {
            samples: vec![0.0; len.max(1)],
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Copy of the samples zero-padded (or truncated) to `len`.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        pad_to(&self.samples, len)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * factor).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub(crate) fn check_rate(&self, other: &Self) -> Result<()> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.sample_rate_hz,
                other.sample_rate_hz,
            ));
        }
        Ok(())
    }
}

pub(crate) fn pad_to(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let n = x.len().min(len);
    out[..n].copy_from_slice(&x[..n]);
    out
}

/// Full linear convolution of two coefficient slices.
pub fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

pub fn convolve(a: &ImpulseResponse, b: &ImpulseResponse) -> Result<ImpulseResponse> {
    a.check_rate(b)?;
    Ok(ImpulseResponse {
        samples: convolve_slices(&a.samples, &b.samples),
        sample_rate_hz: a.sample_rate_hz,
    })
}

/// Toeplitz convolution matrix of shape `(len(h) + num_cols - 1) x num_cols`.
///
/// Column `j` holds `h` shifted down by `j` rows, so `matrix * x == h * x`.
pub fn convolution_matrix(h: &[f64], num_cols: usize) -> DMatrix<f64> {
    assert!(
        num_cols >= 1,
        "convolution matrix needs at least one column"
    );
    let rows = h.len() + num_cols - 1;
    let mut m = DMatrix::zeros(rows, num_cols);
    for j in 0..num_cols {
        for (i, &x) in h.iter().enumerate() {
            m[(i + j, j)] = x;
        }
    }
    m
}

/// Prepends `d` zeros.
pub fn delay(h: &ImpulseResponse, d: usize) -> ImpulseResponse {
    let mut samples = vec![0.0; d];
    samples.extend_from_slice(&h.samples);
    ImpulseResponse {
        samples,
        sample_rate_hz: h.sample_rate_hz,
    }
}

/// DFT grid with `fft_size` bins at angular frequencies `2*pi*l*fs/fft_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    fft_size: usize,
    sample_rate_hz: f64,
}

impl FrequencyGrid {
    pub fn new(fft_size: usize, sample_rate_hz: f64) -> Result<Self> {
        if fft_size == 0 {
            return Err(Error::InvalidInput("FFT size must be positive".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "invalid sample rate {sample_rate_hz}"
            )));
        }
        Ok(Self {
            fft_size,
            sample_rate_hz,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate_hz / self.fft_size as f64
    }

    pub fn frequency_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz / self.fft_size as f64
    }

    pub fn angular_frequency(&self, bin: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz(bin)
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        (0..self.fft_size).map(|l| self.frequency_hz(l)).collect()
    }
}

/// Complex spectrum of `h` zero-padded to the grid size.
pub fn spectrum(h: &[f64], fft_size: usize) -> Result<Vec<Complex64>> {
    if h.len() > fft_size {
        return Err(Error::ResponseTooLong {
            len: h.len(),
            fft_size,
        });
    }
    let mut buf: Vec<Complex64> = pad_to(h, fft_size)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    FftPlanner::new()
        .plan_fft_forward(fft_size)
        .process(&mut buf);
    Ok(buf)
}

/// `|H(w_l)|` for every bin of the grid.
pub fn magnitude_response(h: &ImpulseResponse, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    if h.sample_rate_hz != grid.sample_rate_hz {
        return Err(Error::SampleRateMismatch(
            h.sample_rate_hz,
            grid.sample_rate_hz,
        ));
    }
    Ok(spectrum(&h.samples, grid.fft_size)?
        .iter()
        .map(|c| c.norm())
        .collect())
}

/// Rectangular fractional-octave smoothing of a magnitude response.
///
/// Each bin up to `fft_size / 2` is replaced by the mean over bins whose
/// frequency lies in `[f * 2^(-fraction/2), f * 2^(fraction/2)]`, restricted to
/// bins `1..=fft_size/2`. DC and Nyquist pass through and the upper half mirrors
/// the lower half.
pub fn fractional_octave_smooth(
    mag: &[f64],
    grid: &FrequencyGrid,
    fraction: f64,
) -> Result<Vec<f64>> {
    let n = grid.fft_size;
    if mag.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "magnitude has {} bins, grid has {n}",
            mag.len()
        )));
    }
    if !(fraction.is_finite() && fraction > 0.0) {
        return Err(Error::InvalidInput(format!(
            "invalid octave fraction {fraction}"
        )));
    }
    if let Some((bin, &value)) = mag.iter().enumerate().find(|(_, &x)| !(x >= 0.0)) {
        return Err(Error::NegativeMagnitude { bin, value });
    }

    let half = n / 2;
    let mut out = mag.to_vec();
    if half == 0 {
        return Ok(out);
    }
    // prefix[k] = sum of mag[1..k]
    let mut prefix = vec![0.0; half + 2];
    for k in 1..=half {
        prefix[k + 1] = prefix[k] + mag[k];
    }
    let df = grid.bin_width_hz();
    let lo_factor = 2f64.powf(-fraction / 2.0);
    let hi_factor = 2f64.powf(fraction / 2.0);
    let nyquist_bin = if n % 2 == 0 { Some(half) } else { None };

    for l in 1..=half {
        if Some(l) == nyquist_bin {
            continue;
        }
        let f = grid.frequency_hz(l);
        let (lo, hi) = (f * lo_factor, f * hi_factor);
        let mut k_lo = ((lo / df).ceil() as usize).max(1);
        while k_lo > 1 && (k_lo - 1) as f64 * df >= lo {
            k_lo -= 1;
        }
        while (k_lo as f64) * df < lo {
            k_lo += 1;
        }
        let mut k_hi = ((hi / df).floor() as usize).min(half);
        while k_hi < half && (k_hi + 1) as f64 * df <= hi {
            k_hi += 1;
        }
        while k_hi as f64 * df > hi {
            k_hi -= 1;
        }
        let (k_lo, k_hi) = (k_lo.min(l), k_hi.max(l));
        out[l] = (prefix[k_hi + 1] - prefix[k_lo]) / (k_hi - k_lo + 1) as f64;
    }
    for l in half + 1..n {
        out[l] = out[n - l];
    }
    Ok(out)
}

/// Smallest power of two that is at least `n`.
pub fn next_power_of_two(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FS: f64 = 16000.0;

    fn ir(x: &[f64]) -> ImpulseResponse {
        ImpulseResponse::new(x.to_vec(), FS).unwrap()
    }

    #[test]
    fn convolve_examples() {
        assert_eq!(
            convolve(&ir(&[1.0]), &ir(&[3.0, 4.0])).unwrap().samples(),
            &[3.0, 4.0]
        );
        assert_eq!(
            convolve(&ir(&[1.0, 1.0]), &ir(&[1.0, -1.0]))
                .unwrap()
                .samples(),
            &[1.0, 0.0, -1.0]
        );
        assert_eq!(
            convolve(&ir(&[1.0, 2.0]), &ir(&[3.0, 0.0, 1.0]))
                .unwrap()
                .samples(),
            &[3.0, 6.0, 1.0, 2.0]
        );
    }

    #[test]
    fn convolve_rejects_rate_mismatch() {
        let b = ImpulseResponse::new(vec![1.0], 48000.0).unwrap();
        assert!(matches!(
            convolve(&ir(&[1.0]), &b),
            Err(Error::SampleRateMismatch(..))
        ));
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(ImpulseResponse::new(vec![], FS).is_err());
        assert!(ImpulseResponse::new(vec![1.0, f64::NAN], FS).is_err());
        assert!(ImpulseResponse::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn convolution_matrix_layout() {
        let m = convolution_matrix(&[1.0, 2.0], 2);
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 2.0])
        );
        assert_eq!(convolution_matrix(&[1.0], 3), DMatrix::identity(3, 3));
        let y =
            convolution_matrix(&[1.0, 0.0, -1.0], 2) * nalgebra::DVector::from_vec(vec![2.0, 3.0]);
        assert_eq!(y.as_slice(), &[2.0, 3.0, -2.0, -3.0]);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(delay(&ir(&[1.0, 2.0]), 2).samples(), &[0.0, 0.0, 1.0, 2.0]);
        assert_eq!(delay(&ir(&[5.0]), 0).samples(), &[5.0]);
    }

    #[test]
    fn magnitude_examples() {
        let grid = FrequencyGrid::new(4, FS).unwrap();
        for v in magnitude_response(&ir(&[1.0]), &grid).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
        for v in magnitude_response(&ir(&[0.0, 1.0]), &grid).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
        let m = magnitude_response(&ir(&[1.0, 1.0]), &grid).unwrap();
        let expected = [2.0, 2f64.sqrt(), 0.0, 2f64.sqrt()];
        for (a, b) in m.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn magnitude_rejects_long_response() {
        let grid = FrequencyGrid::new(2, FS).unwrap();
        assert!(matches!(
            magnitude_response(&ir(&[1.0, 2.0, 3.0]), &grid),
            Err(Error::ResponseTooLong { .. })
        ));
    }

    #[test]
    fn delay_is_all_pass() {
        let grid = FrequencyGrid::new(64, FS).unwrap();
        let h = ir(&[0.3, -1.2, 0.7, 0.05]);
        let a = magnitude_response(&h, &grid).unwrap();
        let b = magnitude_response(&delay(&h, 9), &grid).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothing_constant_and_negative() {
        let grid = FrequencyGrid::new(256, FS).unwrap();
        let c = vec![2.5; 256];
        assert_eq!(fractional_octave_smooth(&c, &grid, 1.0 / 6.0).unwrap(), c);
        let mut bad = c.clone();
        bad[7] = -1.0;
        assert!(matches!(
            fractional_octave_smooth(&bad, &grid, 1.0 / 6.0),
            Err(Error::NegativeMagnitude { bin: 7, .. })
        ));
    }

    #[test]
    fn smoothing_spike_at_one_khz() {
        let grid = FrequencyGrid::new(1024, FS).unwrap();
        let spike_bin = 64; // 1000 Hz at 15.625 Hz spacing
        let mut mag = vec![1.0; 1024];
        mag[spike_bin] = 9.0;
        mag[1024 - spike_bin] = 9.0;
        let out = fractional_octave_smooth(&mag, &grid, 1.0 / 6.0).unwrap();

        // Oracle: enumerate bins whose centre frequency falls in the band.
        let lo = 1000.0 * 2f64.powf(-1.0 / 12.0);
        let hi = 1000.0 * 2f64.powf(1.0 / 12.0);
        let bins: Vec<usize> = (1..=512)
            .filter(|&k| {
                let f = k as f64 * 15.625;
                f >= lo && f <= hi
            })
            .collect();
        assert_eq!(bins.first(), Some(&61));
        assert_eq!(bins.last(), Some(&67));
        assert!(bins
            .iter()
            .all(|&k| (940.0..1060.0).contains(&(k as f64 * 15.625))));
        let mean = bins.iter().map(|&k| mag[k]).sum::<f64>() / bins.len() as f64;
        assert_abs_diff_eq!(out[spike_bin], mean, epsilon = 1e-14);
        assert_abs_diff_eq!(out[spike_bin], 15.0 / 7.0, epsilon = 1e-14);
        assert!(out.iter().all(|&x| x <= 9.0));
        assert_eq!(out[1024 - spike_bin], out[spike_bin]);
    }
}
