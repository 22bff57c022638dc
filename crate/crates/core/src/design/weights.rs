//! Frequency-dependent regularization weights.
//!
//! The leakage ratio `V = |H_occ| / |H_open G|` is smoothed over 1/6 octave and
//! mapped through a zero-mean log-normal density, so the penalty peaks where
//! leakage and desired signal have equal level.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scenario::{ForwardPath, MeasurementSet};
use crate::signals::{fractional_octave_smooth, magnitude_response, FrequencyGrid};

/// Octave fraction of the leakage-ratio smoother.
pub const SMOOTHING_FRACTION: f64 = 1.0 / 6.0;

/// Standard deviation of the log-normal weight: `sigma^2 = (ln 10 / 20) * beta`.
pub fn log_normal_sigma(beta: f64) -> f64 {
    (std::f64::consts::LN_10 / 20.0 * beta).sqrt()
}

/// Zero-mean log-normal density at `p`; zero at `p = 0`.
pub fn log_normal_weight(p: f64, sigma: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let z = p.ln() / sigma;
    (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * p * sigma)
}

/// Leakage ratio per bin from magnitude responses.
pub fn leakage_ratio(occ_mag: &[f64], open_mag: &[f64], g_mag: &[f64]) -> Result<Vec<f64>> {
    occ_mag
        .iter()
        .zip(open_mag.iter().zip(g_mag))
        .enumerate()
        .map(|(bin, (&occ, (&open, &g)))| {
            let desired = open * g;
            if desired > 0.0 {
                Ok(occ / desired)
            } else {
                Err(Error::ZeroDesiredMagnitude { bin })
            }
        })
        .collect()
}

/// Weights from a leakage ratio: smoothing, then the log-normal density.
pub fn weights_from_ratio(ratio: &[f64], beta: f64, grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let smoothed = fractional_octave_smooth(ratio, grid, SMOOTHING_FRACTION)?;
    let sigma = log_normal_sigma(beta);
    Ok(smoothed
        .iter()
        .map(|&p| log_normal_weight(p, sigma))
        .collect())
}

/// Leakage ratio `V` and weights `W` for one measurement set.
pub fn frequency_weights(
    set: &MeasurementSet,
    g: &ForwardPath,
    beta: f64,
    grid: &FrequencyGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    averaged_frequency_weights(std::slice::from_ref(set), g, beta, grid)
}

/// `V` and `W` from magnitude spectra averaged over several sets.
pub fn averaged_frequency_weights(
    sets: &[MeasurementSet],
    g: &ForwardPath,
    beta: f64,
    grid: &FrequencyGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no measurement sets".into()));
    }
    let n = grid.fft_size();
    let mut occ = vec![0.0; n];
    let mut open = vec![0.0; n];
    for set in sets {
        for (acc, m) in occ.iter_mut().zip(magnitude_response(&set.h_occ, grid)?) {
            *acc += m;
        }
        for (acc, m) in open.iter_mut().zip(magnitude_response(&set.h_open, grid)?) {
            *acc += m;
        }
    }
    let scale = 1.0 / sets.len() as f64;
    occ.iter_mut()
        .chain(open.iter_mut())
        .for_each(|x| *x *= scale);
    let g_mag = magnitude_response(&g.g, grid)?;
    let ratio = leakage_ratio(&occ, &open, &g_mag)?;
    let weights = weights_from_ratio(&ratio, beta, grid)?;
    Ok((ratio, weights))
}

/// Autocorrelation lags `r[m] = (1/L) sum_l W_l^2 cos(2 pi l m / L)` for `m < lags`.
fn weight_autocorrelation(weights: &[f64], lags: usize) -> Vec<f64> {
    let n = weights.len();
    let mut buf: Vec<Complex64> = weights.iter().map(|w| Complex64::new(w * w, 0.0)).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    (0..lags).map(|m| buf[m % n].re / n as f64).collect()
}

/// One `L_A x L_A` block of the real matrix `F^H W^H W F` with the DFT scaled by
/// `1/sqrt(L_FFT)`. Toeplitz; the identity when `W == 1`.
pub fn regularization_block(weights: &[f64], filter_length: usize) -> DMatrix<f64> {
    let r = weight_autocorrelation(weights, filter_length);
    DMatrix::from_fn(filter_length, filter_length, |i, j| r[i.abs_diff(j)])
}

/// Block-diagonal regularization matrix for `num_loudspeakers` identical blocks.
pub fn regularization_matrix(
    weights: &[f64],
    num_loudspeakers: usize,
    filter_length: usize,
) -> DMatrix<f64> {
    let block = regularization_block(weights, filter_length);
    let size = num_loudspeakers * filter_length;
    let mut m = DMatrix::zeros(size, size);
    for n in 0..num_loudspeakers {
        let o = n * filter_length;
        m.view_mut((o, o), (filter_length, filter_length))
            .copy_from(&block);
    }
    m
}

/// `||W F a||` evaluated in the frequency domain, DFT scaled by `1/sqrt(L_FFT)`.
pub fn weighted_penalty_norm(coefficients: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    let n = weights.len();
    let mut total = 0.0;
    for a in coefficients {
        let spec = crate::signals::spectrum(a, n)?;
        total += spec
            .iter()
            .zip(weights)
            .map(|(c, w)| w * w * c.norm_sqr())
            .sum::<f64>();
    }
    Ok((total / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::forward_path_ir;
    use crate::signals::ImpulseResponse;

    const FS: f64 = 16000.0;

    fn ir(x: &[f64]) -> ImpulseResponse {
        ImpulseResponse::new(x.to_vec(), FS).unwrap()
    }

    #[test]
    fn unit_ratio_gives_peak_weight() {
        let h = ir(&[0.9, 0.3, -0.1]);
        let set =
            MeasurementSet::new(ir(&[1.0, 0.0, 0.0]), h.clone(), h, vec![ir(&[1.0])]).unwrap();
        let g = forward_path_ir(0.0, 0, FS);
        let grid = FrequencyGrid::new(64, FS).unwrap();
        let (v, w) = frequency_weights(&set, &g, 1.0, &grid).unwrap();
        let sigma = (std::f64::consts::LN_10 / 20.0).sqrt();
        assert!((sigma - 0.33931).abs() < 1e-5);
        let peak = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        assert!((peak - 1.1756).abs() < 2e-4, "{peak}");
        for (x, y) in v.iter().zip(&w) {
            assert!((x - 1.0).abs() < 1e-12);
            assert!((y - peak).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_leakage_gives_zero_weight() {
        let grid = FrequencyGrid::new(16, FS).unwrap();
        let w = weights_from_ratio(&[0.0; 16], 1.0, &grid).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_unimodal_in_log_ratio() {
        let sigma = log_normal_sigma(1.0);
        // Oracle: density of ln p is Gaussian; weight = density(ln p) / p.
        // On a ramp of ln p the weight rises to its maximum at ln p = -sigma^2
        // and falls beyond; at p = 1 it exceeds every p with |ln p| >= 2 sigma.
        let peak = log_normal_weight(1.0, sigma);
        let ramp: Vec<f64> = (-40..=40).map(|k| (k as f64 * 0.05).exp()).collect();
        let w: Vec<f64> = ramp.iter().map(|&p| log_normal_weight(p, sigma)).collect();
        let argmax = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(w[..=argmax].windows(2).all(|p| p[0] <= p[1]));
        assert!(w[argmax..].windows(2).all(|p| p[0] >= p[1]));
        assert!((ramp[argmax].ln() + sigma * sigma).abs() <= 0.05);
        for (&p, &x) in ramp.iter().zip(&w) {
            if p.ln().abs() >= 2.0 * sigma {
                assert!(x < peak);
            }
        }
    }

    #[test]
    fn zero_desired_magnitude_names_bin() {
        let err = leakage_ratio(&[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroDesiredMagnitude { bin: 1 }));
    }

    #[test]
    fn unit_weights_give_identity() {
        let r = regularization_block(&[1.0; 32], 5);
        assert!((r - DMatrix::identity(5, 5)).abs().max() < 1e-14);
    }

    #[test]
    fn block_matches_dense_dft_product() {
        // Oracle: build F (scaled DFT) and W explicitly and form F^H W^2 F.
        let l = 16;
        let la = 4;
        let w: Vec<f64> = (0..l)
            .map(|k| 0.3 + ((k.min(l - k)) as f64 * 0.7).sin().abs())
            .collect();
        let mut dense = DMatrix::<f64>::zeros(la, la);
        for i in 0..la {
            for j in 0..la {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, wk) in w.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * k as f64 / l as f64;
                    let fi = Complex64::from_polar(1.0, ang * i as f64);
                    let fj = Complex64::from_polar(1.0, ang * j as f64);
                    acc += fi.conj() * wk * wk * fj;
                }
                assert!(acc.im.abs() < 1e-12);
                dense[(i, j)] = acc.re / l as f64;
            }
        }
        assert!((regularization_block(&w, la) - dense).abs().max() < 1e-12);
    }

    #[test]
    fn penalty_norm_matches_quadratic_form() {
        let w: Vec<f64> = (0..64)
            .map(|k| 1.0 + 0.5 * ((k.min(64 - k)) as f64 / 10.0).cos())
            .collect();
        let a = vec![vec![0.5, -0.25, 0.125], vec![1.0, 0.0, -1.0]];
        let r = regularization_matrix(&w, 2, 3);
        let stacked = nalgebra::DVector::from_iterator(6, a.iter().flatten().copied());
        let quad = (stacked.transpose() * &r * &stacked)[(0, 0)].sqrt();
        assert!((weighted_penalty_norm(&a, &w).unwrap() - quad).abs() < 1e-12);
    }
}
