//! Aided and desired transfer functions, the ERB-weighted auditory spectral
//! distance and a time-domain simulation of the hearing-device signal chain.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::design::{frequency_weights, DesignConfig, EqualizerFilter};
use crate::error::{Error, Result};
use crate::scenario::{ForwardPath, MeasurementSet, Scenario};
use crate::signals::{
    convolve_slices, magnitude_response, next_power_of_two, FrequencyGrid, ImpulseResponse,
};

/// Lower edge of the evaluation band.
pub const DEFAULT_F_LOW_HZ: f64 = 200.0;
/// Upper edge of the evaluation band.
pub const DEFAULT_F_UP_HZ: f64 = 8000.0;

fn check_filter(set: &MeasurementSet, coefficients: &[Vec<f64>]) -> Result<()> {
    if coefficients.len() != set.num_loudspeakers() {
        return Err(Error::DimensionMismatch(format!(
            "filter has {} loudspeakers, measurement set has {}",
            coefficients.len(),
            set.num_loudspeakers()
        )));
    }
    Ok(())
}

/// `h_aid = sum_n d_n * a_n * g * h_m + h_occ` for raw coefficient vectors.
pub fn aided_tf_from_coefficients(
    set: &MeasurementSet,
    g: &ForwardPath,
    coefficients: &[Vec<f64>],
) -> Result<ImpulseResponse> {
    check_filter(set, coefficients)?;
    set.h_m.check_rate(&g.g)?;
    let mic_path = convolve_slices(g.g.samples(), set.h_m.samples());
    let mut acc: Vec<f64> = Vec::new();
    for (d, a) in set.d.iter().zip(coefficients) {
        let branch = convolve_slices(&convolve_slices(d.samples(), a), &mic_path);
        if acc.len() < branch.len() {
            acc.resize(branch.len(), 0.0);
        }
        acc.iter_mut().zip(&branch).for_each(|(x, y)| *x += y);
    }
    if acc.len() < set.h_occ.len() {
        acc.resize(set.h_occ.len(), 0.0);
    }
    acc.iter_mut()
        .zip(set.h_occ.samples())
        .for_each(|(x, y)| *x += y);
    ImpulseResponse::new(acc, set.sample_rate_hz())
}

pub fn aided_tf(
    set: &MeasurementSet,
    g: &ForwardPath,
    filter: &EqualizerFilter,
) -> Result<ImpulseResponse> {
    aided_tf_from_coefficients(set, g, filter.coefficients())
}

/// `h_des = g * h_open`.
pub fn desired_tf(set: &MeasurementSet, g: &ForwardPath) -> Result<ImpulseResponse> {
    crate::signals::convolve(&g.g, &set.h_open)
}

/// Equivalent rectangular bandwidth in Hz, `24.7 (4.37 f_kHz + 1)`.
pub fn erb_hz(f_hz: f64) -> f64 {
    24.7 * (4.37 * f_hz / 1000.0 + 1.0)
}

/// Inverse-ERB weights on bins with `f_low <= f <= f_up`, normalized to sum to one.
pub fn erb_weights(grid: &FrequencyGrid, f_low: f64, f_up: f64) -> Result<Vec<f64>> {
    if !(f_low > 0.0 && f_low < f_up && f_up <= grid.sample_rate_hz() / 2.0) {
        return Err(Error::InvalidInput(format!(
            "band [{f_low}, {f_up}] Hz must satisfy 0 < f_low < f_up <= fs/2"
        )));
    }
    let mut w: Vec<f64> = (0..grid.fft_size())
        .map(|l| {
            let f = grid.frequency_hz(l);
            if f >= f_low && f <= f_up {
                1.0 / erb_hz(f)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Err(Error::EmptyBand { f_low, f_up });
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// `sum_l F_l |10 log10(|H_aid|^2 / |H_des|^2)|` from magnitude responses.
pub fn spectral_distance_from_magnitudes(
    aid: &[f64],
    des: &[f64],
    band_weights: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (bin, ((&a, &d), &f)) in aid.iter().zip(des).zip(band_weights).enumerate() {
        if f == 0.0 {
            continue;
        }
        if !(d > 0.0) {
            return Err(Error::ZeroDesiredMagnitude { bin });
        }
        total += f * (10.0 * ((a * a) / (d * d)).log10()).abs();
    }
    Ok(total)
}

/// Auditory spectral distance in dB between aided and desired responses.
pub fn auditory_spectral_distance(
    h_aid: &ImpulseResponse,
    h_des: &ImpulseResponse,
    grid: &FrequencyGrid,
    f_low: f64,
    f_up: f64,
) -> Result<f64> {
    let weights = erb_weights(grid, f_low, f_up)?;
    let aid = magnitude_response(h_aid, grid)?;
    let des = magnitude_response(h_des, grid)?;
    spectral_distance_from_magnitudes(&aid, &des, &weights)
}

/// Intermediate and eardrum signals of the time-domain simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSignals {
    /// Microphone signal.
    pub y: Vec<f64>,
    /// Forward path output.
    pub u_tilde: Vec<f64>,
    /// Loudspeaker signals.
    pub u: Vec<Vec<f64>>,
    pub t_aid: Vec<f64>,
    pub t_des: Vec<f64>,
}

/// Runs a source signal through microphone, forward path, equalizer,
/// loudspeakers and the leakage path.
pub fn simulate(
    set: &MeasurementSet,
    g: &ForwardPath,
    coefficients: &[Vec<f64>],
    s: &[f64],
) -> Result<SimulatedSignals> {
    check_filter(set, coefficients)?;
    if s.is_empty() {
        return Err(Error::InvalidInput("empty source signal".into()));
    }
    if let Some(k) = s.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite source sample at {k}"
        )));
    }
    let y = convolve_slices(set.h_m.samples(), s);
    let u_tilde = convolve_slices(g.g.samples(), &y);
    let u: Vec<Vec<f64>> = coefficients
        .iter()
        .map(|a| convolve_slices(a, &u_tilde))
        .collect();
    let mut t_aid = convolve_slices(set.h_occ.samples(), s);
    for (d, un) in set.d.iter().zip(&u) {
        let out = convolve_slices(d.samples(), un);
        if t_aid.len() < out.len() {
            t_aid.resize(out.len(), 0.0);
        }
        t_aid.iter_mut().zip(&out).for_each(|(x, v)| *x += v);
    }
    let t_des = convolve_slices(g.g.samples(), &convolve_slices(set.h_open.samples(), s));
    Ok(SimulatedSignals {
        y,
        u_tilde,
        u,
        t_aid,
        t_des,
    })
}

/// Per-set results of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetEvaluation {
    pub delta_h_aud_db: f64,
    pub mag_db_aid: Vec<f64>,
    pub mag_db_des: Vec<f64>,
    pub mag_db_occ: Vec<f64>,
    pub leakage_ratio: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub sample_rate_hz: f64,
    pub fft_size: usize,
    pub f_low_hz: f64,
    pub f_up_hz: f64,
    pub sets: Vec<SetEvaluation>,
    pub config: DesignConfig,
    pub scenario_fingerprint: String,
}

fn to_db(mag: &[f64]) -> Vec<f64> {
    mag.iter()
        .map(|m| 20.0 * m.max(f64::MIN_POSITIVE).log10())
        .collect()
}

/// FFT size for evaluating a design: the design grid, enlarged to a power of
/// two that holds the aided response when needed.
pub fn evaluation_fft_size(config: &DesignConfig, scenario: &Scenario, g: &ForwardPath) -> usize {
    let aided_len =
        scenario.speaker_length() + config.filter_length + g.g.len() + scenario.response_length()
            - 3;
    config
        .resolved_fft_size(scenario.speaker_length())
        .max(next_power_of_two(
            aided_len.max(g.g.len() + scenario.response_length() - 1),
        ))
}

pub fn evaluation_grid(
    scenario: &Scenario,
    g: &ForwardPath,
    filter: &EqualizerFilter,
) -> Result<FrequencyGrid> {
    FrequencyGrid::new(
        evaluation_fft_size(filter.config(), scenario, g),
        scenario.sample_rate_hz(),
    )
}

/// Auditory spectral distance of raw coefficients on one set, default band.
pub fn spectral_distance_on_set(
    set: &MeasurementSet,
    g: &ForwardPath,
    coefficients: &[Vec<f64>],
    grid: &FrequencyGrid,
) -> Result<f64> {
    let band = erb_weights(grid, DEFAULT_F_LOW_HZ, DEFAULT_F_UP_HZ)?;
    let aid = magnitude_response(&aided_tf_from_coefficients(set, g, coefficients)?, grid)?;
    let des = magnitude_response(&desired_tf(set, g)?, grid)?;
    spectral_distance_from_magnitudes(&aid, &des, &band)
}

/// Evaluates `filter` on every set of `scenario`.
pub fn evaluate(
    scenario: &Scenario,
    g: &ForwardPath,
    filter: &EqualizerFilter,
) -> Result<EvaluationReport> {
    let grid = evaluation_grid(scenario, g, filter)?;
    let band = erb_weights(&grid, DEFAULT_F_LOW_HZ, DEFAULT_F_UP_HZ)?;
    let sets = scenario
        .sets()
        .iter()
        .map(|set| {
            let aid = magnitude_response(&aided_tf(set, g, filter)?, &grid)?;
            let des = magnitude_response(&desired_tf(set, g)?, &grid)?;
            let occ = magnitude_response(&set.h_occ, &grid)?;
            let delta = spectral_distance_from_magnitudes(&aid, &des, &band)?;
            let (ratio, weights) = frequency_weights(set, g, filter.config().beta, &grid)?;
            Ok(SetEvaluation {
                delta_h_aud_db: delta,
                mag_db_aid: to_db(&aid),
                mag_db_des: to_db(&des),
                mag_db_occ: to_db(&occ),
                leakage_ratio: ratio,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        sample_rate_hz: grid.sample_rate_hz(),
        fft_size: grid.fft_size(),
        f_low_hz: DEFAULT_F_LOW_HZ,
        f_up_hz: DEFAULT_F_UP_HZ,
        sets,
        config: filter.config().clone(),
        scenario_fingerprint: scenario.fingerprint(),
    })
}

/// Mean auditory spectral distance over the sets of `scenario`.
pub fn mean_spectral_distance(
    scenario: &Scenario,
    g: &ForwardPath,
    coefficients: &[Vec<f64>],
    grid: &FrequencyGrid,
) -> Result<f64> {
    let mut total = 0.0;
    for set in scenario.sets() {
        total += spectral_distance_on_set(set, g, coefficients, grid)?;
    }
    Ok(total / scenario.num_sets() as f64)
}

pub const CURVE_CSV_HEADER: &str = "set,freq_hz,mag_db_aid,mag_db_des,mag_db_occ,V,W";

impl EvaluationReport {
    pub fn delta_h_aud_db(&self) -> Vec<f64> {
        self.sets.iter().map(|s| s.delta_h_aud_db).collect()
    }

    pub fn mean_delta_h_aud_db(&self) -> f64 {
        self.sets.iter().map(|s| s.delta_h_aud_db).sum::<f64>() / self.sets.len() as f64
    }

    /// One row per set and frequency bin.
    pub fn curves_csv(&self) -> String {
        let mut out = String::with_capacity(self.sets.len() * self.fft_size * 80);
        out.push_str(CURVE_CSV_HEADER);
        out.push('\n');
        let df = self.sample_rate_hz / self.fft_size as f64;
        for (i, s) in self.sets.iter().enumerate() {
            for l in 0..self.fft_size {
                let _ = writeln!(
                    out,
                    "{i},{},{},{},{},{},{}",
                    l as f64 * df,
                    s.mag_db_aid[l],
                    s.mag_db_des[l],
                    s.mag_db_occ[l],
                    s.leakage_ratio[l],
                    s.weights[l]
                );
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "delta_h_aud_db": self.delta_h_aud_db(),
            "mean_delta_h_aud_db": self.mean_delta_h_aud_db(),
            "fft_size": self.fft_size,
            "sample_rate_hz": self.sample_rate_hz,
            "f_low_hz": self.f_low_hz,
            "f_up_hz": self.f_up_hz,
            "config": self.config,
            "scenario_fingerprint": self.scenario_fingerprint,
        });
        serde_json::to_string_pretty(&v).expect("summary serializes")
    }

    /// Writes `<prefix>.csv` and `<prefix>.json`.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let prefix = prefix.as_ref();
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        std::fs::write(with_ext(".csv"), self.curves_csv())?;
        std::fs::write(with_ext(".json"), self.summary_json())?;
        Ok(())
    }
}
