//! WebAssembly bindings for the static page in `www/`.
//!
//! Each exported function synthesizes a scene from a seed, runs one
//! operation and returns JSON. The `*_json` functions hold the logic and are
//! what the native tests call.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use eqdesign::design::{design, frequency_weights, DesignConfig, Variant};
use eqdesign::eval::{evaluate, mean_spectral_distance, DEFAULT_F_LOW_HZ, DEFAULT_F_UP_HZ};
use eqdesign::scenario::{forward_path_ir, synth_scenario, ForwardPath, Scenario, SynthSpec};
use eqdesign::signals::FrequencyGrid;

/// Forward-path delay used throughout the demo, in samples.
const FORWARD_DELAY: usize = 96;

pub const SWEEP_LAMBDAS: [f64; 9] = [1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];

#[derive(Serialize)]
pub struct Curves {
    pub freq_hz: Vec<f64>,
    pub mag_db_aid: Vec<f64>,
    pub mag_db_des: Vec<f64>,
    pub mag_db_occ: Vec<f64>,
    pub delta_h_aud_db: f64,
}

#[derive(Serialize)]
pub struct LambdaSweep {
    pub lambda: Vec<f64>,
    pub fr: Vec<f64>,
    pub mfr: Vec<f64>,
}

#[derive(Serialize)]
pub struct WeightView {
    pub freq_hz: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

fn scene(seed: u64, loudspeakers: usize, gain_db: f64) -> Result<(Scenario, ForwardPath), String> {
    let spec = SynthSpec {
        num_loudspeakers: loudspeakers,
        ..SynthSpec::default()
    };
    let sc = synth_scenario(&spec, seed).map_err(|e| e.to_string())?;
    let g = forward_path_ir(gain_db, FORWARD_DELAY, sc.sample_rate_hz());
    Ok((sc, g))
}

fn config(
    variant: Variant,
    lambda: f64,
    acausal_delay: usize,
    beta: f64,
) -> Result<DesignConfig, String> {
    let cfg = DesignConfig {
        lambda,
        acausal_delay,
        beta,
        ..DesignConfig::operating_point(variant)
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Bins up to Nyquist, skipping DC so a log axis works.
fn half(x: &[f64]) -> Vec<f64> {
    x[1..=x.len() / 2].to_vec()
}

fn to_json<T: Serialize>(x: &T) -> Result<String, String> {
    serde_json::to_string(x).map_err(|e| e.to_string())
}

/// Robust design on all sets; curves of set 0.
pub fn design_curves_json(
    seed: u64,
    loudspeakers: usize,
    lambda: f64,
    acausal_delay: usize,
    beta: f64,
    gain_db: f64,
) -> Result<String, String> {
    let (sc, g) = scene(seed, loudspeakers, gain_db)?;
    let cfg = config(Variant::MfrDeltaLs, lambda, acausal_delay, beta)?;
    let filter = design(&sc, &g, &cfg, 0).map_err(|e| e.to_string())?;
    let report = evaluate(&sc, &g, &filter).map_err(|e| e.to_string())?;
    let grid =
        FrequencyGrid::new(report.fft_size, report.sample_rate_hz).map_err(|e| e.to_string())?;
    let set = &report.sets[0];
    to_json(&Curves {
        freq_hz: half(&grid.frequencies_hz()),
        mag_db_aid: half(&set.mag_db_aid),
        mag_db_des: half(&set.mag_db_des),
        mag_db_occ: half(&set.mag_db_occ),
        delta_h_aud_db: set.delta_h_aud_db,
    })
}

/// Mean distance over all sets for single-set (set 0) and robust designs.
pub fn lambda_sweep_json(
    seed: u64,
    loudspeakers: usize,
    acausal_delay: usize,
    beta: f64,
) -> Result<String, String> {
    let (sc, g) = scene(seed, loudspeakers, 0.0)?;
    let mut out = LambdaSweep {
        lambda: SWEEP_LAMBDAS.to_vec(),
        fr: Vec::new(),
        mfr: Vec::new(),
    };
    for &lambda in &SWEEP_LAMBDAS {
        for (variant, sink) in [
            (Variant::FrDeltaLs, &mut out.fr),
            (Variant::MfrDeltaLs, &mut out.mfr),
        ] {
            let filter = design(&sc, &g, &config(variant, lambda, acausal_delay, beta)?, 0)
                .map_err(|e| e.to_string())?;
            let grid =
                eqdesign::eval::evaluation_grid(&sc, &g, &filter).map_err(|e| e.to_string())?;
            sink.push(
                mean_spectral_distance(&sc, &g, filter.coefficients(), &grid)
                    .map_err(|e| e.to_string())?,
            );
        }
    }
    to_json(&out)
}

/// Leakage ratio and regularization weights of set 0 in the metric band.
pub fn weights_json(seed: u64, gain_db: f64, beta: f64) -> Result<String, String> {
    let (sc, g) = scene(seed, 1, gain_db)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(format!("beta must be positive, got {beta}"));
    }
    let grid = FrequencyGrid::new(1024, sc.sample_rate_hz()).map_err(|e| e.to_string())?;
    let (v, w) = frequency_weights(&sc.sets()[0], &g, beta, &grid).map_err(|e| e.to_string())?;
    let keep: Vec<usize> = (0..=grid.fft_size() / 2)
        .filter(|&k| (DEFAULT_F_LOW_HZ / 2.0..=DEFAULT_F_UP_HZ).contains(&grid.frequency_hz(k)))
        .collect();
    to_json(&WeightView {
        freq_hz: keep.iter().map(|&k| grid.frequency_hz(k)).collect(),
        v: keep.iter().map(|&k| v[k]).collect(),
        w: keep.iter().map(|&k| w[k]).collect(),
    })
}

#[wasm_bindgen]
pub fn design_curves(
    seed: u32,
    loudspeakers: u32,
    lambda: f64,
    acausal_delay: u32,
    beta: f64,
    gain_db: f64,
) -> Result<String, JsError> {
    design_curves_json(
        seed as u64,
        loudspeakers as usize,
        lambda,
        acausal_delay as usize,
        beta,
        gain_db,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lambda_sweep(
    seed: u32,
    loudspeakers: u32,
    acausal_delay: u32,
    beta: f64,
) -> Result<String, JsError> {
    lambda_sweep_json(
        seed as u64,
        loudspeakers as usize,
        acausal_delay as usize,
        beta,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn leakage_weights(seed: u32, gain_db: f64, beta: f64) -> Result<String, JsError> {
    weights_json(seed as u64, gain_db, beta).map_err(|e| JsError::new(&e))
}
