//! Parameter sweeps over design settings, evaluated by resubstitution or by
//! leave-one-out cross-validation over measurement sets.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    assemble_atf_system, averaged_frequency_weights, reduce_to_rtf, regularization_matrix,
    solve_ls_atf, DesignConfig, LinearSystem, NormalEquations, Variant,
};
use crate::error::{Error, Result};
use crate::eval::{evaluation_fft_size, spectral_distance_on_set};
use crate::scenario::{forward_path_ir, ForwardPath, Scenario};
use crate::signals::FrequencyGrid;

/// Header of the sweep table.
pub const SWEEP_CSV_HEADER: &str = "variant,N,L_A,d_H,lambda,beta,G0_db,d_G,fold,delta_h_aud_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Evaluate on the sets the filter was designed on.
    Resubstitution,
    /// Design on all but one set, evaluate on the held-out set, for every set.
    LeaveOneOut,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resubstitution" => Ok(SweepMode::Resubstitution),
            "leave-one-out" | "loo" => Ok(SweepMode::LeaveOneOut),
            _ => Err(Error::schema("mode", format!("unknown sweep mode `{s}`"))),
        }
    }
}

/// Lists of values per axis; the run set is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "default_variants")]
    pub variant: Vec<Variant>,
    /// Number of loudspeakers; the first `N` of the scenario are used.
    #[serde(rename = "N", default)]
    pub num_loudspeakers: Option<Vec<usize>>,
    #[serde(rename = "L_A", default = "default_filter_lengths")]
    pub filter_length: Vec<usize>,
    #[serde(rename = "d_H", default = "default_delays")]
    pub acausal_delay: Vec<usize>,
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_betas")]
    pub beta: Vec<f64>,
    #[serde(rename = "G0_db", default = "default_gains")]
    pub gain_db: Vec<f64>,
    #[serde(rename = "d_G", default = "default_forward_delays")]
    pub forward_delay: Vec<usize>,
    #[serde(rename = "L_FFT", default)]
    pub fft_size: Option<usize>,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::MfrDeltaLs]
}
fn default_filter_lengths() -> Vec<usize> {
    vec![99]
}
fn default_delays() -> Vec<usize> {
    vec![32]
}
fn default_lambdas() -> Vec<f64> {
    vec![0.1]
}
fn default_betas() -> Vec<f64> {
    vec![1.0]
}
fn default_gains() -> Vec<f64> {
    vec![0.0]
}
fn default_forward_delays() -> Vec<usize> {
    vec![96]
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            variant: default_variants(),
            num_loudspeakers: None,
            filter_length: default_filter_lengths(),
            acausal_delay: default_delays(),
            lambda: default_lambdas(),
            beta: default_betas(),
            gain_db: default_gains(),
            forward_delay: default_forward_delays(),
            fft_size: None,
        }
    }
}

/// One design to run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub config: DesignConfig,
    pub num_loudspeakers: usize,
    pub gain_db: f64,
    pub forward_delay: usize,
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema("grid", e.to_string()))
    }

    /// Checks every axis against `scenario` and expands the product in
    /// axis order `variant, N, L_A, d_H, lambda, beta, G0_db, d_G`.
    pub fn points(&self, scenario: &Scenario) -> Result<Vec<GridPoint>> {
        let ns = self
            .num_loudspeakers
            .clone()
            .unwrap_or_else(|| vec![scenario.num_loudspeakers()]);
        let lens = [
            ("variant", self.variant.len()),
            ("N", ns.len()),
            ("L_A", self.filter_length.len()),
            ("d_H", self.acausal_delay.len()),
            ("lambda", self.lambda.len()),
            ("beta", self.beta.len()),
            ("G0_db", self.gain_db.len()),
            ("d_G", self.forward_delay.len()),
        ];
        if let Some((name, _)) = lens.iter().find(|(_, n)| *n == 0) {
            return Err(Error::schema(
                format!("grid.{name}"),
                "list must not be empty",
            ));
        }
        if let Some((k, n)) = ns
            .iter()
            .enumerate()
            .find(|(_, &n)| n == 0 || n > scenario.num_loudspeakers())
        {
            return Err(Error::schema(
                format!("grid.N[{k}]"),
                format!(
                    "{n} loudspeakers requested, scenario has {}",
                    scenario.num_loudspeakers()
                ),
            ));
        }
        if let Some((k, g)) = self
            .gain_db
            .iter()
            .enumerate()
            .find(|(_, g)| !g.is_finite())
        {
            return Err(Error::schema(
                format!("grid.G0_db[{k}]"),
                format!("must be finite, got {g}"),
            ));
        }
        let mut out = Vec::new();
        for &variant in &self.variant {
            for &n in &ns {
                for &la in &self.filter_length {
                    for &dh in &self.acausal_delay {
                        for &lambda in &self.lambda {
                            for &beta in &self.beta {
                                for &gain_db in &self.gain_db {
                                    for &forward_delay in &self.forward_delay {
                                        let config = DesignConfig {
                                            variant,
                                            filter_length: la,
                                            acausal_delay: dh,
                                            lambda,
                                            beta,
                                            fft_size: self.fft_size,
                                        }
                                        .normalized();
                                        config.validate().map_err(|e| match e {
                                            Error::Schema { path, message } => {
                                                Error::schema(format!("grid.{path}"), message)
                                            }
                                            other => other,
                                        })?;
                                        out.push(GridPoint {
                                            config,
                                            num_loudspeakers: n,
                                            gain_db,
                                            forward_delay,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: GridPoint,
    /// Held-out set in leave-one-out mode, `None` for resubstitution.
    pub fold: Option<usize>,
    pub delta_h_aud_db: f64,
}

/// Settings that fix the reduced systems; lambda, beta and the variant do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SystemKey {
    num_loudspeakers: usize,
    filter_length: usize,
    acausal_delay: usize,
    gain_bits: u64,
    forward_delay: usize,
}

impl SystemKey {
    fn of(p: &GridPoint) -> Self {
        Self {
            num_loudspeakers: p.num_loudspeakers,
            filter_length: p.config.filter_length,
            acausal_delay: p.config.acausal_delay,
            gain_bits: p.gain_db.to_bits(),
            forward_delay: p.forward_delay,
        }
    }
}

/// Reduced systems and their normal equations, one per set.
struct SystemCache {
    systems: Vec<LinearSystem>,
    normals: Vec<NormalEquations>,
}

struct Context<'a> {
    scenario: Scenario,
    g: ForwardPath,
    point: &'a GridPoint,
    cache: Option<&'a SystemCache>,
}

impl Context<'_> {
    fn design(&self, train: &[usize]) -> Result<DVector<f64>> {
        let cfg = &self.point.config;
        let sets = self.scenario.sets();
        match cfg.variant {
            Variant::LsAtf => {
                debug_assert_eq!(train.len(), 1);
                solve_ls_atf(&assemble_atf_system(
                    &sets[train[0]],
                    &self.g,
                    cfg.filter_length,
                )?)
            }
            variant => {
                let cache = self.cache.expect("reduced systems cached for RTF variants");
                let mut normal = NormalEquations::zeros(cache.systems[0].matrix.ncols());
                for &i in train {
                    normal.gram += &cache.normals[i].gram;
                    normal.rhs += &cache.normals[i].rhs;
                }
                if !variant.uses_frequency_weights() {
                    return normal.solve(cfg.lambda, None);
                }
                let grid = FrequencyGrid::new(
                    cfg.resolved_fft_size(self.scenario.speaker_length()),
                    self.scenario.sample_rate_hz(),
                )?;
                let chosen: Vec<_> = train.iter().map(|&i| sets[i].clone()).collect();
                let (_, w) = averaged_frequency_weights(&chosen, &self.g, cfg.beta, &grid)?;
                let reg = regularization_matrix(&w, self.point.num_loudspeakers, cfg.filter_length);
                normal.solve(cfg.lambda, Some(&reg))
            }
        }
    }

    fn distance(&self, a: &DVector<f64>, set: usize, grid: &FrequencyGrid) -> Result<f64> {
        let coeffs: Vec<Vec<f64>> = a
            .as_slice()
            .chunks(self.point.config.filter_length)
            .map(<[f64]>::to_vec)
            .collect();
        spectral_distance_on_set(&self.scenario.sets()[set], &self.g, &coeffs, grid)
    }

    /// Mean distance on `eval` of designs from `train`: one design on all of
    /// `train` for the robust variant, one per training set otherwise.
    fn score(&self, train: &[usize], eval: &[usize], grid: &FrequencyGrid) -> Result<f64> {
        let designs: Vec<(DVector<f64>, Vec<usize>)> =
            if self.point.config.variant == Variant::MfrDeltaLs {
                vec![(self.design(train)?, eval.to_vec())]
            } else if eval.len() == 1 {
                train
                    .iter()
                    .map(|&t| Ok((self.design(&[t])?, eval.to_vec())))
                    .collect::<Result<_>>()?
            } else {
                // resubstitution for single-set variants: each set on itself
                train
                    .iter()
                    .map(|&t| Ok((self.design(&[t])?, vec![t])))
                    .collect::<Result<_>>()?
            };
        let mut total = 0.0;
        let mut count = 0;
        for (a, sets) in &designs {
            for &s in sets {
                total += self.distance(a, s, grid)?;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

fn build_cache(scenario: &Scenario, key: SystemKey) -> Result<SystemCache> {
    let scenario = scenario.with_loudspeakers(key.num_loudspeakers)?;
    let g = forward_path_ir(
        f64::from_bits(key.gain_bits),
        key.forward_delay,
        scenario.sample_rate_hz(),
    );
    let systems = scenario
        .sets()
        .par_iter()
        .map(|s| reduce_to_rtf(s, &g, key.filter_length, key.acausal_delay))
        .collect::<Result<Vec<_>>>()?;
    let normals = systems.iter().map(NormalEquations::from_system).collect();
    Ok(SystemCache { systems, normals })
}

/// Runs every grid point; rows follow grid order (then fold order) regardless
/// of how the work is scheduled.
pub fn run_sweep(scenario: &Scenario, grid: &SweepGrid, mode: SweepMode) -> Result<Vec<SweepRow>> {
    let num_sets = scenario.num_sets();
    if mode == SweepMode::LeaveOneOut && num_sets < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 2 sets, scenario has {num_sets}"
        )));
    }
    let points = grid.points(scenario)?;

    let mut keys: Vec<SystemKey> = Vec::new();
    for p in points.iter().filter(|p| p.config.variant != Variant::LsAtf) {
        let k = SystemKey::of(p);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let caches: HashMap<SystemKey, SystemCache> = keys
        .par_iter()
        .map(|&k| Ok((k, build_cache(scenario, k)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let per_point: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|p| {
            let sc = scenario.with_loudspeakers(p.num_loudspeakers)?;
            let g = forward_path_ir(p.gain_db, p.forward_delay, sc.sample_rate_hz());
            let grid_eval =
                FrequencyGrid::new(evaluation_fft_size(&p.config, &sc, &g), sc.sample_rate_hz())?;
            let ctx = Context {
                scenario: sc,
                g,
                point: p,
                cache: caches.get(&SystemKey::of(p)),
            };
            let all: Vec<usize> = (0..num_sets).collect();
            match mode {
                SweepMode::Resubstitution => Ok(vec![SweepRow {
                    point: p.clone(),
                    fold: None,
                    delta_h_aud_db: ctx.score(&all, &all, &grid_eval)?,
                }]),
                SweepMode::LeaveOneOut => all
                    .iter()
                    .map(|&k| {
                        let train: Vec<usize> = all.iter().copied().filter(|&i| i != k).collect();
                        Ok(SweepRow {
                            point: p.clone(),
                            fold: Some(k),
                            delta_h_aud_db: ctx.score(&train, &[k], &grid_eval)?,
                        })
                    })
                    .collect(),
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Sweep table with [`SWEEP_CSV_HEADER`].
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.point.config;
        let fold = r.fold.map_or_else(|| "all".to_string(), |k| k.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.variant,
            r.point.num_loudspeakers,
            c.filter_length,
            c.acausal_delay,
            c.lambda,
            c.beta,
            r.point.gain_db,
            r.point.forward_delay,
            fold,
            r.delta_h_aud_db
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{synth_scenario, SynthSpec};

    fn small_scenario(sets: usize) -> Scenario {
        let spec = SynthSpec {
            num_sets: sets,
            response_length: 24,
            speaker_length: 12,
            ..SynthSpec::default()
        };
        synth_scenario(&spec, 7).unwrap()
    }

    fn small_grid() -> SweepGrid {
        SweepGrid {
            filter_length: vec![8],
            acausal_delay: vec![4],
            forward_delay: vec![6],
            ..SweepGrid::default()
        }
    }

    #[test]
    fn cartesian_count() {
        let sc = small_scenario(2);
        let grid = SweepGrid {
            lambda: vec![1e-4, 0.1],
            beta: vec![1.0],
            ..small_grid()
        };
        let rows = run_sweep(&sc, &grid, SweepMode::Resubstitution).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.fold.is_none() && r.delta_h_aud_db.is_finite()));
        let csv = rows_to_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("MFR_DELTA_LS,2,8,4,0.0001,1,0,6,all,"));
    }

    #[test]
    fn folds_per_point() {
        let sc = small_scenario(5);
        let grid = SweepGrid {
            variant: vec![Variant::FrDeltaLs, Variant::MfrDeltaLs],
            ..small_grid()
        };
        let rows = run_sweep(&sc, &grid, SweepMode::LeaveOneOut).unwrap();
        assert_eq!(rows.len(), 10);
        let folds: Vec<_> = rows.iter().map(|r| r.fold.unwrap()).collect();
        assert_eq!(folds, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
    }

    #[test]
    fn leave_one_out_needs_two_sets() {
        let sc = small_scenario(1);
        assert!(run_sweep(&sc, &small_grid(), SweepMode::LeaveOneOut).is_err());
    }

    #[test]
    fn empty_axis_and_bad_n_rejected() {
        let sc = small_scenario(2);
        let grid = SweepGrid {
            lambda: vec![],
            ..small_grid()
        };
        assert!(matches!(grid.points(&sc), Err(Error::Schema { .. })));
        let grid = SweepGrid {
            num_loudspeakers: Some(vec![3]),
            ..small_grid()
        };
        assert!(matches!(grid.points(&sc), Err(Error::Schema { .. })));
    }

    #[test]
    fn grid_file_defaults_and_unknown_fields() {
        let g = SweepGrid::from_json(r#"{"lambda":[0.0001,0.1],"beta":[1]}"#).unwrap();
        assert_eq!(g.variant, vec![Variant::MfrDeltaLs]);
        assert_eq!(g.acausal_delay, vec![32]);
        assert!(SweepGrid::from_json(r#"{"lamda":[1]}"#).is_err());
        assert_eq!(
            "leave-one-out".parse::<SweepMode>().unwrap(),
            SweepMode::LeaveOneOut
        );
    }

    #[test]
    fn cached_path_matches_direct_design() {
        let sc = small_scenario(3);
        let grid = SweepGrid {
            variant: vec![Variant::RDeltaLs, Variant::FrDeltaLs, Variant::MfrDeltaLs],
            ..small_grid()
        };
        let rows = run_sweep(&sc, &grid, SweepMode::Resubstitution).unwrap();
        let g = forward_path_ir(0.0, 6, sc.sample_rate_hz());
        for row in &rows {
            let cfg = &row.point.config;
            let fft =
                FrequencyGrid::new(evaluation_fft_size(cfg, &sc, &g), sc.sample_rate_hz()).unwrap();
            let expected = if cfg.variant == Variant::MfrDeltaLs {
                let f = crate::design::design(&sc, &g, cfg, 0).unwrap();
                crate::eval::mean_spectral_distance(&sc, &g, f.coefficients(), &fft).unwrap()
            } else {
                (0..3)
                    .map(|i| {
                        let f = crate::design::design(&sc, &g, cfg, i).unwrap();
                        spectral_distance_on_set(&sc.sets()[i], &g, f.coefficients(), &fft).unwrap()
                    })
                    .sum::<f64>()
                    / 3.0
            };
            assert!(
                (row.delta_h_aud_db - expected).abs() < 1e-9,
                "{:?}",
                cfg.variant
            );
        }
    }

    #[test]
    fn row_order_is_grid_order() {
        let sc = small_scenario(2);
        let grid = SweepGrid {
            lambda: vec![10.0, 1e-4, 1.0],
            acausal_delay: vec![0, 4],
            ..small_grid()
        };
        let a = rows_to_csv(&run_sweep(&sc, &grid, SweepMode::Resubstitution).unwrap());
        let b = rows_to_csv(&run_sweep(&sc, &grid, SweepMode::Resubstitution).unwrap());
        assert_eq!(a, b);
        let lambdas: Vec<&str> = a
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(4).unwrap())
            .collect();
        assert_eq!(lambdas, vec!["10", "0.0001", "1", "10", "0.0001", "1"]);
    }
}
