//! Equalization filter design: linear system assembly, reduction to relative
//! transfer functions with an acausal delay, and the regularized
//! least-squares solvers.

mod config;
mod filter;
mod weights;

pub use config::{DesignConfig, DesignJob, Variant, DEFAULT_STABILIZING_LAMBDA};
pub use filter::EqualizerFilter;
pub use weights::{
    averaged_frequency_weights, frequency_weights, leakage_ratio, log_normal_sigma,
    log_normal_weight, regularization_block, regularization_matrix, weighted_penalty_norm,
    weights_from_ratio, SMOOTHING_FRACTION,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{ForwardPath, MeasurementSet, Scenario};
use crate::signals::{convolution_matrix, convolve_slices, pad_to, FrequencyGrid};

/// Singular values of `G H_m` below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// System matrix, target and dimensions of one least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub target: DVector<f64>,
    pub num_loudspeakers: usize,
    pub filter_length: usize,
}

impl LinearSystem {
    pub fn residual_norm(&self, a: &DVector<f64>) -> f64 {
        (&self.matrix * a - &self.target).norm()
    }
}

/// Normal equations `gram * a = rhs`, accumulated over one or more systems.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn zeros(unknowns: usize) -> Self {
        Self {
            gram: DMatrix::zeros(unknowns, unknowns),
            rhs: DVector::zeros(unknowns),
        }
    }

    pub fn from_system(sys: &LinearSystem) -> Self {
        Self {
            gram: sys.matrix.tr_mul(&sys.matrix),
            rhs: sys.matrix.tr_mul(&sys.target),
        }
    }

    pub fn accumulate(&mut self, sys: &LinearSystem) -> Result<()> {
        if sys.matrix.ncols() != self.gram.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "system has {} unknowns, expected {}",
                sys.matrix.ncols(),
                self.gram.ncols()
            )));
        }
        self.gram += sys.matrix.tr_mul(&sys.matrix);
        self.rhs += sys.matrix.tr_mul(&sys.target);
        Ok(())
    }

    /// Solves `(gram + lambda * reg) a = rhs`; `reg = None` means the identity.
    pub fn solve(&self, lambda: f64, reg: Option<&DMatrix<f64>>) -> Result<DVector<f64>> {
        let mut a = self.gram.clone();
        match reg {
            Some(r) => a += r * lambda,
            None => {
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda;
                }
            }
        }
        match solve_spd(&a, &self.rhs) {
            Err(Error::SingularSystem) if lambda > 0.0 => solve_pseudo_inverse(&a, &self.rhs),
            other => other,
        }
    }

    /// `||(gram + lambda reg) a - rhs||`, the gradient of the regularized cost up to a factor 2.
    pub fn gradient_norm(&self, a: &DVector<f64>, lambda: f64, reg: Option<&DMatrix<f64>>) -> f64 {
        let mut r = &self.gram * a - &self.rhs;
        match reg {
            Some(m) => r += m * a * lambda,
            None => r += a * lambda,
        }
        r.norm()
    }
}

/// Cholesky solve with one step of iterative refinement.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let chol = a.clone().cholesky().ok_or(Error::SingularSystem)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if !(hi > 0.0) || (lo / hi).powi(2) < n as f64 * f64::EPSILON {
        return Err(Error::SingularSystem);
    }
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Numerical("non-finite filter coefficients".into()))
    }
}

/// Minimum-norm solve for a regularized matrix that is singular in floating
/// point, e.g. where the weights are vanishingly small and `D` is ill-conditioned.
fn solve_pseudo_inverse(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = a.clone().symmetric_eigen();
    let tol = eig.eigenvalues.amax() * a.nrows() as f64 * f64::EPSILON;
    let solve = |rhs: &DVector<f64>| {
        let mut c = eig.eigenvectors.tr_mul(rhs);
        for (ci, &e) in c.iter_mut().zip(eig.eigenvalues.iter()) {
            *ci = if e > tol { *ci / e } else { 0.0 };
        }
        &eig.eigenvectors * c
    };
    let mut x = solve(b);
    x += solve(&(b - a * &x));
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Numerical("non-finite filter coefficients".into()))
    }
}

/// `[D_1 ... D_N]`, each `D_n` the `(L_D + L_A - 1) x L_A` convolution matrix of `d_n`.
pub fn speaker_matrix(set: &MeasurementSet, filter_length: usize) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = set
        .d
        .iter()
        .map(|d| convolution_matrix(d.samples(), filter_length))
        .collect();
    let rows = blocks[0].nrows();
    let mut m = DMatrix::zeros(rows, filter_length * blocks.len());
    for (n, b) in blocks.iter().enumerate() {
        m.columns_mut(n * filter_length, filter_length).copy_from(b);
    }
    m
}

fn check_forward_path(set: &MeasurementSet, g: &ForwardPath) -> Result<()> {
    set.h_m.check_rate(&g.g)
}

/// ATF-domain system `C a = v` with `C = G H_m D` and `v = G h_open - h_occ`.
pub fn assemble_atf_system(
    set: &MeasurementSet,
    g: &ForwardPath,
    filter_length: usize,
) -> Result<LinearSystem> {
    check_forward_path(set, g)?;
    if filter_length == 0 {
        return Err(Error::InvalidInput("filter length must be positive".into()));
    }
    let mic_path = convolve_slices(g.g.samples(), set.h_m.samples());
    let d = speaker_matrix(set, filter_length);
    let c = convolution_matrix(&mic_path, d.nrows()) * d;
    let rows = c.nrows();
    let open = pad_to(&convolve_slices(g.g.samples(), set.h_open.samples()), rows);
    let occ = set.h_occ.padded(rows);
    let v = DVector::from_iterator(rows, open.iter().zip(&occ).map(|(o, c)| o - c));
    Ok(LinearSystem {
        matrix: c,
        target: v,
        num_loudspeakers: set.num_loudspeakers(),
        filter_length,
    })
}

/// Minimum-norm least-squares solution `a = C^+ v` via SVD.
pub fn solve_ls_atf(sys: &LinearSystem) -> Result<DVector<f64>> {
    let (m, n) = sys.matrix.shape();
    let svd = sys.matrix.clone().svd(true, true);
    let tol = svd.singular_values.max() * m.max(n) as f64 * f64::EPSILON;
    svd.solve(&sys.target, tol)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// RTF-domain system `D_delta a = v_delta`.
///
/// The target is the least-squares solution of `(G H_m) x = G h_open - h_occ`
/// with both eardrum responses delayed by `d_H` and the convolution matrices
/// extended by `d_H`; `D_delta` is `D` with `d_H` zero rows appended.
pub fn reduce_to_rtf(
    set: &MeasurementSet,
    g: &ForwardPath,
    filter_length: usize,
    acausal_delay: usize,
) -> Result<LinearSystem> {
    check_forward_path(set, g)?;
    if filter_length == 0 {
        return Err(Error::InvalidInput("filter length must be positive".into()));
    }
    let d = speaker_matrix(set, filter_length);
    let unknowns = d.nrows() + acausal_delay;

    let mic_path = convolve_slices(g.g.samples(), set.h_m.samples());
    let gh = convolution_matrix(&mic_path, unknowns);
    let rows = gh.nrows();
    let mut open = vec![0.0; acausal_delay];
    open.extend(convolve_slices(g.g.samples(), set.h_open.samples()));
    let mut occ = vec![0.0; acausal_delay];
    occ.extend_from_slice(set.h_occ.samples());
    let b = DVector::from_iterator(
        rows,
        pad_to(&open, rows)
            .iter()
            .zip(pad_to(&occ, rows))
            .map(|(o, c)| o - c),
    );

    let svd = gh.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smax > 0.0) || smin <= RANK_TOLERANCE * smax {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let target = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;

    let mut matrix = DMatrix::zeros(unknowns, d.ncols());
    matrix.rows_mut(0, d.nrows()).copy_from(&d);
    Ok(LinearSystem {
        matrix,
        target,
        num_loudspeakers: set.num_loudspeakers(),
        filter_length,
    })
}

/// `a = (D^T D + lambda R)^{-1} D^T v`, with `R` the identity when `weights` is
/// `None` and the block-diagonal `F^H W^H W F` otherwise.
pub fn solve_regularized(
    sys: &LinearSystem,
    lambda: f64,
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let normal = NormalEquations::from_system(sys);
    let reg = weights.map(|w| regularization_matrix(w, sys.num_loudspeakers, sys.filter_length));
    normal.solve(lambda, reg.as_ref())
}

/// Everything the robust solver computes, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub coefficients: DVector<f64>,
    pub normal: NormalEquations,
    pub regularization: DMatrix<f64>,
    pub leakage_ratio: Vec<f64>,
    pub weights: Vec<f64>,
    pub systems: Vec<LinearSystem>,
}

/// Multi-measurement design: stacks the RTF systems of all sets and solves the
/// weighted-regularized normal equations, weights from set-averaged spectra.
pub fn solve_robust(
    scenario: &Scenario,
    g: &ForwardPath,
    config: &DesignConfig,
) -> Result<RobustSolution> {
    if config.variant != Variant::MfrDeltaLs {
        return Err(Error::InvalidInput(format!(
            "robust solver needs MFR_DELTA_LS, got {}",
            config.variant
        )));
    }
    config.validate()?;
    let grid = FrequencyGrid::new(
        config.resolved_fft_size(scenario.speaker_length()),
        scenario.sample_rate_hz(),
    )?;
    let systems = scenario
        .sets()
        .iter()
        .map(|s| reduce_to_rtf(s, g, config.filter_length, config.acausal_delay))
        .collect::<Result<Vec<_>>>()?;
    let mut normal = NormalEquations::zeros(scenario.num_loudspeakers() * config.filter_length);
    for sys in &systems {
        normal.accumulate(sys)?;
    }
    let (ratio, weights) = averaged_frequency_weights(scenario.sets(), g, config.beta, &grid)?;
    let reg = regularization_matrix(&weights, scenario.num_loudspeakers(), config.filter_length);
    let coefficients = normal.solve(config.lambda, Some(&reg))?;
    Ok(RobustSolution {
        coefficients,
        normal,
        regularization: reg,
        leakage_ratio: ratio,
        weights,
        systems,
    })
}

/// Designs a filter with the configured variant. Single-set variants use
/// `design_set`; the robust variant uses every set of the scenario.
pub fn design(
    scenario: &Scenario,
    g: &ForwardPath,
    config: &DesignConfig,
    design_set: usize,
) -> Result<EqualizerFilter> {
    let config = config.clone().normalized();
    config.validate()?;
    let set = scenario
        .sets()
        .get(design_set)
        .ok_or_else(|| Error::InvalidInput(format!("design set {design_set} out of range")))?;
    let la = config.filter_length;
    let a = match config.variant {
        Variant::LsAtf => solve_ls_atf(&assemble_atf_system(set, g, la)?)?,
        Variant::Rls | Variant::RDeltaLs => solve_regularized(
            &reduce_to_rtf(set, g, la, config.acausal_delay)?,
            config.lambda,
            None,
        )?,
        Variant::FrDeltaLs => {
            let grid = FrequencyGrid::new(
                config.resolved_fft_size(set.speaker_length()),
                set.sample_rate_hz(),
            )?;
            let (_, w) = frequency_weights(set, g, config.beta, &grid)?;
            solve_regularized(
                &reduce_to_rtf(set, g, la, config.acausal_delay)?,
                config.lambda,
                Some(&w),
            )?
        }
        Variant::MfrDeltaLs => solve_robust(scenario, g, &config)?.coefficients,
    };
    EqualizerFilter::from_stacked(
        a.as_slice(),
        scenario.num_loudspeakers(),
        config,
        g.params,
        scenario.fingerprint(),
    )
}
