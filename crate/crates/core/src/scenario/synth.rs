//! Seeded synthetic scenes for desk-scale experiments.
//!
//! Minimum-phase responses come from cepstral folding of a random smooth
//! log-magnitude. Non-minimum-phase siblings swap a planted minimum-phase
//! zero pair for its reflection outside the unit circle, which leaves the
//! magnitude response untouched.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{MeasurementSet, Scenario};
use crate::error::{Error, Result};
use crate::signals::{convolution_matrix, convolve_slices, pad_to, ImpulseResponse};

const CEPSTRUM_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFamily {
    /// Every response is minimum phase.
    MinimumPhase,
    /// Microphone and loudspeaker responses carry a zero pair outside the unit circle.
    NonMinimumPhase,
    /// Loudspeaker responses are non-minimum phase and pairwise free of common zeros.
    CoprimePair,
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub sample_rate_hz: f64,
    pub num_sets: usize,
    pub num_loudspeakers: usize,
    /// Length of h_m, h_open and h_occ.
    pub response_length: usize,
    /// Length of each loudspeaker response.
    pub speaker_length: usize,
    pub phase: PhaseFamily,
    /// High-frequency attenuation of the leakage path relative to the open ear.
    pub leakage_db: f64,
    /// Frequency below which the leakage path is about as loud as the open ear.
    pub leakage_corner_hz: f64,
    /// Standard deviation of the per-insertion tap perturbation, in dB.
    pub perturbation_db: f64,
    /// Share of spectral shape common to h_m, h_open and h_occ, in [0, 1].
    pub mic_correlation: f64,
    /// Leading zeros of every loudspeaker response.
    pub speaker_delay: usize,
    /// Extra delay of the eardrum responses relative to the microphone.
    pub ear_delay: usize,
    /// When set, h_open and h_occ are h_m convolved with FIR factors of this
    /// length, so the relative transfer functions are exactly FIR.
    pub exact_rtf_taps: Option<usize>,
    /// Measurement noise energy relative to each response, in dB; none when unset.
    pub noise_floor_db: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16000.0,
            num_sets: 5,
            num_loudspeakers: 2,
            response_length: 130,
            speaker_length: 100,
            phase: PhaseFamily::MinimumPhase,
            leakage_db: 20.0,
            leakage_corner_hz: 500.0,
            perturbation_db: 0.5,
            mic_correlation: 0.5,
            speaker_delay: 1,
            ear_delay: 2,
            exact_rtf_taps: None,
            noise_floor_db: Some(-60.0),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {}", self.sample_rate_hz));
        }
        if self.num_sets == 0 || self.num_loudspeakers == 0 {
            return bad("need at least one set and one loudspeaker".into());
        }
        if self.phase == PhaseFamily::CoprimePair {
            if self.num_loudspeakers < 2 {
                return bad("co-prime mode needs at least two loudspeakers".into());
            }
            if self.speaker_delay > 0 {
                return bad(
                    "co-prime mode needs speaker_delay = 0 (a shared delay is a common zero)"
                        .into(),
                );
            }
        }
        if self.speaker_length < self.speaker_delay + 3 {
            return bad(format!(
                "speaker_length {} too short for delay {} and a planted zero pair",
                self.speaker_length, self.speaker_delay
            ));
        }
        if self.response_length < self.ear_delay + 3 {
            return bad(format!(
                "response_length {} too short",
                self.response_length
            ));
        }
        if let Some(k) = self.exact_rtf_taps {
            if k == 0 || k + self.ear_delay + 3 > self.response_length {
                return bad(format!("exact_rtf_taps {k} does not fit response_length"));
            }
        }
        if !(0.0..=1.0).contains(&self.mic_correlation) {
            return bad(format!(
                "mic_correlation {} outside [0, 1]",
                self.mic_correlation
            ));
        }
        if !(self.perturbation_db >= 0.0
            && self.leakage_db.is_finite()
            && self.leakage_corner_hz > 0.0)
        {
            return bad("perturbation must be non-negative and leakage parameters finite".into());
        }
        if let Some(db) = self.noise_floor_db {
            if !(db.is_finite() && db < 0.0) {
                return bad(format!("noise_floor_db {db} must be finite and negative"));
            }
        }
        Ok(())
    }
}

/// Minimum-phase response of length `len` whose log-magnitude on a
/// `CEPSTRUM_SIZE`-point grid is `log_mag` (natural log).
fn min_phase_from_log_magnitude(log_mag: &[f64], len: usize) -> Vec<f64> {
    let m = log_mag.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);

    let mut buf: Vec<Complex64> = log_mag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    inv.process(&mut buf);
    let cep: Vec<f64> = buf.iter().map(|c| c.re / m as f64).collect();

    // fold the real cepstrum onto positive quefrencies
    let mut folded = vec![Complex64::new(0.0, 0.0); m];
    folded[0].re = cep[0];
    for k in 1..m / 2 {
        folded[k].re = 2.0 * cep[k];
    }
    folded[m / 2].re = cep[m / 2];

    fwd.process(&mut folded);
    let mut spec: Vec<Complex64> = folded.iter().map(|c| c.exp()).collect();
    inv.process(&mut spec);
    spec.iter().take(len).map(|c| c.re / m as f64).collect()
}

struct ShapeSampler {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl ShapeSampler {
    fn gauss(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }

    /// Random smooth log-magnitude: a cosine series in w with decaying weights.
    fn smooth_log_magnitude(&mut self, order: usize, scale: f64) -> Vec<f64> {
        let coeffs: Vec<f64> = (1..=order)
            .map(|k| scale * 0.75f64.powi(k as i32 - 1) * self.gauss())
            .collect();
        (0..CEPSTRUM_SIZE)
            .map(|l| {
                let w = 2.0 * std::f64::consts::PI * l as f64 / CEPSTRUM_SIZE as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * w).cos())
                    .sum()
            })
            .collect()
    }

    /// Coefficients `[1, -2 r cos t, r^2]` of a zero pair at radius `r < 1`.
    fn zero_pair(&mut self) -> [f64; 3] {
        let r = self.rng.random_range(0.8..0.92);
        let t = self.rng.random_range(0.15..0.85) * std::f64::consts::PI;
        [1.0, -2.0 * r * t.cos(), r * r]
    }
}

fn reflect(pair: [f64; 3]) -> [f64; 3] {
    [pair[2], pair[1], pair[0]]
}

fn mix(a: &[f64], b: &[f64], weight: f64) -> Vec<f64> {
    let w2 = (1.0 - weight * weight).sqrt();
    a.iter().zip(b).map(|(x, y)| weight * x + w2 * y).collect()
}

fn normalize_rms_magnitude(h: &mut [f64]) {
    // Parseval: RMS magnitude over frequency equals the l2 norm of the taps.
    let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Resultant of two polynomials given by ascending coefficient slices,
/// as the determinant of their Sylvester matrix.
pub fn resultant(p: &[f64], q: &[f64]) -> f64 {
    sylvester(p, q).determinant()
}

fn sylvester(p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let (m, n) = (p.len() - 1, q.len() - 1);
    let mut s = DMatrix::zeros(m + n, m + n);
    if n > 0 {
        s.columns_mut(0, n).copy_from(&convolution_matrix(p, n));
    }
    if m > 0 {
        s.columns_mut(n, m).copy_from(&convolution_matrix(q, m));
    }
    s
}

/// Smallest-to-largest singular value ratio of the Sylvester matrix that counts
/// as co-prime; smaller ratios mean nearly shared zeros.
const COPRIME_MARGIN: f64 = 1e-4;

/// Numerically co-prime: the Sylvester matrix is well away from singular.
fn numerically_coprime(p: &[f64], q: &[f64]) -> bool {
    let trim = |x: &[f64]| x[..x.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1)].to_vec();
    let (p, q) = (&trim(p)[..], &trim(q)[..]);
    let sv = sylvester(p, q).singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > COPRIME_MARGIN * max
}

/// Magnitude shape, planted zero pair and leading delay of one response.
struct PathShape {
    log_mag: Vec<f64>,
    pair: Option<[f64; 3]>,
    lead: usize,
    len: usize,
    /// Nonzero taps after the lead; the rest of `len` is zero.
    support: Option<usize>,
}

impl PathShape {
    /// Response with the extra log-magnitude `jitter`, truncated to `len`.
    fn render(&self, jitter: Option<&[f64]>) -> Vec<f64> {
        let log_mag: Vec<f64> = match jitter {
            Some(j) => self.log_mag.iter().zip(j).map(|(a, b)| a + b).collect(),
            None => self.log_mag.clone(),
        };
        let body = self
            .support
            .map_or(self.len - self.lead, |k| k.min(self.len - self.lead));
        let h = match self.pair {
            Some(pair) => convolve_slices(&min_phase_from_log_magnitude(&log_mag, body - 2), &pair),
            None => min_phase_from_log_magnitude(&log_mag, body),
        };
        pad_to(&[vec![0.0; self.lead], h].concat(), self.len)
    }
}

fn rms(h: &[f64]) -> f64 {
    h.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cepstral_order(len: usize) -> usize {
    (len / 4).clamp(1, 16)
}

/// Nonzero taps of a co-prime loudspeaker response.
const COPRIME_SUPPORT: usize = 16;

/// Order of the per-insertion log-magnitude variation.
const JITTER_ORDER: usize = 8;

impl ShapeSampler {
    /// Adds white noise `db` below the energy of `h`.
    fn add_noise(&mut self, h: &mut [f64], db: Option<f64>) {
        let Some(db) = db else { return };
        let std = rms(h) * 10f64.powf(db / 20.0) / (h.len() as f64).sqrt();
        h.iter_mut().for_each(|x| *x += std * self.gauss());
    }

    /// Smooth log-magnitude variation with standard deviation `db` over frequency.
    fn jitter(&mut self, db: f64) -> Option<Vec<f64>> {
        if db == 0.0 {
            return None;
        }
        let target = db * std::f64::consts::LN_10 / 20.0;
        let power: f64 = (0..JITTER_ORDER)
            .map(|k| 0.5625f64.powi(k as i32))
            .sum::<f64>()
            / 2.0;
        Some(self.smooth_log_magnitude(JITTER_ORDER, target / power.sqrt()))
    }
}

/// Generates a scenario; identical `(spec, seed)` pairs give identical output.
pub fn synth_scenario(spec: &SynthSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut s = ShapeSampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        normal: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let fs = spec.sample_rate_hz;
    let lh = spec.response_length;
    let ld = spec.speaker_length;
    let nmp = spec.phase == PhaseFamily::NonMinimumPhase;

    // Shared and individual spectral shapes of the acoustic paths.
    let order_h = cepstral_order(lh);
    let common = s.smooth_log_magnitude(order_h, 0.25);
    let mic_own = s.smooth_log_magnitude(order_h, 0.25);
    let ear_own = s.smooth_log_magnitude(order_h, 0.25);
    let rho = spec.mic_correlation;

    let mic_pair = s.zero_pair();
    let mic = PathShape {
        log_mag: mix(&common, &mic_own, rho),
        pair: Some(if nmp { reflect(mic_pair) } else { mic_pair }),
        lead: 0,
        support: None,
        len: match spec.exact_rtf_taps {
            Some(k) => lh + 1 - (k + spec.ear_delay),
            None => lh,
        },
    };
    let mic_scale = 1.0 / rms(&mic.render(None));

    // Leakage rolls off above the corner frequency by `leakage_db`.
    let atten = spec.leakage_db * std::f64::consts::LN_10 / 20.0;
    let ear_log = mix(&common, &ear_own, rho);
    let leak_log: Vec<f64> = ear_log
        .iter()
        .enumerate()
        .map(|(l, &x)| {
            let bin = l.min(CEPSTRUM_SIZE - l) as f64;
            let ratio = (bin * fs / CEPSTRUM_SIZE as f64 / spec.leakage_corner_hz).powi(2);
            x - atten * ratio / (1.0 + ratio)
        })
        .collect();
    let open = PathShape {
        log_mag: ear_log,
        pair: None,
        lead: spec.ear_delay,
        len: lh,
        support: None,
    };
    let occ = PathShape {
        log_mag: leak_log,
        pair: None,
        lead: spec.ear_delay,
        len: lh,
        support: None,
    };
    // one scale for both eardrum paths keeps their level difference
    let ear_scale = 1.0 / rms(&open.render(None));

    let rtfs = spec.exact_rtf_taps.map(|k| {
        let order = cepstral_order(k);
        let mut r_open = min_phase_from_log_magnitude(&s.smooth_log_magnitude(order, 0.3), k);
        let mut r_occ = min_phase_from_log_magnitude(&s.smooth_log_magnitude(order, 0.3), k);
        normalize_rms_magnitude(&mut r_open);
        normalize_rms_magnitude(&mut r_occ);
        let g = 10f64.powf(-spec.leakage_db / 20.0);
        r_occ.iter_mut().for_each(|x| *x *= g);
        (
            [vec![0.0; spec.ear_delay], r_open].concat(),
            [vec![0.0; spec.ear_delay], r_occ].concat(),
        )
    });

    let order_d = cepstral_order(ld);
    let draw_speakers = |s: &mut ShapeSampler| -> Vec<PathShape> {
        (0..spec.num_loudspeakers)
            .map(|_| speaker_shape(s, spec, order_d))
            .collect()
    };
    let mut speakers = draw_speakers(&mut s);
    if spec.phase == PhaseFamily::CoprimePair {
        let mut attempts = 0;
        while !all_pairs_coprime(&speakers.iter().map(|p| p.render(None)).collect::<Vec<_>>()) {
            attempts += 1;
            if attempts > 16 {
                return Err(Error::InfeasibleSpec(
                    "could not draw co-prime loudspeaker responses".into(),
                ));
            }
            speakers = draw_speakers(&mut s);
        }
    }
    let speaker_scales: Vec<f64> = speakers
        .iter()
        .map(|p| 1.0 / rms(&p.render(None)))
        .collect();

    // Each insertion varies the microphone, leakage and loudspeaker paths by
    // a smooth log-magnitude change; the open ear is unaffected.
    // every measurement carries its own noise floor; the open ear is measured once
    let noise = if spec.exact_rtf_taps.is_some() {
        None
    } else {
        spec.noise_floor_db
    };
    let mut h_open_base: Vec<f64> = open.render(None).iter().map(|x| x * ear_scale).collect();
    s.add_noise(&mut h_open_base, noise);
    let mut sets = Vec::with_capacity(spec.num_sets);
    for _ in 0..spec.num_sets {
        let db = spec.perturbation_db;
        let h_m: Vec<f64> = mic
            .render(s.jitter(db).as_deref())
            .iter()
            .map(|x| x * mic_scale)
            .collect();
        let mut h_m = pad_to(&h_m, lh);
        s.add_noise(&mut h_m, noise);
        let (h_open, h_occ) = match &rtfs {
            Some((ro, rc)) => {
                let body = &h_m[..lh + 1 - ro.len()];
                (convolve_slices(body, ro), convolve_slices(body, rc))
            }
            None => {
                let mut occ: Vec<f64> = occ
                    .render(s.jitter(db).as_deref())
                    .iter()
                    .map(|x| x * ear_scale)
                    .collect();
                s.add_noise(&mut occ, noise);
                (h_open_base.clone(), occ)
            }
        };
        let d: Vec<Vec<f64>> = speakers
            .iter()
            .zip(&speaker_scales)
            .map(|(p, c)| {
                let mut h: Vec<f64> = p
                    .render(s.jitter(db).as_deref())
                    .iter()
                    .map(|x| x * c)
                    .collect();
                if spec.phase != PhaseFamily::CoprimePair {
                    s.add_noise(&mut h, noise);
                }
                h
            })
            .collect();
        let ir = |x: Vec<f64>| ImpulseResponse::new(x, fs);
        sets.push(MeasurementSet::new(
            ir(h_m)?,
            ir(h_open)?,
            ir(h_occ)?,
            d.into_iter().map(ir).collect::<Result<_>>()?,
        )?);
    }
    Scenario::new(sets)
}

fn speaker_shape(s: &mut ShapeSampler, spec: &SynthSpec, order: usize) -> PathShape {
    let log_mag = s.smooth_log_magnitude(order, 0.3);
    let pair = s.zero_pair();
    let pair = match spec.phase {
        PhaseFamily::MinimumPhase => pair,
        PhaseFamily::NonMinimumPhase | PhaseFamily::CoprimePair => reflect(pair),
    };
    // co-prime channels stay short so their zeros are few and well separated
    let support = (spec.phase == PhaseFamily::CoprimePair).then_some(COPRIME_SUPPORT);
    PathShape {
        log_mag,
        pair: Some(pair),
        lead: spec.speaker_delay,
        len: spec.speaker_length,
        support,
    }
}

fn all_pairs_coprime(d: &[Vec<f64>]) -> bool {
    (0..d.len()).all(|i| (i + 1..d.len()).all(|j| numerically_coprime(&d[i], &d[j])))
}
