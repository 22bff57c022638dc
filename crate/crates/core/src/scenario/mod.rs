//! Acoustic scene model: measurement sets, the forward path and scenario files.

mod io;
mod synth;

pub use io::{load_scenario, save_scenario, scenario_from_json, scenario_to_json};
pub use synth::{resultant, synth_scenario, PhaseFamily, SynthSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signals::ImpulseResponse;

/// Acoustic transfer functions for one insertion of the device.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Source to device microphone.
    pub h_m: ImpulseResponse,
    /// Source to open-ear eardrum.
    pub h_open: ImpulseResponse,
    /// Source to eardrum with the device inserted and switched off (leakage path).
    pub h_occ: ImpulseResponse,
    /// Device loudspeakers to eardrum, one per loudspeaker.
    pub d: Vec<ImpulseResponse>,
}

impl MeasurementSet {
    pub fn new(
        h_m: ImpulseResponse,
        h_open: ImpulseResponse,
        h_occ: ImpulseResponse,
        d: Vec<ImpulseResponse>,
    ) -> Result<Self> {
        let set = Self {
            h_m,
            h_open,
            h_occ,
            d,
        };
        set.validate("set")?;
        Ok(set)
    }

    pub(crate) fn validate(&self, path: &str) -> Result<()> {
        if self.d.is_empty() {
            return Err(Error::schema(
                format!("{path}.d"),
                "at least one loudspeaker is required",
            ));
        }
        let fs = self.h_m.sample_rate_hz();
        let all = [&self.h_m, &self.h_open, &self.h_occ]
            .into_iter()
            .chain(self.d.iter());
        if all.clone().any(|h| h.sample_rate_hz() != fs) {
            return Err(Error::schema(
                path,
                "responses do not share one sample rate",
            ));
        }
        let lh = self.h_m.len();
        for (name, h) in [("h_open", &self.h_open), ("h_occ", &self.h_occ)] {
            if h.len() != lh {
                return Err(Error::schema(
                    format!("{path}.{name}"),
                    format!("length {} differs from h_m length {lh}", h.len()),
                ));
            }
        }
        let ld = self.d[0].len();
        if let Some((n, h)) = self.d.iter().enumerate().find(|(_, h)| h.len() != ld) {
            return Err(Error::schema(
                format!("{path}.d[{n}]"),
                format!("length {} differs from d[0] length {ld}", h.len()),
            ));
        }
        Ok(())
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.d.len()
    }

    pub fn response_length(&self) -> usize {
        self.h_m.len()
    }

    pub fn speaker_length(&self) -> usize {
        self.d[0].len()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.h_m.sample_rate_hz()
    }

    /// Same set restricted to the first `n` loudspeakers.
    pub fn with_loudspeakers(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.d.len() {
            return Err(Error::InvalidInput(format!(
                "cannot select {n} of {} loudspeakers",
                self.d.len()
            )));
        }
        Ok(Self {
            d: self.d[..n].to_vec(),
            ..self.clone()
        })
    }
}

/// Parameters of a broadband-gain-plus-delay forward path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardPathParams {
    #[serde(rename = "G0_db")]
    pub gain_db: f64,
    #[serde(rename = "d_G")]
    pub delay: usize,
}

impl Default for ForwardPathParams {
    fn default() -> Self {
        Self {
            gain_db: 0.0,
            delay: 96,
        }
    }
}

/// Hearing-device processing between microphone and equalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPath {
    pub g: ImpulseResponse,
    pub params: Option<ForwardPathParams>,
}

impl ForwardPath {
    pub fn from_ir(g: ImpulseResponse) -> Self {
        Self { g, params: None }
    }

    pub fn from_params(params: ForwardPathParams, sample_rate_hz: f64) -> Self {
        forward_path_ir(params.gain_db, params.delay, sample_rate_hz)
    }

    /// Processing delay in seconds, when the path is parametric.
    pub fn delay_seconds(&self) -> Option<f64> {
        self.params
            .map(|p| p.delay as f64 / self.g.sample_rate_hz())
    }
}

/// `g = [0; d_G] ++ [10^(G0/20)]`.
pub fn forward_path_ir(gain_db: f64, delay: usize, sample_rate_hz: f64) -> ForwardPath {
    let mut samples = vec![0.0; delay + 1];
    samples[delay] = 10f64.powf(gain_db / 20.0);
    ForwardPath {
        g: ImpulseResponse::new(samples, sample_rate_hz).expect("finite forward path"),
        params: Some(ForwardPathParams { gain_db, delay }),
    }
}

/// Repeated measurement sets of one device, e.g. after reinsertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    sets: Vec<MeasurementSet>,
    sample_rate_hz: f64,
}

impl Scenario {
    pub fn new(sets: Vec<MeasurementSet>) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::schema("sets", "at least one measurement set is required"))?;
        let fs = first.sample_rate_hz();
        let (n, lh, ld) = (
            first.num_loudspeakers(),
            first.response_length(),
            first.speaker_length(),
        );
        for (i, s) in sets.iter().enumerate() {
            let path = format!("sets[{i}]");
            s.validate(&path)?;
            if s.sample_rate_hz() != fs {
                return Err(Error::schema(path, "sample rate differs from sets[0]"));
            }
            if s.num_loudspeakers() != n {
                return Err(Error::schema(
                    format!("{path}.d"),
                    format!("{} loudspeakers, sets[0] has {n}", s.num_loudspeakers()),
                ));
            }
            if s.response_length() != lh {
                return Err(Error::schema(
                    format!("{path}.h_m"),
                    format!(
                        "length {} differs from sets[0] length {lh}",
                        s.response_length()
                    ),
                ));
            }
            if s.speaker_length() != ld {
                return Err(Error::schema(
                    format!("{path}.d"),
                    format!(
                        "length {} differs from sets[0] length {ld}",
                        s.speaker_length()
                    ),
                ));
            }
        }
        Ok(Self {
            sets,
            sample_rate_hz: fs,
        })
    }

    pub fn sets(&self) -> &[MeasurementSet] {
        &self.sets
    }

    pub fn into_sets(self) -> Vec<MeasurementSet> {
        self.sets
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.sets[0].num_loudspeakers()
    }

    pub fn response_length(&self) -> usize {
        self.sets[0].response_length()
    }

    pub fn speaker_length(&self) -> usize {
        self.sets[0].speaker_length()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Scenario restricted to the first `n` loudspeakers of every set.
    pub fn with_loudspeakers(&self, n: usize) -> Result<Self> {
        let sets = self
            .sets
            .iter()
            .map(|s| s.with_loudspeakers(n))
            .collect::<Result<_>>()?;
        Scenario::new(sets)
    }

    /// Scenario made of the sets at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let sets = indices
            .iter()
            .map(|&i| {
                self.sets
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("set index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Scenario::new(sets)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = scenario_to_json(self);
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
