use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DesignConfig;
use crate::error::{Error, Result};
use crate::scenario::ForwardPathParams;

/// Designed equalizer: one coefficient vector per loudspeaker plus the design
/// settings and the fingerprint of the scenario it was designed on.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerFilter {
    coefficients: Vec<Vec<f64>>,
    config: DesignConfig,
    forward_path: Option<ForwardPathParams>,
    scenario_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct ConfigSnapshot {
    #[serde(flatten)]
    design: DesignConfig,
    #[serde(flatten)]
    forward_path: Option<ForwardPathParams>,
}

#[derive(Serialize, Deserialize)]
struct FilterFile {
    num_loudspeakers: usize,
    filter_length: usize,
    #[serde(rename = "d_H")]
    acausal_delay: usize,
    coefficients: Vec<Vec<f64>>,
    config: ConfigSnapshot,
    scenario_fingerprint: String,
}

impl EqualizerFilter {
    pub fn new(
        coefficients: Vec<Vec<f64>>,
        config: DesignConfig,
        forward_path: Option<ForwardPathParams>,
        scenario_fingerprint: String,
    ) -> Result<Self> {
        let la = config.filter_length;
        if coefficients.is_empty() {
            return Err(Error::schema(
                "coefficients",
                "at least one loudspeaker filter is required",
            ));
        }
        for (n, a) in coefficients.iter().enumerate() {
            if a.len() != la {
                return Err(Error::schema(
                    format!("coefficients[{n}]"),
                    format!("length {} differs from filter_length {la}", a.len()),
                ));
            }
            if let Some(k) = a.iter().position(|x| !x.is_finite()) {
                return Err(Error::schema(
                    format!("coefficients[{n}][{k}]"),
                    "non-finite coefficient",
                ));
            }
        }
        Ok(Self {
            coefficients,
            config,
            forward_path,
            scenario_fingerprint,
        })
    }

    /// Splits the stacked vector `[a_1; ...; a_N]`.
    pub fn from_stacked(
        stacked: &[f64],
        num_loudspeakers: usize,
        config: DesignConfig,
        forward_path: Option<ForwardPathParams>,
        scenario_fingerprint: String,
    ) -> Result<Self> {
        let la = config.filter_length;
        if stacked.len() != num_loudspeakers * la {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {num_loudspeakers} x {la}",
                stacked.len()
            )));
        }
        let coefficients = stacked.chunks(la).map(<[f64]>::to_vec).collect();
        Self::new(coefficients, config, forward_path, scenario_fingerprint)
    }

    /// All-zero filter (processing without equalization output).
    pub fn zeros(num_loudspeakers: usize, config: DesignConfig) -> Self {
        let la = config.filter_length;
        Self {
            coefficients: vec![vec![0.0; la]; num_loudspeakers],
            config,
            forward_path: None,
            scenario_fingerprint: String::new(),
        }
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.coefficients.concat()
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.coefficients.len()
    }

    pub fn filter_length(&self) -> usize {
        self.config.filter_length
    }

    pub fn acausal_delay(&self) -> usize {
        self.config.acausal_delay
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn forward_path(&self) -> Option<ForwardPathParams> {
        self.forward_path
    }

    pub fn scenario_fingerprint(&self) -> &str {
        &self.scenario_fingerprint
    }

    pub fn to_json(&self) -> String {
        let file = FilterFile {
            num_loudspeakers: self.num_loudspeakers(),
            filter_length: self.filter_length(),
            acausal_delay: self.acausal_delay(),
            coefficients: self.coefficients.clone(),
            config: ConfigSnapshot {
                design: self.config.clone(),
                forward_path: self.forward_path,
            },
            scenario_fingerprint: self.scenario_fingerprint.clone(),
        };
        serde_json::to_string_pretty(&file).expect("filter serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FilterFile =
            serde_json::from_str(text).map_err(|e| Error::schema("filter", e.to_string()))?;
        if f.coefficients.len() != f.num_loudspeakers {
            return Err(Error::schema(
                "coefficients",
                format!(
                    "{} vectors, num_loudspeakers is {}",
                    f.coefficients.len(),
                    f.num_loudspeakers
                ),
            ));
        }
        if f.filter_length != f.config.design.filter_length
            || f.acausal_delay != f.config.design.acausal_delay
        {
            return Err(Error::schema(
                "config",
                "filter_length / d_H disagree with the config snapshot",
            ));
        }
        Self::new(
            f.coefficients,
            f.config.design,
            f.config.forward_path,
            f.scenario_fingerprint,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Variant;

    #[test]
    fn json_round_trip() {
        let cfg = DesignConfig::operating_point(Variant::MfrDeltaLs);
        let cfg = DesignConfig {
            filter_length: 3,
            ..cfg
        };
        let f = EqualizerFilter::new(
            vec![vec![0.1, 1.0 / 3.0, -2.5e-17], vec![1.0, 0.0, 0.0]],
            cfg,
            Some(ForwardPathParams {
                gain_db: 0.0,
                delay: 96,
            }),
            "abc".into(),
        )
        .unwrap();
        let text = f.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["num_loudspeakers"], 2);
        assert_eq!(v["filter_length"], 3);
        assert_eq!(v["d_H"], 32);
        assert_eq!(v["config"]["d_G"], 96);
        assert_eq!(EqualizerFilter::from_json(&text).unwrap(), f);
    }

    #[test]
    fn rejects_ragged_coefficients() {
        let cfg = DesignConfig {
            filter_length: 2,
            ..DesignConfig::operating_point(Variant::Rls)
        };
        assert!(EqualizerFilter::new(vec![vec![1.0]], cfg, None, String::new()).is_err());
    }
}
