use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ForwardPathParams;
use crate::signals::next_power_of_two;

/// Regularization used when the plain regularized variant gets no explicit lambda.
pub const DEFAULT_STABILIZING_LAMBDA: f64 = 1e-8;

/// Solver variant, from plain ATF-domain least squares to the robust
/// multi-measurement design with frequency-dependent regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Pseudo-inverse of the full ATF system.
    #[serde(rename = "LS_ATF")]
    LsAtf,
    /// RTF system with identity regularization, no acausal delay.
    #[serde(rename = "RLS")]
    Rls,
    /// RTF system with identity regularization and acausal delay.
    #[serde(rename = "R_DELTA_LS")]
    RDeltaLs,
    /// Frequency-dependent regularization, single measurement set.
    #[serde(rename = "FR_DELTA_LS")]
    FrDeltaLs,
    /// Frequency-dependent regularization over several measurement sets.
    #[serde(rename = "MFR_DELTA_LS")]
    MfrDeltaLs,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::LsAtf => "LS_ATF",
            Variant::Rls => "RLS",
            Variant::RDeltaLs => "R_DELTA_LS",
            Variant::FrDeltaLs => "FR_DELTA_LS",
            Variant::MfrDeltaLs => "MFR_DELTA_LS",
        }
    }

    pub fn uses_acausal_delay(self) -> bool {
        !matches!(self, Variant::LsAtf | Variant::Rls)
    }

    pub fn uses_frequency_weights(self) -> bool {
        matches!(self, Variant::FrDeltaLs | Variant::MfrDeltaLs)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::schema("variant", format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub variant: Variant,
    #[serde(rename = "L_A")]
    pub filter_length: usize,
    #[serde(rename = "d_H")]
    pub acausal_delay: usize,
    pub lambda: f64,
    pub beta: f64,
    #[serde(rename = "L_FFT", default, skip_serializing_if = "Option::is_none")]
    pub fft_size: Option<usize>,
}

impl DesignConfig {
    /// Operating point `L_A = 99, d_H = 32, lambda = 0.1, beta = 1`.
    pub fn operating_point(variant: Variant) -> Self {
        Self {
            variant,
            filter_length: 99,
            acausal_delay: 32,
            lambda: 0.1,
            beta: 1.0,
            fft_size: None,
        }
        .normalized()
    }

    /// Forces `d_H = 0` for the variants without acausality management.
    pub fn normalized(mut self) -> Self {
        if !self.variant.uses_acausal_delay() {
            self.acausal_delay = 0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_length == 0 {
            return Err(Error::schema("L_A", "filter length must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::schema(
                "lambda",
                format!("must be finite and non-negative, got {}", self.lambda),
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::schema(
                "beta",
                format!("must be finite and positive, got {}", self.beta),
            ));
        }
        if !self.variant.uses_acausal_delay() && self.acausal_delay != 0 {
            return Err(Error::schema(
                "d_H",
                format!("must be 0 for variant {}", self.variant),
            ));
        }
        if let Some(n) = self.fft_size {
            if n < self.filter_length {
                return Err(Error::schema(
                    "L_FFT",
                    format!("{n} is shorter than L_A = {}", self.filter_length),
                ));
            }
        }
        Ok(())
    }

    /// Explicit `L_FFT`, or the smallest power of two covering four times the
    /// equalized loudspeaker response length.
    pub fn resolved_fft_size(&self, speaker_length: usize) -> usize {
        self.fft_size
            .unwrap_or_else(|| next_power_of_two(4 * (speaker_length + self.filter_length - 1)))
    }
}

/// Contents of a design configuration file: solver settings, forward path and
/// the measurement set used by single-set variants.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignJob {
    pub config: DesignConfig,
    pub forward_path: ForwardPathParams,
    pub design_set: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignJobFile {
    variant: Option<Variant>,
    #[serde(rename = "L_A")]
    filter_length: Option<usize>,
    #[serde(rename = "d_H")]
    acausal_delay: Option<usize>,
    lambda: Option<f64>,
    beta: Option<f64>,
    #[serde(rename = "L_FFT")]
    fft_size: Option<usize>,
    #[serde(rename = "G0_db")]
    gain_db: Option<f64>,
    #[serde(rename = "d_G")]
    forward_delay: Option<usize>,
    design_set: Option<usize>,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::schema(field, format!("missing field `{field}`")))
}

impl DesignJob {
    /// Parses a configuration file. Fields a variant does not use may be omitted;
    /// `RLS` falls back to `lambda = 1e-8`.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: DesignJobFile =
            serde_json::from_str(text).map_err(|e| Error::schema("config", e.to_string()))?;
        let variant = required(f.variant, "variant")?;
        let lambda = match variant {
            Variant::LsAtf => f.lambda.unwrap_or(0.0),
            Variant::Rls => f.lambda.unwrap_or(DEFAULT_STABILIZING_LAMBDA),
            _ => required(f.lambda, "lambda")?,
        };
        let beta = if variant.uses_frequency_weights() {
            required(f.beta, "beta")?
        } else {
            f.beta.unwrap_or(1.0)
        };
        let acausal_delay = if variant.uses_acausal_delay() {
            required(f.acausal_delay, "d_H")?
        } else {
            0
        };
        let config = DesignConfig {
            variant,
            filter_length: required(f.filter_length, "L_A")?,
            acausal_delay,
            lambda,
            beta,
            fft_size: f.fft_size,
        };
        config.validate()?;
        let forward_path = ForwardPathParams {
            gain_db: required(f.gain_db, "G0_db")?,
            delay: required(f.forward_delay, "d_G")?,
        };
        if !forward_path.gain_db.is_finite() {
            return Err(Error::schema("G0_db", "must be finite"));
        }
        Ok(Self {
            config,
            forward_path,
            design_set: f.design_set.unwrap_or(0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fft_size_for_reference_lengths() {
        let c = DesignConfig::operating_point(Variant::MfrDeltaLs);
        assert_eq!(c.resolved_fft_size(100), 1024);
        assert_eq!(c.resolved_fft_size(8), 512);
    }

    #[test]
    fn delay_forced_to_zero_without_acausality_management() {
        assert_eq!(DesignConfig::operating_point(Variant::Rls).acausal_delay, 0);
        assert_eq!(
            DesignConfig::operating_point(Variant::LsAtf).acausal_delay,
            0
        );
        assert_eq!(
            DesignConfig::operating_point(Variant::RDeltaLs).acausal_delay,
            32
        );
    }

    #[test]
    fn job_missing_field_is_named() {
        let err = DesignJob::from_json(
            r#"{"variant":"FR_DELTA_LS","L_A":99,"d_H":32,"beta":1,"G0_db":0,"d_G":96}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn rls_defaults_to_stabilizing_lambda() {
        let job = DesignJob::from_json(r#"{"variant":"RLS","L_A":10,"G0_db":0,"d_G":1}"#).unwrap();
        assert_eq!(job.config.lambda, 1e-8);
        assert_eq!(job.config.acausal_delay, 0);
    }

    #[test]
    fn rejects_negative_lambda_and_bad_variant() {
        assert!(DesignJob::from_json(
            r#"{"variant":"R_DELTA_LS","L_A":10,"d_H":0,"lambda":-1,"G0_db":0,"d_G":1}"#
        )
        .is_err());
        assert!(DesignJob::from_json(r#"{"variant":"FOO","L_A":10}"#).is_err());
        assert!("MFR_DELTA_LS".parse::<Variant>().is_ok());
        assert!("mfr".parse::<Variant>().is_err());
    }
}
