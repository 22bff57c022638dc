use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MeasurementSet, Scenario};
use crate::error::{Error, Result};
use crate::signals::ImpulseResponse;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    sample_rate_hz: f64,
    num_loudspeakers: usize,
    sets: Vec<SetFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetFile {
    h_m: Vec<f64>,
    h_open: Vec<f64>,
    h_occ: Vec<f64>,
    d: Vec<Vec<f64>>,
}

fn to_ir(samples: Vec<f64>, fs: f64, path: String) -> Result<ImpulseResponse> {
    ImpulseResponse::new(samples, fs).map_err(|e| Error::schema(path, e.to_string()))
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    let file = ScenarioFile {
        sample_rate_hz: scenario.sample_rate_hz(),
        num_loudspeakers: scenario.num_loudspeakers(),
        sets: scenario
            .sets()
            .iter()
            .map(|s| SetFile {
                h_m: s.h_m.samples().to_vec(),
                h_open: s.h_open.samples().to_vec(),
                h_occ: s.h_occ.samples().to_vec(),
                d: s.d.iter().map(|d| d.samples().to_vec()).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("scenario serializes")
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::schema("scenario", e.to_string()))?;
    let fs = file.sample_rate_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::schema(
            "sample_rate_hz",
            format!("must be positive, got {fs}"),
        ));
    }
    if file.num_loudspeakers == 0 {
        return Err(Error::schema("num_loudspeakers", "must be at least 1"));
    }
    let mut sets = Vec::with_capacity(file.sets.len());
    for (i, s) in file.sets.into_iter().enumerate() {
        let path = format!("sets[{i}]");
        if s.d.len() != file.num_loudspeakers {
            return Err(Error::schema(
                format!("{path}.d"),
                format!(
                    "{} loudspeakers, num_loudspeakers is {}",
                    s.d.len(),
                    file.num_loudspeakers
                ),
            ));
        }
        let d =
            s.d.into_iter()
                .enumerate()
                .map(|(n, x)| to_ir(x, fs, format!("{path}.d[{n}]")))
                .collect::<Result<Vec<_>>>()?;
        let set = MeasurementSet {
            h_m: to_ir(s.h_m, fs, format!("{path}.h_m"))?,
            h_open: to_ir(s.h_open, fs, format!("{path}.h_open"))?,
            h_occ: to_ir(s.h_occ, fs, format!("{path}.h_occ"))?,
            d,
        };
        sets.push(set);
    }
    Scenario::new(sets)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scenario_to_json(scenario))?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    scenario_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_speaker_length_names_set() {
        let text = r#"{"sample_rate_hz":16000,"num_loudspeakers":2,"sets":[
            {"h_m":[1],"h_open":[1],"h_occ":[0],"d":[[1,0],[1,0]]},
            {"h_m":[1],"h_open":[1],"h_occ":[0],"d":[[1,0],[1]]}]}"#;
        let err = scenario_from_json(text).unwrap_err().to_string();
        assert!(err.contains("sets[1].d[1]"), "{err}");
    }

    #[test]
    fn loudspeaker_count_checked() {
        let text = r#"{"sample_rate_hz":16000,"num_loudspeakers":2,"sets":[
            {"h_m":[1],"h_open":[1],"h_occ":[0],"d":[[1,0]]}]}"#;
        let err = scenario_from_json(text).unwrap_err().to_string();
        assert!(err.contains("sets[0].d"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"sample_rate_hz":16000,"num_loudspeakers":1,"sets":[{"h_m":[1],"h_open":[1],"d":[[1]]}]}"#;
        let err = scenario_from_json(text).unwrap_err().to_string();
        assert!(err.contains("h_occ"), "{err}");
    }

    #[test]
    fn full_size_dimensions_accepted() {
        let set = serde_json::json!({
            "h_m": vec![0.01; 130], "h_open": vec![0.01; 130], "h_occ": vec![0.001; 130],
            "d": [vec![0.02; 100], vec![0.03; 100]],
        });
        let doc = serde_json::json!({
            "sample_rate_hz": 16000.0, "num_loudspeakers": 2, "sets": vec![set; 5],
        });
        let s = scenario_from_json(&doc.to_string()).unwrap();
        assert_eq!(
            (
                s.num_sets(),
                s.num_loudspeakers(),
                s.response_length(),
                s.speaker_length()
            ),
            (5, 2, 130, 100)
        );
    }
}
