//! On-disk store of oracle measurements, one `scenario_NN.json` per scenario.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::params::Scenario;
use crate::pulse_model::PulseShape;
use crate::transport_oracle::{measure_scenario, OracleConfig, OracleMeasurement, ProbeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedScenario {
    pub index: usize,
    pub scenario: Scenario,
    pub measurement: OracleMeasurement,
}

pub fn cache_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("scenario_{index:02}.json"))
}

pub fn store_entry(dir: &Path, entry: &CachedScenario) -> Result<PathBuf, CalibrationError> {
    let path = cache_path(dir, entry.index);
    let io = |source| CalibrationError::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let text = serde_json::to_string_pretty(entry).map_err(|source| CalibrationError::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(io)?;
    Ok(path)
}

fn read_entry(
    dir: &Path,
    index: usize,
    scenario: &Scenario,
) -> Result<CachedScenario, CalibrationError> {
    let path = cache_path(dir, index);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CalibrationError::MissingCache {
                index,
                name: scenario.name.clone(),
                path,
            })
        }
        Err(source) => return Err(CalibrationError::Io { path, source }),
    };
    let entry: CachedScenario =
        serde_json::from_str(&text).map_err(|source| CalibrationError::Json { path, source })?;
    if entry.index != index || entry.scenario.params != scenario.params {
        return Err(CalibrationError::StaleCache {
            index,
            name: scenario.name.clone(),
        });
    }
    Ok(entry)
}

/// Loads the entry of every scenario, failing on the first missing one.
pub fn load_cache(
    dir: &Path,
    scenarios: &[Scenario],
) -> Result<Vec<CachedScenario>, CalibrationError> {
    scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| read_entry(dir, i, s))
        .collect()
}

/// Loads the entries at `indices` of the full scenario list.
pub fn load_selected(
    dir: &Path,
    scenarios: &[Scenario],
    indices: &[usize],
) -> Result<Vec<CachedScenario>, CalibrationError> {
    indices
        .iter()
        .map(|&i| read_entry(dir, i, &scenarios[i]))
        .collect()
}

/// Runs the oracle for every scenario without a usable entry and stores the
/// results. Runs are independent and execute on the current rayon pool.
pub fn build_cache(
    dir: &Path,
    scenarios: &[Scenario],
    cfg: &OracleConfig,
    refresh: bool,
) -> Result<Vec<CachedScenario>, CalibrationError> {
    let all: Vec<usize> = (0..scenarios.len()).collect();
    build_selected(dir, scenarios, &all, cfg, refresh)
}

/// [`build_cache`] restricted to `indices` of the full scenario list.
pub fn build_selected(
    dir: &Path,
    scenarios: &[Scenario],
    indices: &[usize],
    cfg: &OracleConfig,
    refresh: bool,
) -> Result<Vec<CachedScenario>, CalibrationError> {
    indices
        .par_iter()
        .map(|&index| {
            let s = &scenarios[index];
            if !refresh {
                match read_entry(dir, index, s) {
                    Ok(e) if e.measurement.config == *cfg => return Ok(e),
                    Ok(_)
                    | Err(
                        CalibrationError::MissingCache { .. } | CalibrationError::StaleCache { .. },
                    ) => {}
                    Err(e) => return Err(e),
                }
            }
            let measurement =
                measure_scenario(&s.params, cfg).map_err(|source| CalibrationError::Oracle {
                    index,
                    name: s.name.clone(),
                    source,
                })?;
            let entry = CachedScenario {
                index,
                scenario: s.clone(),
                measurement,
            };
            store_entry(dir, &entry)?;
            Ok(entry)
        })
        .collect()
}

/// Oracle triples of the cached entries for the chosen probe.
pub fn oracle_shapes(
    entries: &[CachedScenario],
    probe: ProbeKind,
) -> Result<Vec<PulseShape>, CalibrationError> {
    entries
        .iter()
        .map(|e| {
            e.measurement
                .shape(probe)
                .ok_or_else(|| CalibrationError::MissingProbe {
                    index: e.index,
                    name: e.scenario.name.clone(),
                    probe: match probe {
                        ProbeKind::Centerline => "centerline",
                        ProbeKind::Section => "section",
                    },
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MeasuredPulse;
    use crate::params::{expand_scenarios, SystemParameters};
    use crate::transport_oracle::{ProbeMeasurement, WindowDelays};

    fn fake_measurement(scale: f64) -> OracleMeasurement {
        let pulse = MeasuredPulse {
            amplitude: scale,
            fwhm: 1e-3,
            peak_pos: 0.08,
            half_max_center: 0.08,
            delay: None,
            quality: 1.0,
            multi_peak: false,
        };
        let probe = ProbeMeasurement {
            shape: PulseShape {
                amplitude: scale,
                width: 1e-3,
                delay: 3.0,
                center: 0.08,
            },
            spatial: pulse,
            at_generation: pulse,
            at_sampling: pulse,
            capture_time: 10.0,
            window_delays: WindowDelays {
                from_start: 4.0,
                from_midpoint: 3.0,
                from_end: 2.0,
            },
        };
        OracleMeasurement {
            config: OracleConfig::default(),
            centerline: probe,
            section: None,
            steps: 10,
            dt: 0.01,
            min_concentration: 0.0,
        }
    }

    fn populate(dir: &Path, scenarios: &[Scenario], skip: Option<usize>) {
        for (index, s) in scenarios.iter().enumerate() {
            if Some(index) != skip {
                let entry = CachedScenario {
                    index,
                    scenario: s.clone(),
                    measurement: fake_measurement(index as f64 + 1.0),
                };
                store_entry(dir, &entry).unwrap();
            }
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sc = expand_scenarios(&SystemParameters::default()).unwrap();
        populate(dir.path(), &sc, None);
        let back = load_cache(dir.path(), &sc).unwrap();
        assert_eq!(back.len(), 30);
        assert_eq!(back[12].measurement, fake_measurement(13.0));
        let shapes = oracle_shapes(&back, ProbeKind::Centerline).unwrap();
        assert_eq!(shapes[29].amplitude, 30.0);
        assert!(matches!(
            oracle_shapes(&back, ProbeKind::Section),
            Err(CalibrationError::MissingProbe { index: 0, .. })
        ));
    }

    #[test]
    fn missing_entry_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let sc = expand_scenarios(&SystemParameters::default()).unwrap();
        populate(dir.path(), &sc, Some(7));
        assert_eq!(load_selected(dir.path(), &sc, &[2, 9]).unwrap()[1].index, 9);
        match load_cache(dir.path(), &sc) {
            Err(CalibrationError::MissingCache { index, name, path }) => {
                assert_eq!(index, 7);
                assert_eq!(name, sc[7].name);
                assert!(path.ends_with("scenario_07.json"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_parameters_are_stale() {
        let dir = tempfile::tempdir().unwrap();
        let sc = expand_scenarios(&SystemParameters::default()).unwrap();
        populate(dir.path(), &sc, None);
        let mut shifted = sc.clone();
        shifted.swap(0, 1);
        assert!(matches!(
            load_cache(dir.path(), &shifted),
            Err(CalibrationError::StaleCache { index: 0, .. })
        ));
    }
}
