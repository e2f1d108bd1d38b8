//! Genetic-algorithm calibration of the model constants against oracle
//! measurements, plus per-scenario comparison reports.

mod cache;
mod ga;

pub use cache::{
    build_cache, build_selected, cache_path, load_cache, load_selected, oracle_shapes, store_entry,
    CachedScenario,
};
pub use ga::{evolve, Evolution, GAConfig};

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{component_errors, model_error, pair_residuals, ErrorMode, MetricsError};
use crate::params::Scenario;
use crate::pulse_model::{
    propagated_pulse, FittingParams, ModelError, ModelOptions, Provenance, PulseShape,
};
use crate::transport_oracle::TransportError;

/// Smallest scenario set accepted by `fit`.
pub const MIN_SCENARIOS: usize = 4;

const COMPONENTS: [&str; 3] = ["A_p", "W_p", "T_d"];

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least {min} scenarios with one oracle result each, got {scenarios} scenarios and {oracle} results")]
    InsufficientScenarios {
        scenarios: usize,
        oracle: usize,
        min: usize,
    },
    #[error("oracle result {index} ({name}) has unusable {component} = {value}")]
    DegenerateOracle {
        index: usize,
        name: String,
        component: &'static str,
        value: f64,
    },
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("oracle cache has no entry for scenario {index} ({name}); expected {}", path.display())]
    MissingCache {
        index: usize,
        name: String,
        path: PathBuf,
    },
    #[error("cached scenario {index} ({name}) was computed for different parameters")]
    StaleCache { index: usize, name: String },
    #[error("scenario {index} ({name}) has no {probe} measurement")]
    MissingProbe {
        index: usize,
        name: String,
        probe: &'static str,
    },
    #[error("oracle run for scenario {index} ({name}) failed: {source}")]
    Oracle {
        index: usize,
        name: String,
        #[source]
        source: TransportError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Oracle triple, analytical triple and residuals for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub name: String,
    pub sim: [f64; 3],
    pub ana: [f64; 3],
    pub residuals: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best: FittingParams,
    pub best_error: f64,
    pub history: Vec<f64>,
    pub scenario_table: Vec<ScenarioRow>,
    pub error_mode: ErrorMode,
    pub ga: GAConfig,
    pub evaluations: u64,
}

fn check_inputs(
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
) -> Result<(), CalibrationError> {
    if scenarios.len() != oracle.len() || scenarios.is_empty() {
        return Err(CalibrationError::InsufficientScenarios {
            scenarios: scenarios.len(),
            oracle: oracle.len(),
            min: 1,
        });
    }
    for (index, (s, o)) in scenarios.iter().zip(oracle).enumerate() {
        for (c, &value) in o.triple().iter().enumerate() {
            let usable =
                value.is_finite() && (value > 0.0 || (mode == ErrorMode::Raw && value == 0.0));
            if !usable {
                return Err(CalibrationError::DegenerateOracle {
                    index,
                    name: s.name.clone(),
                    component: COMPONENTS[c],
                    value,
                });
            }
        }
    }
    Ok(())
}

fn analytical(
    scenarios: &[Scenario],
    k: &FittingParams,
    opts: ModelOptions,
) -> Result<Vec<PulseShape>, ModelError> {
    scenarios
        .iter()
        .map(|s| propagated_pulse(&s.params, k, opts))
        .collect()
}

fn pairs(oracle: &[PulseShape], ana: Vec<PulseShape>) -> Vec<(PulseShape, PulseShape)> {
    oracle.iter().copied().zip(ana).collect()
}

/// Error function `E(k)` over the scenarios.
pub fn evaluate(
    k: &FittingParams,
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
) -> Result<f64, CalibrationError> {
    evaluate_with(k, scenarios, oracle, mode, ModelOptions::default())
}

pub fn evaluate_with(
    k: &FittingParams,
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
    opts: ModelOptions,
) -> Result<f64, CalibrationError> {
    check_inputs(scenarios, oracle, mode)?;
    let ana = analytical(scenarios, k, opts)?;
    Ok(model_error(&pairs(oracle, ana), mode)?)
}

/// Same value as [`evaluate`], with the analytical side computed concurrently.
pub fn evaluate_concurrent(
    k: &FittingParams,
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
) -> Result<f64, CalibrationError> {
    check_inputs(scenarios, oracle, mode)?;
    let opts = ModelOptions::default();
    let ana = scenarios
        .par_iter()
        .map(|s| propagated_pulse(&s.params, k, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(model_error(&pairs(oracle, ana), mode)?)
}

/// Per-scenario table for `k`.
pub fn scenario_table(
    k: &FittingParams,
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
    opts: ModelOptions,
) -> Result<Vec<ScenarioRow>, CalibrationError> {
    check_inputs(scenarios, oracle, mode)?;
    let ana = analytical(scenarios, k, opts)?;
    Ok(scenarios
        .iter()
        .zip(oracle)
        .zip(&ana)
        .map(|((s, o), a)| ScenarioRow {
            name: s.name.clone(),
            sim: o.triple(),
            ana: a.triple(),
            residuals: pair_residuals(o, a, mode),
        })
        .collect())
}

/// Fits the four constants by minimizing `E` with the default model options.
pub fn fit(
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    ga: &GAConfig,
    mode: ErrorMode,
) -> Result<FitResult, CalibrationError> {
    fit_with(scenarios, oracle, ga, mode, ModelOptions::default())
}

pub fn fit_with(
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    ga: &GAConfig,
    mode: ErrorMode,
    opts: ModelOptions,
) -> Result<FitResult, CalibrationError> {
    if scenarios.len() != oracle.len() || scenarios.len() < MIN_SCENARIOS {
        return Err(CalibrationError::InsufficientScenarios {
            scenarios: scenarios.len(),
            oracle: oracle.len(),
            min: MIN_SCENARIOS,
        });
    }
    check_inputs(scenarios, oracle, mode)?;
    ga.validate()?;
    // Surfaces model errors before the search hides them as infinite fitness.
    analytical(scenarios, &FittingParams::published(), opts)?;

    let evo = evolve(ga, |k| {
        let Ok(k) = FittingParams::from_array(*k, Provenance::Refit, ga.bounds) else {
            return f64::INFINITY;
        };
        match analytical(scenarios, &k, opts) {
            Ok(ana) => model_error(&pairs(oracle, ana), mode).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    })?;
    let best = FittingParams::from_array(evo.best, Provenance::Refit, ga.bounds)?;
    Ok(FitResult {
        best,
        best_error: evo.best_error,
        history: evo.history,
        scenario_table: scenario_table(&best, scenarios, oracle, mode, opts)?,
        error_mode: mode,
        ga: ga.clone(),
        evaluations: evo.evaluations,
    })
}

/// Analytical outputs used as a stand-in oracle.
pub fn synthetic_oracle(
    scenarios: &[Scenario],
    k: &FittingParams,
) -> Result<Vec<PulseShape>, CalibrationError> {
    Ok(analytical(scenarios, k, ModelOptions::default())?)
}

/// Fixed calibration/validation split: every third scenario (index 2, 5, ...)
/// is held out.
pub fn holdout_split(n: usize) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|i| i % 3 != 2)
}

/// Residual report of a parameter set against oracle results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k: FittingParams,
    pub error_mode: ErrorMode,
    pub error: f64,
    /// Mean relative error per component, `[A_p, W_p, T_d]`.
    pub mean_relative_error: [f64; 3],
    pub rows: Vec<ScenarioRow>,
}

pub fn compare(
    k: &FittingParams,
    scenarios: &[Scenario],
    oracle: &[PulseShape],
    mode: ErrorMode,
) -> Result<ComparisonReport, CalibrationError> {
    let opts = ModelOptions::default();
    let rows = scenario_table(k, scenarios, oracle, mode, opts)?;
    let prs = pairs(oracle, analytical(scenarios, k, opts)?);
    Ok(ComparisonReport {
        k: *k,
        error_mode: mode,
        error: model_error(&prs, mode)?,
        mean_relative_error: component_errors(&prs, ErrorMode::Normalized)?,
        rows,
    })
}

/// Writes rows as CSV with columns `scenario, <c>_sim, <c>_ana, <c>_res`.
pub fn write_rows_csv<W: Write>(rows: &[ScenarioRow], writer: W) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario".to_string()];
    for suffix in ["sim", "ana", "res"] {
        header.extend(COMPONENTS.iter().map(|c| format!("{c}_{suffix}")));
    }
    w.write_record(&header)?;
    for r in rows {
        let (s, a, e) = (r.sim, r.ana, r.residuals);
        w.serialize((
            &r.name, s[0], s[1], s[2], a[0], a[1], a[2], e[0], e[1], e[2],
        ))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{expand_scenarios, SystemParameters};

    fn scenarios() -> Vec<Scenario> {
        expand_scenarios(&SystemParameters::default()).unwrap()
    }

    fn hidden() -> FittingParams {
        FittingParams::from_array(
            [10.0, 15.0, 0.5, 0.7],
            Provenance::Custom,
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn exact_model_has_zero_error() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        assert_eq!(
            evaluate(&hidden(), &sc, &oracle, ErrorMode::Normalized).unwrap(),
            0.0
        );
        assert_eq!(
            evaluate(&hidden(), &sc, &oracle, ErrorMode::Raw).unwrap(),
            0.0
        );
    }

    #[test]
    fn changing_delay_constant_moves_only_delay_residuals() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        let mut k = hidden();
        k.k_t = 0.9;
        let rows = scenario_table(
            &k,
            &sc,
            &oracle,
            ErrorMode::Normalized,
            ModelOptions::default(),
        )
        .unwrap();
        for r in &rows {
            assert_eq!(r.residuals[0], 0.0);
            assert_eq!(r.residuals[1], 0.0);
            assert!((r.residuals[2] - 0.2 / 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn concurrent_evaluation_matches_serial() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &FittingParams::published()).unwrap();
        for mode in [ErrorMode::Normalized, ErrorMode::Raw] {
            let a = evaluate(&hidden(), &sc, &oracle, mode).unwrap();
            let b = evaluate_concurrent(&hidden(), &sc, &oracle, mode).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn error_is_monotone_in_delay_offset() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        let e = |kt: f64| {
            let mut k = hidden();
            k.k_t = kt;
            evaluate(&k, &sc, &oracle, ErrorMode::Normalized).unwrap()
        };
        let below: Vec<f64> = (0..=6).map(|i| e(0.7 - 0.1 * i as f64)).collect();
        let above: Vec<f64> = (0..=20).map(|i| e(0.7 + 0.25 * i as f64)).collect();
        assert!(below.windows(2).all(|w| w[1] > w[0]));
        assert!(above.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn too_few_scenarios() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        let err = fit(
            &sc[..3],
            &oracle[..3],
            &GAConfig::default(),
            ErrorMode::Normalized,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CalibrationError::InsufficientScenarios { scenarios: 3, .. }
        ));
        let err = fit(
            &sc[..5],
            &oracle[..4],
            &GAConfig::default(),
            ErrorMode::Normalized,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CalibrationError::InsufficientScenarios { .. }
        ));
    }

    #[test]
    fn zero_oracle_component_is_degenerate() {
        let sc = scenarios();
        let mut oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        oracle[4].width = 0.0;
        let err = fit(&sc, &oracle, &GAConfig::default(), ErrorMode::Normalized).unwrap_err();
        assert!(matches!(
            err,
            CalibrationError::DegenerateOracle {
                index: 4,
                component: "W_p",
                ..
            }
        ));
        assert!(evaluate(&hidden(), &sc, &oracle, ErrorMode::Raw).is_ok());
    }

    #[test]
    fn self_consistent_fit_recovers_identifiable_combinations() {
        let sc = scenarios();
        let k = hidden();
        let oracle = synthetic_oracle(&sc, &k).unwrap();
        let res = fit(&sc, &oracle, &GAConfig::default(), ErrorMode::Normalized).unwrap();
        let b = res.best;
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(b.k_g * b.k_a, k.k_g * k.k_a) < 0.02, "{b:?}");
        assert!(rel(b.k_g * b.k_w, k.k_g * k.k_w) < 0.02, "{b:?}");
        assert!(rel(b.k_t, k.k_t) < 0.02, "{b:?}");
        assert!(res.best_error < 0.02);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(res.best.provenance, Provenance::Refit);
        assert_eq!(res.scenario_table.len(), 30);
    }

    #[test]
    fn fit_is_reproducible() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        let ga = GAConfig {
            generations: 20,
            ..Default::default()
        };
        let a = fit(&sc, &oracle, &ga, ErrorMode::Normalized).unwrap();
        let b = fit(
            &sc,
            &oracle,
            &GAConfig {
                evaluators: 2,
                ..ga
            },
            ErrorMode::Normalized,
        )
        .unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn comparison_of_exact_model_is_zero() {
        let sc = scenarios();
        let oracle = synthetic_oracle(&sc, &hidden()).unwrap();
        let rep = compare(&hidden(), &sc, &oracle, ErrorMode::Normalized).unwrap();
        assert_eq!(rep.mean_relative_error, [0.0; 3]);
        assert!(rep.rows.iter().all(|r| r.residuals == [0.0; 3]));
        let mut buf = Vec::new();
        write_rows_csv(&rep.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,A_p_sim,W_p_sim,T_d_sim,A_p_ana"));
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn holdout_takes_every_third() {
        let (train, test) = holdout_split(30);
        assert_eq!(train.len(), 20);
        assert_eq!(test, (0..10).map(|i| 3 * i + 2).collect::<Vec<_>>());
    }
}
