//! Real-coded genetic algorithm over the four-dimensional fitting box.
//!
//! Mutation is multiplicative with a log-normal factor, so a step is a
//! relative change of the constant. All random draws come from one ChaCha8
//! stream consumed in a fixed order; fitness values are written back by population index, so the
//! outcome does not depend on how evaluations are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::pulse_model::FitBounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Initial standard deviation of the log-step, as a fraction of each
    /// bound's log-range.
    pub mutation_sigma: f64,
    /// Per-generation multiplier applied to `mutation_sigma`.
    pub mutation_decay: f64,
    pub tournament_size: usize,
    pub seed: u64,
    pub bounds: FitBounds,
    pub elitism: usize,
    /// Concurrent fitness evaluators; 0 uses the global rayon pool.
    pub evaluators: usize,
    /// Starting individuals instead of uniform sampling of the box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_population: Option<Vec<[f64; 4]>>,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population: 48,
            generations: 120,
            crossover_rate: 0.9,
            mutation_sigma: 0.05,
            mutation_decay: 0.97,
            tournament_size: 3,
            seed: 42,
            bounds: FitBounds::default(),
            elitism: 2,
            evaluators: 1,
            initial_population: None,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |msg: String| Err(CalibrationError::InvalidConfig(msg));
        if self.population < 4 {
            return bad(format!("population {} < 4", self.population));
        }
        if self.tournament_size == 0 || self.tournament_size >= self.population {
            return bad(format!(
                "tournament size {} must lie in [1, population)",
                self.tournament_size
            ));
        }
        if self.elitism == 0 || self.elitism >= self.population {
            return bad(format!(
                "elitism {} must lie in [1, population)",
                self.elitism
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!(
                "crossover rate {} outside [0, 1]",
                self.crossover_rate
            ));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return bad(format!(
                "mutation sigma {} must be finite and >= 0",
                self.mutation_sigma
            ));
        }
        if !(self.mutation_decay > 0.0 && self.mutation_decay <= 1.0) {
            return bad(format!(
                "mutation decay {} outside (0, 1]",
                self.mutation_decay
            ));
        }
        for i in 0..4 {
            let (lo, hi) = (self.bounds.lo[i], self.bounds.hi[i]);
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!(
                    "bounds for gene {i} must satisfy 0 < lo < hi, got [{lo}, {hi}]"
                ));
            }
        }
        if let Some(init) = &self.initial_population {
            if init.len() != self.population {
                return bad(format!(
                    "initial population has {} individuals, expected {}",
                    init.len(),
                    self.population
                ));
            }
            if let Some(k) = init.iter().find(|k| !self.bounds.contains(k)) {
                return bad(format!("initial individual {k:?} outside bounds"));
            }
        }
        Ok(())
    }
}

/// Outcome of one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub best: [f64; 4],
    pub best_error: f64,
    /// Best error of the initial population followed by one entry per generation.
    pub history: Vec<f64>,
    pub evaluations: u64,
}

fn score<F>(pool: &Option<rayon::ThreadPool>, genes: &[[f64; 4]], fitness: &F) -> Vec<f64>
where
    F: Fn(&[f64; 4]) -> f64 + Sync,
{
    let eval = |g: &[f64; 4]| {
        let e = fitness(g);
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    };
    match pool {
        Some(pool) => pool.install(|| genes.par_iter().map(eval).collect()),
        None => genes.iter().map(eval).collect(),
    }
}

fn ranked(errors: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    idx
}

fn tournament(rng: &mut ChaCha8Rng, errors: &[f64], size: usize) -> usize {
    let mut winner = rng.random_range(0..errors.len());
    for _ in 1..size {
        let c = rng.random_range(0..errors.len());
        if errors[c]
            .total_cmp(&errors[winner])
            .then(c.cmp(&winner))
            .is_lt()
        {
            winner = c;
        }
    }
    winner
}

/// Minimizes `fitness` over the bounds box. `fitness` only ever sees points
/// inside the box; NaN is treated as infinitely bad.
pub fn evolve<F>(cfg: &GAConfig, fitness: F) -> Result<Evolution, CalibrationError>
where
    F: Fn(&[f64; 4]) -> f64 + Sync,
{
    cfg.validate()?;
    let pool = match cfg.evaluators {
        1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CalibrationError::InvalidConfig(e.to_string()))?,
        ),
    };
    let (lo, hi) = (cfg.bounds.lo, cfg.bounds.hi);
    let log_range: [f64; 4] = std::array::from_fn(|i| (hi[i] / lo[i]).ln());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut genes: Vec<[f64; 4]> = match &cfg.initial_population {
        Some(init) => init.clone(),
        None => (0..cfg.population)
            .map(|_| {
                std::array::from_fn(|i| {
                    let u: f64 = rng.random();
                    (lo[i] * (u * log_range[i]).exp()).clamp(lo[i], hi[i])
                })
            })
            .collect(),
    };
    let mut errors = score(&pool, &genes, &fitness);
    let mut evaluations = genes.len() as u64;
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(errors[ranked(&errors)[0]]);

    let mut sigma = cfg.mutation_sigma;
    for _ in 0..cfg.generations {
        let order = ranked(&errors);
        let mut next: Vec<[f64; 4]> = order[..cfg.elitism].iter().map(|&i| genes[i]).collect();
        let elite_errors: Vec<f64> = order[..cfg.elitism].iter().map(|&i| errors[i]).collect();
        while next.len() < cfg.population {
            let a = tournament(&mut rng, &errors, cfg.tournament_size);
            let b = tournament(&mut rng, &errors, cfg.tournament_size);
            let mut child = genes[a];
            if rng.random::<f64>() < cfg.crossover_rate {
                for (i, gene) in child.iter_mut().enumerate() {
                    if rng.random::<bool>() {
                        *gene = genes[b][i];
                    }
                }
            }
            for (i, gene) in child.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *gene = (*gene * (sigma * log_range[i] * z).exp()).clamp(lo[i], hi[i]);
            }
            next.push(child);
        }
        let fresh = score(&pool, &next[cfg.elitism..], &fitness);
        evaluations += fresh.len() as u64;
        errors = elite_errors.into_iter().chain(fresh).collect();
        genes = next;
        history.push(errors[ranked(&errors)[0]]);
        sigma *= cfg.mutation_decay;
    }
    let best = ranked(&errors)[0];
    Ok(Evolution {
        best: genes[best],
        best_error: errors[best],
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

    fn sphere(target: [f64; 4]) -> impl Fn(&[f64; 4]) -> f64 + Sync {
        move |k| (0..4).map(|i| (k[i] / target[i]).ln().powi(2)).sum()
    }

    #[test]
    fn defaults_validate() {
        GAConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            GAConfig {
                population: 3,
                ..Default::default()
            },
            GAConfig {
                tournament_size: 48,
                ..Default::default()
            },
            GAConfig {
                elitism: 0,
                ..Default::default()
            },
            GAConfig {
                crossover_rate: 1.5,
                ..Default::default()
            },
            GAConfig {
                mutation_decay: 0.0,
                ..Default::default()
            },
            GAConfig {
                bounds: FitBounds {
                    lo: [1.0; 4],
                    hi: [1.0; 4],
                },
                ..Default::default()
            },
        ];
        for cfg in cases {
            assert!(
                matches!(cfg.validate(), Err(CalibrationError::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn converges_on_smooth_bowl() {
        let target = [3.0, 7.0, 0.2, 1.5];
        let evo = evolve(&GAConfig::default(), sphere(target)).unwrap();
        for i in 0..4 {
            assert!(
                (evo.best[i] / target[i] - 1.0).abs() < 0.01,
                "{:?}",
                evo.best
            );
        }
        assert_eq!(evo.history.len(), 121);
    }

    #[test]
    fn history_never_increases() {
        let evo = evolve(
            &GAConfig {
                generations: 40,
                ..Default::default()
            },
            sphere([1.0; 4]),
        )
        .unwrap();
        assert!(evo.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(evo.best_error, *evo.history.last().unwrap());
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = GAConfig {
            generations: 30,
            ..Default::default()
        };
        let a = evolve(&cfg, sphere([2.0; 4])).unwrap();
        let b = evolve(&cfg, sphere([2.0; 4])).unwrap();
        assert_eq!(a, b);
        let c = evolve(&GAConfig { seed: 7, ..cfg }, sphere([2.0; 4])).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn independent_of_evaluator_count() {
        let base = GAConfig {
            generations: 30,
            ..Default::default()
        };
        let serial = evolve(&base, sphere([5.0, 0.5, 0.05, 2.0])).unwrap();
        for n in [2, 8, 0] {
            let par = evolve(
                &GAConfig {
                    evaluators: n,
                    ..base.clone()
                },
                sphere([5.0, 0.5, 0.05, 2.0]),
            )
            .unwrap();
            assert_eq!(serial, par, "evaluators = {n}");
        }
    }

    #[test]
    fn clones_without_mutation_stay_put() {
        let k = [2.0, 3.0, 0.4, 0.9];
        let cfg = GAConfig {
            mutation_sigma: 0.0,
            generations: 25,
            initial_population: Some(vec![k; 48]),
            ..Default::default()
        };
        let evo = evolve(&cfg, sphere([1.0; 4])).unwrap();
        assert!(evo.history.iter().all(|&h| h == evo.history[0]));
        assert_eq!(evo.best, k);
    }

    #[test]
    fn evaluations_stay_in_bounds() {
        let cfg = GAConfig {
            mutation_sigma: 0.5,
            generations: 60,
            ..Default::default()
        };
        let outside = AtomicBool::new(false);
        let count = AtomicU64::new(0);
        let bounds = cfg.bounds;
        // Optimum sits outside the box, pushing the search against its faces.
        let evo = evolve(&cfg, |k| {
            count.fetch_add(1, Ordering::Relaxed);
            if !bounds.contains(k) {
                outside.store(true, Ordering::Relaxed);
            }
            -k.iter().map(|v| v.ln()).sum::<f64>()
        })
        .unwrap();
        assert!(!outside.load(Ordering::Relaxed));
        assert_eq!(count.load(Ordering::Relaxed), evo.evaluations);
        assert_eq!(evo.evaluations, 48 + 60 * 46);
        assert!(bounds.contains(&evo.best));
    }

    #[test]
    fn nan_fitness_loses() {
        let evo = evolve(
            &GAConfig {
                generations: 10,
                ..Default::default()
            },
            |k| {
                if k[0] > 1.0 {
                    f64::NAN
                } else {
                    k[0]
                }
            },
        )
        .unwrap();
        assert!(evo.best[0] <= 1.0);
        assert!(evo.best_error.is_finite());
    }
}
