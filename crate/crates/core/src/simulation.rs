//! Individual-based copying process under a shifting environment.
//!
//! Each copying event picks a focal individual and a distinct observed
//! individual, evaluates both fitnesses, and lets the focal adopt the
//! observed strategy with a Fermi probability in the fitness difference.
//! Mutation then hits a uniformly chosen individual with probability `mu`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::Scenario;
use crate::error::{check_unit, Error, Result};
use crate::model::{logistic, Environment, RiskModel, Strategy};

/// Generator used for every trajectory.
pub type SimRng = ChaCha8Rng;

/// Human-readable description of the generator and the replicate seeding,
/// stored alongside simulation output.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded via seed_from_u64; replicate seed = splitmix64(base_seed ^ splitmix64(replicate_index))";

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replicate `index` in an ensemble started from `base_seed`.
pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

pub fn rng_for_replicate(base_seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(replicate_seed(base_seed, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSchedule {
    Constant {
        theta: f64,
    },
    /// `theta(t) = amplitude * cos(2 pi t / period + phase)`.
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
}

impl EnvironmentSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentSchedule::Constant { theta } if !theta.is_finite() => Err(Error::InvalidParameter {
                name: "theta",
                value: theta,
                reason: "must be finite",
            }),
            EnvironmentSchedule::Sinusoid { amplitude, .. } if !amplitude.is_finite() => Err(Error::InvalidParameter {
                name: "amplitude",
                value: amplitude,
                reason: "must be finite",
            }),
            EnvironmentSchedule::Sinusoid { period, .. } if !(period.is_finite() && period > 0.0) => {
                Err(Error::InvalidParameter {
                    name: "period",
                    value: period,
                    reason: "must be finite and > 0",
                })
            }
            EnvironmentSchedule::Sinusoid { phase, .. } if !phase.is_finite() => Err(Error::InvalidParameter {
                name: "phase",
                value: phase,
                reason: "must be finite",
            }),
            _ => Ok(()),
        }
    }
}

/// Environment at copying event `event_index`.
pub fn environment_at(event_index: u64, schedule: &EnvironmentSchedule) -> Environment {
    match *schedule {
        EnvironmentSchedule::Constant { theta } => Environment::new(theta),
        EnvironmentSchedule::Sinusoid {
            amplitude,
            period,
            phase,
        } => {
            let angle = std::f64::consts::TAU * (event_index as f64 / period) + phase;
            Environment::new(amplitude * angle.cos())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationKernel {
    /// Fresh strategy uniform on `[0, 1]`.
    GlobalUniform,
    /// `p +- delta` with equal probability, clamped to `[0, 1]`.
    LocalStep { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffMode {
    /// Fitness of a freshly sampled round of `n` interactions.
    Realized,
    /// Expected fitness given the individual's strategy and the current population.
    Expected,
}

/// How out-group partners are found in the social-risk model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// Two fixed halves assigned at initialization.
    FixedSplit,
    /// A fresh random two-group split at every fitness evaluation. A uniform
    /// member of the focal's out-group under a fresh split is a uniform draw
    /// from everyone else, which is how it is sampled.
    Reshuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Every individual starts at the same strategy.
    UniformAt { p: f64 },
    /// Independent uniform strategies on `[0, 1]`.
    RandomUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_size: usize,
    pub selection_strength: f64,
    pub mutation_rate: f64,
    pub mutation_kernel: MutationKernel,
    pub model: RiskModel,
    pub payoff_mode: PayoffMode,
    pub group_mode: GroupMode,
    pub schedule: EnvironmentSchedule,
    pub total_events: u64,
    pub checkpoints: usize,
    pub ensemble_size: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    /// `N = 1000`, `sigma = 10`, `mu = 0.001`, one sinusoid period of `100 N` events.
    fn default() -> Self {
        let n = 1000;
        Self {
            population_size: n,
            selection_strength: 10.0,
            mutation_rate: 0.001,
            mutation_kernel: MutationKernel::GlobalUniform,
            model: RiskModel::Fixed,
            payoff_mode: PayoffMode::Realized,
            group_mode: GroupMode::FixedSplit,
            schedule: EnvironmentSchedule::Sinusoid {
                amplitude: 1.0,
                period: 100.0 * n as f64,
                phase: 0.0,
            },
            total_events: 100 * n as u64,
            checkpoints: 200,
            ensemble_size: 1000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidParameter {
                name: "population_size",
                value: self.population_size as f64,
                reason: "must be >= 2",
            });
        }
        if !(self.selection_strength.is_finite() && self.selection_strength >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "selection_strength",
                value: self.selection_strength,
                reason: "must be finite and >= 0",
            });
        }
        check_unit("mutation_rate", self.mutation_rate)?;
        if let MutationKernel::LocalStep { delta } = self.mutation_kernel {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "delta",
                    value: delta,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        self.schedule.validate()?;
        if self.checkpoints == 0 || (self.checkpoints as u64) > self.total_events {
            return Err(Error::InvalidParameter {
                name: "checkpoints",
                value: self.checkpoints as f64,
                reason: "must satisfy 1 <= checkpoints <= total_events",
            });
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidParameter {
                name: "ensemble_size",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        Ok(())
    }

    /// Event indices at which a trajectory is recorded. The last checkpoint
    /// is always the final state; with two or more, the first is the
    /// initial state.
    pub fn checkpoint_events(&self) -> Vec<u64> {
        let c = self.checkpoints as u128;
        let t = u128::from(self.total_events);
        if c == 1 {
            return vec![self.total_events];
        }
        (0..c).map(|i| (i * t / (c - 1)) as u64).collect()
    }
}

/// Strategies and group labels of every individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    strategies: Vec<f64>,
    group_of: Vec<u8>,
    members: [Vec<usize>; 2],
}

impl Population {
    /// Population with the given strategies, split into two halves (first
    /// `N / 2` in group 0).
    pub fn new(strategies: Vec<f64>) -> Result<Self> {
        if strategies.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "population_size",
                value: strategies.len() as f64,
                reason: "must be >= 2",
            });
        }
        for &p in &strategies {
            check_unit("p", p)?;
        }
        let half = strategies.len() / 2;
        let group_of: Vec<u8> = (0..strategies.len()).map(|i| u8::from(i >= half)).collect();
        Ok(Self::with_groups(strategies, group_of))
    }

    fn with_groups(strategies: Vec<f64>, group_of: Vec<u8>) -> Self {
        let mut members = [Vec::new(), Vec::new()];
        for (i, &g) in group_of.iter().enumerate() {
            members[g as usize].push(i);
        }
        Self {
            strategies,
            group_of,
            members,
        }
    }

    pub fn initialize(size: usize, initial: InitialCondition, rng: &mut impl Rng) -> Result<Self> {
        let strategies = match initial {
            InitialCondition::UniformAt { p } => vec![p; size],
            InitialCondition::RandomUniform => (0..size).map(|_| rng.random::<f64>()).collect(),
        };
        Self::new(strategies)
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn strategy(&self, i: usize) -> Strategy {
        Strategy::clamped(self.strategies[i])
    }

    pub fn strategies(&self) -> &[f64] {
        &self.strategies
    }

    pub fn group_of(&self, i: usize) -> u8 {
        self.group_of[i]
    }

    pub fn mean_strategy(&self) -> f64 {
        self.strategies.iter().sum::<f64>() / self.strategies.len() as f64
    }

    fn mean_of(&self, group: u8) -> f64 {
        let m = &self.members[group as usize];
        m.iter().map(|&i| self.strategies[i]).sum::<f64>() / m.len() as f64
    }

    /// Uniform out-group partner of `i` (never `i` itself).
    fn draw_partner(&self, i: usize, mode: GroupMode, rng: &mut impl Rng) -> usize {
        match mode {
            GroupMode::FixedSplit => {
                let other = &self.members[1 - self.group_of[i] as usize];
                other[rng.random_range(0..other.len())]
            }
            GroupMode::Reshuffle => {
                let j = rng.random_range(0..self.len() - 1);
                if j >= i {
                    j + 1
                } else {
                    j
                }
            }
        }
    }

    /// Mean strategy of the partners `i` may meet in out-group interactions.
    fn partner_mean(&self, i: usize, mode: GroupMode) -> f64 {
        match mode {
            GroupMode::FixedSplit => self.mean_of(1 - self.group_of[i]),
            GroupMode::Reshuffle => {
                let total: f64 = self.strategies.iter().sum();
                (total - self.strategies[i]) / (self.len() - 1) as f64
            }
        }
    }
}

/// Fitness of one freshly sampled round of `n` interactions for individual `i`.
pub fn realized_payoff(
    i: usize,
    population: &Population,
    theta: Environment,
    scenario: &Scenario,
    group_mode: GroupMode,
    rng: &mut impl Rng,
) -> Result<f64> {
    let params = &scenario.params;
    let p = population.strategies[i];
    let (mut l_in, mut l_out) = (0u32, 0u32);
    for _ in 0..params.n {
        if rng.random::<f64>() < p {
            if rng.random::<f64>() < params.q_in {
                l_in += 1;
            }
        } else {
            let q = match scenario.model {
                RiskModel::Fixed => params.q_out,
                RiskModel::Social => {
                    let partner = population.draw_partner(i, group_mode, rng);
                    params.q_out * (1.0 - population.strategies[partner])
                }
            };
            if rng.random::<f64>() < q {
                l_out += 1;
            }
        }
    }
    scenario
        .curve
        .evaluate(params.payoff(l_in, l_out), theta.theta(), params.n)
}

/// Expected fitness of individual `i` given the current population.
pub fn expected_payoff(
    i: usize,
    population: &Population,
    theta: Environment,
    scenario: &Scenario,
    group_mode: GroupMode,
) -> Result<f64> {
    let resident = match scenario.model {
        RiskModel::Fixed => Strategy::DIVERSE,
        RiskModel::Social => Strategy::clamped(population.partner_mean(i, group_mode)),
    };
    scenario.fitness(population.strategy(i), resident, theta)
}

/// Probability that an individual with fitness `w_self` adopts the strategy
/// of an observed individual with fitness `w_observed`.
pub fn copy_probability(w_self: f64, w_observed: f64, sigma: f64) -> f64 {
    logistic(sigma * (w_observed - w_self))
}

fn fitness_of(
    i: usize,
    population: &Population,
    theta: Environment,
    config: &SimConfig,
    scenario: &Scenario,
    rng: &mut impl Rng,
) -> Result<f64> {
    match config.payoff_mode {
        PayoffMode::Realized => realized_payoff(i, population, theta, scenario, config.group_mode, rng),
        PayoffMode::Expected => expected_payoff(i, population, theta, scenario, config.group_mode),
    }
}

/// One copying event followed by a possible mutation.
pub fn step(
    population: &mut Population,
    event_index: u64,
    config: &SimConfig,
    scenario: &Scenario,
    rng: &mut impl Rng,
) -> Result<()> {
    let n = population.len();
    let theta = environment_at(event_index, &config.schedule);

    let focal = rng.random_range(0..n);
    let mut observed = rng.random_range(0..n - 1);
    if observed >= focal {
        observed += 1;
    }
    let w_focal = fitness_of(focal, population, theta, config, scenario, rng)?;
    let w_observed = fitness_of(observed, population, theta, config, scenario, rng)?;
    if rng.random::<f64>() < copy_probability(w_focal, w_observed, config.selection_strength) {
        population.strategies[focal] = population.strategies[observed];
    }

    if config.mutation_rate > 0.0 && rng.random::<f64>() < config.mutation_rate {
        let target = rng.random_range(0..n);
        let p = &mut population.strategies[target];
        match config.mutation_kernel {
            MutationKernel::GlobalUniform => *p = rng.random::<f64>(),
            MutationKernel::LocalStep { delta } => {
                let shifted = if rng.random::<bool>() { *p + delta } else { *p - delta };
                *p = shifted.clamp(0.0, 1.0);
            }
        }
    }
    Ok(())
}

/// Population-mean strategy recorded at each checkpoint of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub event_index: Vec<u64>,
    pub theta: Vec<f64>,
    pub mean_p: Vec<f64>,
}

pub fn run_trajectory(
    config: &SimConfig,
    scenario: &Scenario,
    initial: InitialCondition,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    config.validate()?;
    if config.model != scenario.model {
        return Err(Error::Usage(format!(
            "simulation model `{}` does not match scenario model `{}`",
            config.model.name(),
            scenario.model.name()
        )));
    }
    let mut population = Population::initialize(config.population_size, initial, rng)?;
    let marks = config.checkpoint_events();
    let mut traj = Trajectory {
        event_index: Vec::with_capacity(marks.len()),
        theta: Vec::with_capacity(marks.len()),
        mean_p: Vec::with_capacity(marks.len()),
    };
    let mut record = |t: u64, pop: &Population| {
        traj.event_index.push(t);
        traj.theta.push(environment_at(t, &config.schedule).theta());
        traj.mean_p.push(pop.mean_strategy());
    };

    let mut next = 0;
    for t in 0..config.total_events {
        while next < marks.len() && marks[next] == t {
            record(t, &population);
            next += 1;
        }
        step(&mut population, t, config, scenario, rng)?;
    }
    while next < marks.len() {
        record(config.total_events, &population);
        next += 1;
    }
    Ok(traj)
}

/// Ensemble mean and standard deviation of the population-mean strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub event_index: Vec<u64>,
    pub theta: Vec<f64>,
    pub mean_p: Vec<f64>,
    /// Population (not sample) standard deviation across replicates.
    pub std_p: Vec<f64>,
}

impl EnsembleStats {
    /// Aggregates replicate trajectories recorded on the same checkpoints.
    pub fn from_trajectories(runs: &[Trajectory]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Usage("ensemble needs at least one trajectory".into()))?;
        let len = first.mean_p.len();
        let count = runs.len() as f64;
        let mut mean_p = Vec::with_capacity(len);
        let mut std_p = Vec::with_capacity(len);
        for c in 0..len {
            let mean = runs.iter().map(|r| r.mean_p[c]).sum::<f64>() / count;
            let var = runs.iter().map(|r| (r.mean_p[c] - mean).powi(2)).sum::<f64>() / count;
            mean_p.push(mean);
            std_p.push(var.sqrt());
        }
        Ok(Self {
            event_index: first.event_index.clone(),
            theta: first.theta.clone(),
            mean_p,
            std_p,
        })
    }
}

/// Runs `config.ensemble_size` independent trajectories in parallel and
/// aggregates them. Replicate `i` uses [`rng_for_replicate`]`(base_seed, i)`,
/// so the result does not depend on scheduling.
pub fn run_ensemble(
    config: &SimConfig,
    scenario: &Scenario,
    initial: InitialCondition,
    base_seed: u64,
) -> Result<EnsembleStats> {
    config.validate()?;
    let runs = (0..config.ensemble_size as u64)
        .into_par_iter()
        .map(|i| run_trajectory(config, scenario, initial, &mut rng_for_replicate(base_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    EnsembleStats::from_trajectories(&runs)
}
