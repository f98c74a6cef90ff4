//! Momentum particle swarm optimization (PSO, MPSO and EMPSO).
//!
//! Each particle carries a position `x`, a velocity `v`, an exponentially
//! weighted momentum `m` and the velocity at which it saw its best fitness.
//! The velocity is the candidate solution: fitness is evaluated on `v`, and
//! the optimizer returns the best velocity seen. Positions only enter the
//! attraction terms of the velocity update and are clipped to the bounds
//! after every move.
//!
//! One sweep has two phases. All particles are evaluated first (in parallel,
//! the fitness must be pure) and personal/global bests are settled in
//! particle order. Then every particle draws `r1, r2` and moves. Random draws
//! only happen in the sequential phase, so results do not depend on thread
//! scheduling.

pub mod benchmarks;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, ExalRng};
use rand::Rng;

/// Per-dimension box `[lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let (lower, upper): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if lower.is_empty() {
            return Err(Error::config("bounds must have at least one dimension"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "bounds dimension {i}: need finite min < max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` on every one of `dim` dimensions.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(std::iter::repeat_n((lo, hi), dim))
    }

    /// `[-halfwidth, halfwidth]` on every dimension.
    pub fn symmetric(dim: usize, halfwidth: f64) -> Result<Self> {
        Self::uniform(dim, -halfwidth, halfwidth)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// Velocity update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// MPSO with `mu = 0`: no inertia, attraction terms only.
    Pso,
    /// Constant momentum `mu` on the previous velocity.
    Mpso,
    /// Exponentially weighted momentum with factor `beta`.
    Empso,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Pso, Variant::Mpso, Variant::Empso];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pso => "pso",
            Variant::Mpso => "mpso",
            Variant::Empso => "empso",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pso" => Ok(Variant::Pso),
            "mpso" => Ok(Variant::Mpso),
            "empso" => Ok(Variant::Empso),
            other => Err(Error::config(format!(
                "unknown swarm variant {other:?} (expected pso, mpso or empso)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub particles: usize,
    /// EMPSO momentum factor.
    pub beta: f64,
    /// MPSO inertia; ignored by the other variants.
    pub mu: f64,
    /// Cognitive factor.
    pub c1: f64,
    /// Social factor.
    pub c2: f64,
    pub max_iterations: usize,
    pub variant: Variant,
    pub seed: u64,
    /// Clip velocities to the bounds as well as positions.
    pub clip_velocity: bool,
    /// Stop early once the global best fitness is at or below this value.
    pub target_fitness: Option<f64>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 20,
            beta: 0.9,
            mu: 0.5,
            c1: 2.0,
            c2: 2.0,
            max_iterations: 50,
            variant: Variant::Empso,
            seed: 0,
            clip_velocity: false,
            target_fitness: None,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("swarm.particles must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("swarm.iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!(
                "swarm.beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::config(format!(
                "swarm.mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        for (key, value) in [("swarm.c1", self.c1), ("swarm.c2", self.c2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::config(format!(
                    "{key} must be finite and non-negative, got {value}"
                )));
            }
        }
        if let Some(t) = self.target_fitness {
            if t.is_nan() {
                return Err(Error::config("swarm.target_fitness must not be NaN"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    /// The candidate solution.
    pub velocity: Vec<f64>,
    pub momentum: Vec<f64>,
    pub best_velocity: Vec<f64>,
    pub best_fitness: f64,
}

impl Particle {
    /// Draws the position, then the velocity, uniformly inside `bounds`.
    pub fn new(bounds: &Bounds, rng: &mut impl Rng) -> Self {
        let draw = |rng: &mut _| -> Vec<f64> {
            bounds
                .lower()
                .iter()
                .zip(bounds.upper())
                .map(|(&lo, &hi)| rng::uniform(rng, lo, hi))
                .collect()
        };
        let position = draw(rng);
        let velocity = draw(rng);
        Self {
            momentum: vec![0.0; position.len()],
            best_velocity: velocity.clone(),
            best_fitness: f64::INFINITY,
            position,
            velocity,
        }
    }

    pub fn dim(&self) -> usize {
        self.velocity.len()
    }

    /// Records `fitness` as the personal best if it is strictly lower.
    /// Returns whether the best changed.
    pub fn update_personal_best(&mut self, fitness: f64) -> bool {
        if fitness < self.best_fitness {
            self.best_fitness = fitness;
            self.best_velocity.clone_from(&self.velocity);
            true
        } else {
            false
        }
    }
}

fn check_dims(what: &'static str, expected: usize, found: usize) {
    assert_eq!(
        expected, found,
        "dimension mismatch in {what}: expected {expected}, found {found}"
    );
}

/// `beta * m + (1 - beta) * v`, elementwise.
///
/// Panics if `m` and `v` differ in length.
pub fn momentum_update(m: &[f64], v: &[f64], beta: f64) -> Vec<f64> {
    check_dims("momentum update", m.len(), v.len());
    m.iter()
        .zip(v)
        .map(|(mi, vi)| beta * mi + (1.0 - beta) * vi)
        .collect()
}

fn attraction(p: &Particle, gbest: &[f64], r1: f64, r2: f64, c1: f64, c2: f64) -> Vec<f64> {
    check_dims("velocity update", p.dim(), gbest.len());
    check_dims("velocity update", p.dim(), p.position.len());
    check_dims("velocity update", p.dim(), p.best_velocity.len());
    p.best_velocity
        .iter()
        .zip(gbest)
        .zip(&p.position)
        .map(|((pb, g), x)| c1 * r1 * (pb - x) + c2 * r2 * (g - x))
        .collect()
}

/// EMPSO step: `beta*m + (1-beta)*v + c1*r1*(v_p - x) + c2*r2*(g - x)`.
///
/// Panics on a dimension mismatch between the particle and `gbest`.
pub fn empso_velocity_update(
    p: &Particle,
    gbest: &[f64],
    r1: f64,
    r2: f64,
    config: &SwarmConfig,
) -> Vec<f64> {
    let inertia = momentum_update(&p.momentum, &p.velocity, config.beta);
    let mut v = attraction(p, gbest, r1, r2, config.c1, config.c2);
    for (vi, ii) in v.iter_mut().zip(inertia) {
        *vi += ii;
    }
    v
}

/// MPSO step: `mu*v + c1*r1*(v_p - x) + c2*r2*(g - x)`, using `config.mu`.
///
/// Panics on a dimension mismatch between the particle and `gbest`.
pub fn mpso_velocity_update(
    p: &Particle,
    gbest: &[f64],
    r1: f64,
    r2: f64,
    config: &SwarmConfig,
) -> Vec<f64> {
    inertial_velocity(p, gbest, r1, r2, config.mu, config.c1, config.c2)
}

fn inertial_velocity(
    p: &Particle,
    gbest: &[f64],
    r1: f64,
    r2: f64,
    mu: f64,
    c1: f64,
    c2: f64,
) -> Vec<f64> {
    let mut v = attraction(p, gbest, r1, r2, c1, c2);
    for (vi, prev) in v.iter_mut().zip(&p.velocity) {
        *vi += mu * prev;
    }
    v
}

/// Clamps every component of `x` into its bounds, in place.
pub fn clip_to_bounds(x: &mut [f64], bounds: &Bounds) {
    check_dims("clip", bounds.dim(), x.len());
    for ((xi, lo), hi) in x.iter_mut().zip(bounds.lower()).zip(bounds.upper()) {
        *xi = xi.clamp(*lo, *hi);
    }
}

/// One sweep's evaluations, handed to observers before particles move.
pub struct Sweep<'a> {
    /// 1-based sweep index.
    pub iteration: usize,
    /// Fitness of each particle's current velocity (NaN already mapped to +inf).
    pub fitness: &'a [f64],
    pub particles: &'a [Particle],
    pub gbest_fitness: f64,
}

/// Swarm state between sweeps.
pub struct Swarm {
    config: SwarmConfig,
    bounds: Bounds,
    particles: Vec<Particle>,
    gbest_velocity: Option<Vec<f64>>,
    gbest_fitness: f64,
    iteration: usize,
    nan_evaluations: usize,
    rng: ExalRng,
}

impl Swarm {
    /// Builds `config.particles` particles inside `bounds`, drawing each
    /// particle's position and then its velocity from the seeded generator.
    pub fn new(config: SwarmConfig, bounds: Bounds) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(config.seed);
        let particles = (0..config.particles)
            .map(|_| Particle::new(&bounds, &mut rng))
            .collect();
        Ok(Self {
            config,
            bounds,
            particles,
            gbest_velocity: None,
            gbest_fitness: f64::INFINITY,
            iteration: 0,
            nan_evaluations: 0,
            rng,
        })
    }

    pub fn config(&self) -> &SwarmConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn gbest_velocity(&self) -> Option<&[f64]> {
        self.gbest_velocity.as_deref()
    }

    pub fn gbest_fitness(&self) -> f64 {
        self.gbest_fitness
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn nan_evaluations(&self) -> usize {
        self.nan_evaluations
    }

    /// Evaluates every particle's velocity and settles personal and global
    /// bests in particle order. Returns the (sanitized) fitness values.
    pub fn evaluate<F>(&mut self, fitness: &F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut values: Vec<f64> = self
            .particles
            .par_iter()
            .map(|p| fitness(&p.velocity))
            .collect();

        for (i, (p, f)) in self.particles.iter_mut().zip(values.iter_mut()).enumerate() {
            if f.is_nan() {
                warn!(
                    "fitness returned NaN for particle {i} at sweep {}; treating as +inf",
                    self.iteration + 1
                );
                self.nan_evaluations += 1;
                *f = f64::INFINITY;
            }
            p.update_personal_best(*f);
            if *f < self.gbest_fitness {
                self.gbest_fitness = *f;
                self.gbest_velocity = Some(p.velocity.clone());
            }
        }
        values
    }

    /// Moves every particle: new velocity per the configured variant,
    /// `x += v`, momentum update, then position clipping.
    pub fn advance(&mut self) {
        let config = &self.config;
        for p in &mut self.particles {
            let r1: f64 = self.rng.random();
            let r2: f64 = self.rng.random();
            // Before any finite evaluation there is no global best; the
            // social term then vanishes.
            let gbest = self.gbest_velocity.as_deref().unwrap_or(&p.position);
            let mut v = match config.variant {
                Variant::Empso => empso_velocity_update(p, gbest, r1, r2, config),
                Variant::Mpso => mpso_velocity_update(p, gbest, r1, r2, config),
                Variant::Pso => inertial_velocity(p, gbest, r1, r2, 0.0, config.c1, config.c2),
            };
            if config.clip_velocity {
                clip_to_bounds(&mut v, &self.bounds);
            }
            for (x, vi) in p.position.iter_mut().zip(&v) {
                *x += vi;
            }
            p.momentum = momentum_update(&p.momentum, &v, config.beta);
            p.velocity = v;
            clip_to_bounds(&mut p.position, &self.bounds);
        }
        self.iteration += 1;
    }

    /// Runs sweeps until the iteration budget (or the optional target
    /// fitness) is reached, calling `observer` after each evaluation phase.
    pub fn run<F, O>(mut self, fitness: F, mut observer: O) -> Optimum
    where
        F: Fn(&[f64]) -> f64 + Sync,
        O: FnMut(&Sweep<'_>),
    {
        let mut trace = Vec::with_capacity(self.config.max_iterations);
        let mut evaluations = 0;
        while self.iteration < self.config.max_iterations {
            let values = self.evaluate(&fitness);
            evaluations += values.len();
            trace.push(self.gbest_fitness);
            observer(&Sweep {
                iteration: self.iteration + 1,
                fitness: &values,
                particles: &self.particles,
                gbest_fitness: self.gbest_fitness,
            });
            let reached = self
                .config
                .target_fitness
                .is_some_and(|t| self.gbest_fitness <= t);
            self.advance();
            if reached {
                break;
            }
        }

        let velocity = match self.gbest_velocity.take() {
            Some(v) => v,
            None => self.particles[0].best_velocity.clone(),
        };
        Optimum {
            velocity,
            fitness: self.gbest_fitness,
            trace,
            iterations: self.iteration,
            evaluations,
            nan_evaluations: self.nan_evaluations,
        }
    }
}

/// Result of [`optimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    /// Global best velocity. If no evaluation was ever finite this is the
    /// first particle's initial velocity and `fitness` is +inf.
    pub velocity: Vec<f64>,
    pub fitness: f64,
    /// Global best fitness after each sweep's evaluation phase.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub nan_evaluations: usize,
}

/// Minimizes `fitness` over velocities, starting inside `bounds`.
pub fn optimize<F>(fitness: F, bounds: &Bounds, config: &SwarmConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_observed(fitness, bounds, config, |_| {})
}

/// [`optimize`] with a per-sweep observer.
pub fn optimize_observed<F, O>(
    fitness: F,
    bounds: &Bounds,
    config: &SwarmConfig,
    observer: O,
) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(&Sweep<'_>),
{
    let swarm = Swarm::new(config.clone(), bounds.clone())?;
    Ok(swarm.run(fitness, observer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn particle(x: &[f64], v: &[f64], m: &[f64], vp: &[f64]) -> Particle {
        Particle {
            position: x.to_vec(),
            velocity: v.to_vec(),
            momentum: m.to_vec(),
            best_velocity: vp.to_vec(),
            best_fitness: f64::INFINITY,
        }
    }

    fn coeffs(beta: f64, mu: f64, c1: f64, c2: f64) -> SwarmConfig {
        SwarmConfig {
            beta,
            mu,
            c1,
            c2,
            ..SwarmConfig::default()
        }
    }

    #[test]
    fn init_respects_bounds_and_contract() {
        let cfg = SwarmConfig {
            particles: 3,
            seed: 7,
            ..SwarmConfig::default()
        };
        let bounds = Bounds::symmetric(2, 0.1).unwrap();
        let swarm = Swarm::new(cfg.clone(), bounds.clone()).unwrap();
        assert_eq!(swarm.particles().len(), 3);
        for p in swarm.particles() {
            assert!(p.position.iter().all(|x| x.abs() <= 0.1));
            assert!(p.velocity.iter().all(|v| v.abs() <= 0.1));
            assert_eq!(p.momentum, vec![0.0, 0.0]);
            assert_eq!(p.best_velocity, p.velocity);
            assert_eq!(p.best_fitness, f64::INFINITY);
        }
        assert!(swarm.gbest_velocity().is_none());
        assert_eq!(swarm.gbest_fitness(), f64::INFINITY);

        let again = Swarm::new(cfg, bounds).unwrap();
        assert_eq!(swarm.particles(), again.particles());
    }

    #[test]
    fn zero_particles_is_a_config_error() {
        let cfg = SwarmConfig {
            particles: 0,
            ..SwarmConfig::default()
        };
        let err = Swarm::new(cfg, Bounds::symmetric(2, 0.1).unwrap()).err();
        assert!(matches!(err, Some(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_bounds_and_coefficients() {
        assert!(Bounds::new([(0.1, 0.1)]).is_err());
        assert!(Bounds::new([(0.2, -0.1)]).is_err());
        assert!(Bounds::new(Vec::<(f64, f64)>::new()).is_err());
        assert!(coeffs(1.5, 0.5, 2.0, 2.0).validate().is_err());
        assert!(coeffs(0.9, -0.1, 2.0, 2.0).validate().is_err());
        assert!(coeffs(0.9, 0.5, -1.0, 2.0).validate().is_err());
        let cfg = SwarmConfig {
            max_iterations: 0,
            ..SwarmConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn personal_best_uses_strict_improvement() {
        let mut p = particle(&[0.0], &[0.3], &[0.0], &[0.3]);
        assert!(p.update_personal_best(3.5));
        assert_eq!(p.best_fitness, 3.5);
        assert_eq!(p.best_velocity, vec![0.3]);

        p.best_fitness = 2.0;
        p.velocity = vec![0.9];
        assert!(!p.update_personal_best(2.0));
        assert_eq!(p.best_velocity, vec![0.3]);

        assert!(p.update_personal_best(1.5));
        assert_eq!(p.best_fitness, 1.5);
        assert_eq!(p.best_velocity, vec![0.9]);
    }

    #[test]
    fn momentum_limits() {
        assert_eq!(momentum_update(&[1.0, 2.0], &[9.0, 9.0], 1.0), vec![1.0, 2.0]);
        assert_eq!(momentum_update(&[1.0, 2.0], &[9.0, 9.0], 0.0), vec![9.0, 9.0]);
        let m = momentum_update(&[1.0], &[2.0], 0.9);
        assert!((m[0] - 1.1).abs() <= 1e-12);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn momentum_dimension_mismatch_panics() {
        momentum_update(&[1.0, 2.0], &[1.0], 0.5);
    }

    #[test]
    fn empso_limits() {
        let p = particle(&[0.3, -0.2], &[0.5, 0.7], &[4.0, -4.0], &[1.0, 1.0]);
        let g = [2.0, 2.0];
        assert_eq!(empso_velocity_update(&p, &g, 0.4, 0.6, &coeffs(0.0, 0.0, 0.0, 0.0)), p.velocity);
        assert_eq!(empso_velocity_update(&p, &g, 0.4, 0.6, &coeffs(1.0, 0.0, 0.0, 0.0)), p.momentum);
    }

    #[test]
    fn mpso_limits() {
        let p = particle(&[0.3, -0.2], &[0.5, 0.7], &[4.0, -4.0], &[1.0, 1.0]);
        let g = [2.0, 2.0];
        assert_eq!(mpso_velocity_update(&p, &g, 0.4, 0.6, &coeffs(0.9, 1.0, 0.0, 0.0)), p.velocity);
        assert_eq!(mpso_velocity_update(&p, &g, 0.4, 0.6, &coeffs(0.9, 0.0, 0.0, 0.0)), vec![0.0, 0.0]);
    }

    #[test]
    fn clipping() {
        let b = Bounds::symmetric(1, 0.1).unwrap();
        for (x, want) in [(0.05, 0.05), (0.5, 0.1), (-3.0, -0.1)] {
            let mut v = [x];
            clip_to_bounds(&mut v, &b);
            assert_eq!(v, [want]);
        }
    }

    #[test]
    fn nan_fitness_never_becomes_best() {
        let cfg = SwarmConfig {
            particles: 4,
            max_iterations: 3,
            seed: 1,
            ..SwarmConfig::default()
        };
        let b = Bounds::symmetric(2, 1.0).unwrap();
        let opt = optimize(|v| if v[0] > 0.0 { f64::NAN } else { v[0] }, &b, &cfg).unwrap();
        assert!(opt.fitness <= 0.0);
        assert!(opt.velocity[0] <= 0.0);
        assert!(opt.nan_evaluations > 0);
    }

    #[test]
    fn all_nan_returns_infinite_best() {
        let cfg = SwarmConfig {
            particles: 2,
            max_iterations: 2,
            ..SwarmConfig::default()
        };
        let b = Bounds::symmetric(3, 1.0).unwrap();
        let opt = optimize(|_| f64::NAN, &b, &cfg).unwrap();
        assert_eq!(opt.fitness, f64::INFINITY);
        assert_eq!(opt.velocity.len(), 3);
        assert_eq!(opt.nan_evaluations, 4);
    }

    #[test]
    fn early_stop_on_target() {
        let cfg = SwarmConfig {
            particles: 5,
            max_iterations: 100,
            target_fitness: Some(10.0),
            ..SwarmConfig::default()
        };
        let b = Bounds::symmetric(2, 1.0).unwrap();
        let opt = optimize(|_| 1.0, &b, &cfg).unwrap();
        assert_eq!(opt.iterations, 1);
        assert_eq!(opt.trace, vec![1.0]);
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("ackley".parse::<Variant>().is_err());
    }
}
