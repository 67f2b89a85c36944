//! Differential evolution over the four controller parameters: best/1
//! mutation with binomial crossover, box projection and deferred selection.
//!
//! Every random decision comes from a generator derived from the master seed
//! and the (year, generation, member) coordinates, so runs are reproducible
//! regardless of thread scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_rng, stream_tag};
use crate::error::{CoreError, Result};

const STREAM_DE: u8 = 2;

/// Admissible box for the decision vector `(k_p, soc_0, o_d, db_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl ParamBox {
    /// Default search box: gains up to 8, setpoint away from the rails,
    /// overdelivery up to the regulatory limit, deadband up to half the SoC
    /// range.
    pub fn default_controller_box() -> Self {
        Self {
            lo: [0.0, 0.2, 0.0, 0.0],
            hi: [8.0, 0.8, 0.2, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..4 {
            if self.lo[d] >= self.hi[d] {
                return Err(CoreError::InvalidParams(format!(
                    "box dimension {d}: lower bound {} must be below upper {}",
                    self.lo[d], self.hi[d]
                )));
            }
        }
        if self.lo[1] <= 0.0 || self.hi[1] >= 1.0 {
            return Err(CoreError::InvalidParams(
                "soc_0 bounds must stay strictly inside (0, 1)".into(),
            ));
        }
        if self.lo[2] < 0.0 || self.hi[2] > 0.2 {
            return Err(CoreError::InvalidParams(
                "overdelivery bounds must stay inside [0, 0.2]".into(),
            ));
        }
        if self.lo[0] < 0.0 || self.lo[3] < 0.0 {
            return Err(CoreError::InvalidParams(
                "gain and deadband must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 4] {
        std::array::from_fn(|d| rng.random_range(self.lo[d]..self.hi[d]))
    }

    fn project(&self, mut x: [f64; 4]) -> [f64; 4] {
        for (d, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[d], self.hi[d]);
        }
        x
    }

    pub fn contains(&self, x: &[f64; 4]) -> bool {
        (0..4).all(|d| x[d] >= self.lo[d] && x[d] <= self.hi[d])
    }
}

/// Population state of one optimisation run.
#[derive(Debug, Clone)]
pub struct DifferentialEvolution {
    bounds: ParamBox,
    mutation_f: f64,
    crossover_cr: f64,
    master_seed: u64,
    year: u32,
    generation: u32,
    pub members: Vec<[f64; 4]>,
    pub values: Vec<f64>,
    evaluations: usize,
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

impl DifferentialEvolution {
    /// Initialise the population uniformly in the box and evaluate it.
    pub fn new<O>(
        bounds: ParamBox,
        population: usize,
        mutation_f: f64,
        crossover_cr: f64,
        master_seed: u64,
        year: u32,
        objective: &O,
    ) -> Result<Self>
    where
        O: Fn(&[f64; 4]) -> f64 + Sync,
    {
        bounds.validate()?;
        if population < 4 {
            return Err(CoreError::InvalidParams(
                "differential evolution needs a population of at least 4".into(),
            ));
        }
        if !(0.0..2.0).contains(&mutation_f) || !(0.0..=1.0).contains(&crossover_cr) {
            return Err(CoreError::InvalidParams(
                "mutation factor must lie in [0, 2), crossover rate in [0, 1]".into(),
            ));
        }
        let members: Vec<[f64; 4]> = (0..population)
            .map(|i| {
                let mut rng = derive_rng(master_seed, stream_tag(STREAM_DE, year, i as u32));
                bounds.sample(&mut rng)
            })
            .collect();
        let values: Vec<f64> = members.par_iter().map(objective).collect();
        Ok(Self {
            bounds,
            mutation_f,
            crossover_cr,
            master_seed,
            year,
            generation: 0,
            evaluations: population,
            members,
            values,
        })
    }

    pub fn population(&self) -> usize {
        self.members.len()
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Best member and its objective value.
    pub fn best(&self) -> ([f64; 4], f64) {
        let idx = argmin(&self.values);
        (self.members[idx], self.values[idx])
    }

    /// Mean and standard deviation of the population objective values.
    pub fn value_stats(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self
            .values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    /// Convergence: the population value spread fell below the configured
    /// fraction of the mean magnitude.
    pub fn converged(&self, stop_std_frac: f64) -> bool {
        let (mean, std) = self.value_stats();
        std == 0.0 || std < stop_std_frac * mean.abs()
    }

    /// One generation of best/1 mutation with binomial crossover and
    /// deferred selection. Returns the best member after the update.
    pub fn step<O>(&mut self, objective: &O) -> ([f64; 4], f64)
    where
        O: Fn(&[f64; 4]) -> f64 + Sync,
    {
        let pop = self.members.len();
        let best = self.members[argmin(&self.values)];
        let gen = self.generation + 1;
        let trials: Vec<[f64; 4]> = (0..pop)
            .map(|i| {
                let minor = gen
                    .wrapping_mul(pop as u32)
                    .wrapping_add(i as u32)
                    .wrapping_add(pop as u32);
                let mut rng =
                    derive_rng(self.master_seed, stream_tag(STREAM_DE, self.year, minor));
                let r1 = loop {
                    let r = rng.random_range(0..pop);
                    if r != i {
                        break r;
                    }
                };
                let r2 = loop {
                    let r = rng.random_range(0..pop);
                    if r != i && r != r1 {
                        break r;
                    }
                };
                let j_rand = rng.random_range(0..4usize);
                let mut trial = self.members[i];
                for d in 0..4 {
                    let mutant_d = best[d]
                        + self.mutation_f * (self.members[r1][d] - self.members[r2][d]);
                    if rng.random_range(0.0..1.0) < self.crossover_cr || d == j_rand {
                        trial[d] = mutant_d;
                    }
                }
                self.bounds.project(trial)
            })
            .collect();
        let trial_values: Vec<f64> = trials.par_iter().map(objective).collect();
        self.evaluations += pop;
        for i in 0..pop {
            if trial_values[i] <= self.values[i] {
                self.members[i] = trials[i];
                self.values[i] = trial_values[i];
            }
        }
        self.generation = gen;
        self.best()
    }

    /// Re-evaluate every member, needed after the objective itself changed
    /// (the penalty set grew).
    pub fn reevaluate<O>(&mut self, objective: &O)
    where
        O: Fn(&[f64; 4]) -> f64 + Sync,
    {
        self.values = self.members.par_iter().map(objective).collect();
        self.evaluations += self.members.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_objective_is_stable() {
        let obj = |_: &[f64; 4]| 3.5;
        let mut de = DifferentialEvolution::new(
            ParamBox::default_controller_box(),
            12,
            0.7,
            0.9,
            1,
            0,
            &obj,
        )
        .unwrap();
        let (_, v0) = de.best();
        for _ in 0..5 {
            de.step(&obj);
        }
        assert_eq!(de.best().1, v0);
        assert!(de.converged(5e-4));
    }

    #[test]
    fn quadratic_converges_to_analytic_minimum() {
        let target = [1.5, 0.45, 0.12, 0.3];
        let obj = move |x: &[f64; 4]| -> f64 {
            x.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        let mut de = DifferentialEvolution::new(
            ParamBox::default_controller_box(),
            60,
            0.7,
            0.9,
            42,
            0,
            &obj,
        )
        .unwrap();
        for _ in 0..200 {
            de.step(&obj);
            if de.converged(1e-10) {
                break;
            }
        }
        let (x, v) = de.best();
        for d in 0..4 {
            assert!(
                (x[d] - target[d]).abs() < 1e-3,
                "dim {d}: {} vs {}",
                x[d],
                target[d]
            );
        }
        assert!(v < 1e-6);
    }

    #[test]
    fn members_stay_inside_the_box() {
        let bounds = ParamBox::default_controller_box();
        let obj = |x: &[f64; 4]| -x[0] - x[3]; // push towards the corner
        let mut de = DifferentialEvolution::new(bounds, 20, 0.9, 0.9, 7, 0, &obj).unwrap();
        for _ in 0..50 {
            de.step(&obj);
            for m in &de.members {
                assert!(bounds.contains(m), "member {m:?} escaped the box");
            }
        }
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let obj = |x: &[f64; 4]| (x[0] - 2.0).powi(2) + (x[1] - 0.5).powi(2);
        let run = |seed: u64| {
            let mut de = DifferentialEvolution::new(
                ParamBox::default_controller_box(),
                16,
                0.7,
                0.9,
                seed,
                3,
                &obj,
            )
            .unwrap();
            for _ in 0..30 {
                de.step(&obj);
            }
            de.best()
        };
        let (x1, v1) = run(99);
        let (x2, v2) = run(99);
        assert_eq!(x1, x2);
        assert_eq!(v1, v2);
        let (x3, _) = run(100);
        assert_ne!(x1, x3);
    }

    #[test]
    fn stopping_criterion_uses_relative_spread() {
        let obj = |x: &[f64; 4]| 1000.0 + x[0] * 1e-6;
        let de = DifferentialEvolution::new(
            ParamBox::default_controller_box(),
            10,
            0.7,
            0.9,
            5,
            0,
            &obj,
        )
        .unwrap();
        // Spread is about 1e-6 of an 8-unit range, mean about 1000:
        // std < 5e-4 * |mean| holds immediately.
        assert!(de.converged(5e-4));
        assert!(!de.converged(1e-12));
    }

    #[test]
    fn rejects_bad_configuration() {
        let obj = |_: &[f64; 4]| 0.0;
        assert!(DifferentialEvolution::new(
            ParamBox::default_controller_box(),
            3,
            0.7,
            0.9,
            1,
            0,
            &obj
        )
        .is_err());
        let mut bad = ParamBox::default_controller_box();
        bad.lo[2] = -0.1;
        assert!(bad.validate().is_err());
        let mut bad = ParamBox::default_controller_box();
        bad.hi[2] = 0.5;
        assert!(bad.validate().is_err());
    }
}
