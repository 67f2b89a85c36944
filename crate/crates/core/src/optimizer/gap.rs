//! A-posteriori quality estimate of the sample-average approximation: an
//! upper confidence bound on the optimality gap of a tuned controller,
//! built from batches of year samples.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::controller::{ControllerParams, PenaltyBounds};
use crate::data::{derive_rng, stream_tag};
use crate::degradation::DegradationState;
use crate::error::{CoreError, Result};
use crate::optimizer::de::DifferentialEvolution;
use crate::optimizer::{evaluate_year_sample, YearInputs};

const STREAM_GAP_BATCH: u8 = 5;
/// Stream-major offset for the inner optimisations, keeping them apart from
/// the main run's evolution streams.
const GAP_DE_MAJOR: u32 = 0x40_0000;

/// One-sided `100(1-beta)%` upper confidence bound on the mean of the gap
/// observations: `mean + s * t_{1-beta, n-1} / sqrt(n)`.
pub fn mak_gap_upper_bound(gaps: &[f64], beta: f64) -> Result<f64> {
    if gaps.len() < 2 {
        return Err(CoreError::InvalidParams(
            "gap bound needs at least two batches".into(),
        ));
    }
    if !(0.0 < beta && beta < 1.0) {
        return Err(CoreError::InvalidParams("beta must lie in (0, 1)".into()));
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
    let s = var.sqrt();
    if s == 0.0 {
        return Ok(mean);
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| CoreError::InvalidParams(e.to_string()))?
        .inverse_cdf(1.0 - beta);
    Ok(mean + s * t / n.sqrt())
}

/// Gap observations plus their confidence bound, in EUR per year.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub per_batch: Vec<f64>,
    pub mean: f64,
    pub upper_bound_eur: f64,
}

/// Estimate the optimality gap of `x_hat` over `n_batches` batches of
/// `years_per_batch` year samples drawn with replacement.
///
/// Each batch compares the candidate's batch-mean objective against a fresh
/// optimisation of the same batch mean (with a reduced evolution budget, so
/// the inner minimum is itself heuristic and the estimate leans
/// conservative).
#[allow(clippy::too_many_arguments)]
pub fn estimate_saa_gap(
    inputs: &YearInputs<'_>,
    degr: &DegradationState,
    bounds: &PenaltyBounds<f64>,
    x_hat: &ControllerParams<f64>,
    n_batches: usize,
    years_per_batch: usize,
    beta: f64,
    inner_population: usize,
    inner_iterations: usize,
) -> Result<GapEstimate> {
    if n_batches < 2 || years_per_batch == 0 {
        return Err(CoreError::InvalidParams(
            "need at least two batches of at least one year sample".into(),
        ));
    }
    let fcr_revenue = inputs
        .scenario
        .fcr_revenue_eur(degr.year_k, inputs.rules.r_w);
    let c_cell_total = inputs.cfg.c_cell_eur_per_kwh * inputs.bess.e_rated_wh / 1000.0;

    let batch_mean = |x: &[f64; 4], ids: &[usize]| -> f64 {
        let params = ControllerParams::from_array(*x);
        let total: f64 = ids
            .iter()
            .map(|&y| {
                let eval = evaluate_year_sample(inputs, degr, bounds, &params, y);
                -fcr_revenue + eval.elec_cost_eur + eval.cap_loss / 0.2 * c_cell_total
            })
            .sum();
        total / ids.len() as f64
    };

    let per_batch: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = derive_rng(
                inputs.master_seed,
                stream_tag(STREAM_GAP_BATCH, degr.year_k, i as u32),
            );
            let ids = inputs.pool.draw_year_ids(years_per_batch, &mut rng);
            let value_at_hat = batch_mean(&x_hat.as_array(), &ids);
            let obj = |x: &[f64; 4]| batch_mean(x, &ids);
            let mut engine = DifferentialEvolution::new(
                inputs.cfg.bounds,
                inner_population,
                inputs.cfg.de_mutation_f,
                inputs.cfg.de_crossover,
                inputs.master_seed,
                GAP_DE_MAJOR + i as u32,
                &obj,
            )?;
            for _ in 0..inner_iterations {
                engine.step(&obj);
                if engine.converged(inputs.cfg.stop_std_frac) {
                    break;
                }
            }
            Ok(value_at_hat - engine.best().1)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
    let upper = mak_gap_upper_bound(&per_batch, beta)?;
    Ok(GapEstimate {
        per_batch,
        mean,
        upper_bound_eur: upper,
    })
}
