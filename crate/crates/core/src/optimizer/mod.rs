//! Yearly chance-constrained tuning of the recharge controller and the
//! multi-year lifetime driver.
//!
//! Each operational year solves a stochastic program over the controller
//! parameters: minimise expected electricity costs plus the monetised
//! capacity fade, minus the FCR revenue, subject to the probability of an
//! availability penalty staying below a small requirement. The expectation
//! uses a sample average over one-day frequency samples; the chance
//! constraint is certified a posteriori with a binomial confidence bound and
//! enforced during the search by growing a worst-case penalty sample set.

pub mod chance;
pub mod de;
pub mod gap;

pub use chance::{chance_upper_bound, max_allowed_violations, CheckSchedule};
pub use de::{DifferentialEvolution, ParamBox};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bess::{doppelhoecker_test, BessConfig};
use crate::controller::{ControllerParams, MarketRules, PenaltyBounds};
use crate::data::{derive_rng, stream_tag, SamplePool};
use crate::degradation::{annualized_delta, AgeingModel, DegradationState};
use crate::economics::{
    electricity_cost, lifetime_revenue, LifetimeResult, MarketScenario, YearCashflowInput,
};
use crate::error::{CoreError, Result};
use crate::simulation::{run_fcr, FcrContext};

const STREAM_DAY_SAMPLES: u8 = 1;
const STREAM_PENALTY_CHECK: u8 = 3;
const STREAM_CERTIFICATION: u8 = 4;

/// Tuning knobs of the yearly optimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Required bound on the penalty probability.
    pub eps_req: f64,
    /// Confidence level of the binomial bound.
    pub beta_conf: f64,
    /// Samples per in-loop constraint check.
    pub n_c: usize,
    /// Samples for the final certification (must exceed `n_c`).
    pub n_c_prime: usize,
    /// One-day samples in the cost expectation.
    pub n_days: usize,
    /// Iterations before the first constraint check.
    pub n_check_init: usize,
    /// Differential-evolution population size.
    pub population: usize,
    /// Stop when the population value spread falls below this fraction of
    /// the mean magnitude.
    pub stop_std_frac: f64,
    pub de_mutation_f: f64,
    pub de_crossover: f64,
    /// Hard cap on evolution steps per year.
    pub max_iterations: usize,
    /// Weight of the penalty branch of the objective; `None` derives a value
    /// that dominates the yearly revenue, giving feasibility-first search.
    pub c_penalty_eur: Option<f64>,
    /// Cell replacement cost per kWh of rated energy.
    pub c_cell_eur_per_kwh: f64,
    /// Admissible box for the decision vector.
    pub bounds: ParamBox,
    /// Safety cap on the number of operational years.
    pub max_years: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eps_req: 0.005,
            beta_conf: 0.001,
            n_c: 10_000,
            n_c_prime: 50_000,
            n_days: 50,
            n_check_init: 10,
            population: 60,
            stop_std_frac: 5e-4,
            de_mutation_f: 0.7,
            de_crossover: 0.9,
            max_iterations: 2000,
            c_penalty_eur: None,
            c_cell_eur_per_kwh: 300.0,
            bounds: ParamBox::default_controller_box(),
            max_years: 30,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.eps_req && self.eps_req < 1.0) {
            return Err(CoreError::Config("eps_req must lie in (0, 1)".into()));
        }
        if !(0.0 < self.beta_conf && self.beta_conf < 1.0) {
            return Err(CoreError::Config("beta_conf must lie in (0, 1)".into()));
        }
        if self.n_c_prime <= self.n_c {
            return Err(CoreError::Config(
                "certification sample count must exceed the check sample count".into(),
            ));
        }
        if self.n_days == 0 {
            return Err(CoreError::Config("need at least one day sample".into()));
        }
        self.bounds.validate()
    }
}

/// Everything a yearly optimisation borrows from the caller.
#[derive(Clone, Copy)]
pub struct YearInputs<'a> {
    pub bess: &'a BessConfig<f64>,
    pub ageing: &'a AgeingModel,
    pub scenario: &'a MarketScenario,
    pub pool: &'a SamplePool,
    pub rules: MarketRules<f64>,
    pub cfg: &'a OptimizerConfig,
    pub master_seed: u64,
}

/// One row of the optimisation log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterLogRow {
    pub iteration: usize,
    pub best_objective: f64,
    pub population_std: f64,
    pub penalty_set_len: usize,
}

/// Outcome of one optimised operational year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearResult {
    pub year_k: u32,
    pub x_hat: ControllerParams<f64>,
    /// Certified upper bound on the penalty probability.
    pub eps_k: f64,
    pub feasible: bool,
    pub capacity_after: f64,
    pub r0_after: f64,
    pub r1_after: f64,
    pub fcr_revenue_eur: f64,
    pub expected_elec_cost_eur: f64,
    pub expected_degr_cost_eur: f64,
    pub mean_capacity_loss: f64,
    /// Calendar share of the capacity loss (storage ageing).
    pub mean_calendar_loss: f64,
    /// Cycling share of the capacity loss (throughput ageing).
    pub mean_cycle_loss: f64,
    pub penalty_set_size: usize,
    pub iterations: usize,
    pub objective_evaluations: usize,
    pub bounds_30min: PenaltyBounds<f64>,
}

/// A finished year plus the degradation state it hands to the next one.
#[derive(Debug, Clone)]
pub struct YearOutcome {
    pub result: YearResult,
    pub next_degr: DegradationState,
    pub log: Vec<IterLogRow>,
}

/// Index (into `ids`/`penalties`) of the sample to add to the worst-case
/// set: the one with the `(m_max + 1)`-th largest penalty, i.e. the largest
/// among those that must stay penalty-free. Ties break on the sample id for
/// determinism.
pub fn select_penalty_sample(ids: &[usize], penalties: &[f64], m_max: usize) -> usize {
    assert!(ids.len() == penalties.len() && ids.len() > m_max);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        penalties[a]
            .partial_cmp(&penalties[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order[ids.len() - m_max - 1]
}

/// Penalty fraction of one day sample under a candidate controller.
fn day_penalty(
    inputs: &YearInputs<'_>,
    degr: &DegradationState,
    bounds: &PenaltyBounds<f64>,
    params: &ControllerParams<f64>,
    day: &[f64],
) -> f64 {
    let ctx = FcrContext {
        bess: inputs.bess,
        degr,
        rules: &inputs.rules,
        params,
        bounds,
    };
    run_fcr(&ctx, day, params.soc_0, false).penalty_fraction
}

/// Shared state of one year's objective evaluations.
struct EvalCtx<'a> {
    inputs: &'a YearInputs<'a>,
    degr: &'a DegradationState,
    bounds: &'a PenaltyBounds<f64>,
    d_concat: &'a [f64],
    d_block_offsets: &'a [usize],
    blocks_per_day: usize,
    c_penalty: f64,
    fcr_revenue: f64,
    c_cell_total: f64,
}

impl EvalCtx<'_> {
    /// Sample-average objective with the worst-case penalty branch: any
    /// penalty on the worst-case set dominates; otherwise revenue minus
    /// extrapolated electricity and monetised degradation costs.
    fn objective(&self, penalty_days: &[Vec<f64>], x: &[f64; 4]) -> f64 {
        let params = ControllerParams::from_array(*x);
        let mut worst = 0.0f64;
        for day in penalty_days {
            let p = day_penalty(self.inputs, self.degr, self.bounds, &params, day);
            worst = worst.max(p);
        }
        if worst > 0.0 {
            return self.c_penalty * worst;
        }
        let ctx = FcrContext {
            bess: self.inputs.bess,
            degr: self.degr,
            rules: &self.inputs.rules,
            params: &params,
            bounds: self.bounds,
        };
        let run = run_fcr(&ctx, self.d_concat, params.soc_0, false);
        let n_days = self.d_block_offsets.len();
        let scale = 365.0 / n_days as f64;
        let delta = annualized_delta(
            &run.soc_trace,
            n_days as f64,
            self.inputs.ageing,
            self.inputs.bess.t_ref_c,
            self.degr.capacity_ah(self.inputs.bess.cell.capacity_ah),
            self.degr.year_k,
        );
        let elec = electricity_cost(
            &run.economics,
            self.inputs.scenario,
            |b| self.d_block_offsets[b / self.blocks_per_day] + b % self.blocks_per_day,
            self.degr.year_k,
        ) * scale;
        let degr_cost = delta.total_cap_loss() / 0.2 * self.c_cell_total;
        -self.fcr_revenue + elec + degr_cost
    }
}

/// Degradation and cost of one full evaluation trace (a "year sample").
#[derive(Debug, Clone, Copy)]
pub(crate) struct YearSampleEval {
    pub cap_loss: f64,
    pub calendar_cap_loss: f64,
    pub cycle_cap_loss: f64,
    pub res_growth: f64,
    pub elec_cost_eur: f64,
}

pub(crate) fn evaluate_year_sample(
    inputs: &YearInputs<'_>,
    degr: &DegradationState,
    bounds: &PenaltyBounds<f64>,
    params: &ControllerParams<f64>,
    year_idx: usize,
) -> YearSampleEval {
    let trace = inputs.pool.year(year_idx);
    let ctx = FcrContext {
        bess: inputs.bess,
        degr,
        rules: &inputs.rules,
        params,
        bounds,
    };
    let run = run_fcr(&ctx, trace, params.soc_0, false);
    let days = trace.len() as f64 * inputs.pool.dt_s() / 86_400.0;
    let delta = annualized_delta(
        &run.soc_trace,
        days,
        inputs.ageing,
        inputs.bess.t_ref_c,
        degr.capacity_ah(inputs.bess.cell.capacity_ah),
        degr.year_k,
    );
    let offset = inputs.pool.year_block_offset(year_idx);
    let elec = electricity_cost(
        &run.economics,
        inputs.scenario,
        |b| offset + b,
        degr.year_k,
    ) * (365.0 / days);
    YearSampleEval {
        cap_loss: delta.total_cap_loss(),
        calendar_cap_loss: delta.calendar_cap_loss,
        cycle_cap_loss: delta.cycle_cap_loss,
        res_growth: delta.total_res_growth(),
        elec_cost_eur: elec,
    }
}

/// Tune the controller for one operational year.
///
/// Runs the evolution with the growing worst-case penalty set, certifies the
/// winner on the larger sample set, then simulates every year sample to
/// produce the mean capacity and resistance updates for the next year.
pub fn optimize_year(
    inputs: &YearInputs<'_>,
    degr: &DegradationState,
    bounds_30min: PenaltyBounds<f64>,
) -> Result<YearOutcome> {
    let cfg = inputs.cfg;
    cfg.validate()?;
    bounds_30min.validate()?;
    inputs.rules.validate(inputs.bess.p_max_w)?;
    let year = degr.year_k;
    let seed = inputs.master_seed;

    let m_max = max_allowed_violations(cfg.n_c as u64, cfg.beta_conf, cfg.eps_req)?
        .ok_or_else(|| {
            CoreError::Config(format!(
                "n_c = {} cannot certify eps_req = {} at beta = {} even with zero violations",
                cfg.n_c, cfg.eps_req, cfg.beta_conf
            ))
        })? as usize;

    let fcr_revenue = inputs.scenario.fcr_revenue_eur(year, inputs.rules.r_w);
    let c_penalty = cfg
        .c_penalty_eur
        .unwrap_or(1.0e4 * fcr_revenue.abs().max(1.0));
    let c_cell_total = cfg.c_cell_eur_per_kwh * inputs.bess.e_rated_wh / 1000.0;

    // The cost-expectation day set is fixed for the whole year.
    let mut rng_d = derive_rng(seed, stream_tag(STREAM_DAY_SAMPLES, year, 0));
    let d_ids = inputs.pool.draw_day_ids(cfg.n_days, &mut rng_d);
    let day_len = inputs.pool.day_len();
    let mut d_concat: Vec<f64> = Vec::with_capacity(cfg.n_days * day_len);
    let mut d_block_offsets = Vec::with_capacity(cfg.n_days);
    let mut buf = Vec::new();
    for &id in &d_ids {
        inputs.pool.day_into(id, &mut buf);
        d_concat.extend_from_slice(&buf);
        d_block_offsets.push(inputs.pool.day_block_offset(id));
    }
    let blocks_per_day = (86_400.0 / 900.0) as usize;

    let mut penalty_ids: Vec<usize> = Vec::new();
    let mut penalty_days: Vec<Vec<f64>> = Vec::new();

    let eval = EvalCtx {
        inputs,
        degr,
        bounds: &bounds_30min,
        d_concat: &d_concat,
        d_block_offsets: &d_block_offsets,
        blocks_per_day,
        c_penalty,
        fcr_revenue,
        c_cell_total,
    };

    let mut engine = {
        let obj = |x: &[f64; 4]| eval.objective(&penalty_days, x);
        DifferentialEvolution::new(
            cfg.bounds,
            cfg.population,
            cfg.de_mutation_f,
            cfg.de_crossover,
            seed,
            year,
            &obj,
        )?
    };

    let mut schedule = CheckSchedule::new(cfg.n_check_init);
    let mut log = Vec::new();
    let mut check_counter = 0u32;
    let mut iterations = 0usize;

    // Draw fresh samples, count violations of the candidate and grow the
    // worst-case set when the bound fails. Returns whether the candidate
    // passed.
    let constraint_check = |check_counter: &mut u32,
                                best_x: [f64; 4],
                                penalty_ids: &mut Vec<usize>,
                                penalty_days: &mut Vec<Vec<f64>>|
     -> Result<bool> {
        *check_counter += 1;
        let mut rng = derive_rng(
            seed,
            stream_tag(STREAM_PENALTY_CHECK, year, *check_counter),
        );
        let ids = inputs.pool.draw_day_ids(cfg.n_c, &mut rng);
        let params = ControllerParams::from_array(best_x);
        let penalties: Vec<f64> = ids
            .par_iter()
            .map(|&id| day_penalty(inputs, degr, &bounds_30min, &params, &inputs.pool.day(id)))
            .collect();
        let m = penalties.iter().filter(|&&p| p > 0.0).count();
        let bound = chance_upper_bound(m as u64, cfg.n_c as u64, cfg.beta_conf)?;
        if bound > cfg.eps_req {
            let chosen = ids[select_penalty_sample(&ids, &penalties, m_max)];
            if !penalty_ids.contains(&chosen) {
                penalty_ids.push(chosen);
                penalty_days.push(inputs.pool.day(chosen));
            }
            Ok(false)
        } else {
            Ok(true)
        }
    };

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (best_x, best_v) = {
            let obj = |x: &[f64; 4]| eval.objective(&penalty_days, x);
            engine.step(&obj)
        };
        let (_, std) = engine.value_stats();
        log.push(IterLogRow {
            iteration: iterations,
            best_objective: best_v,
            population_std: std,
            penalty_set_len: penalty_ids.len(),
        });

        let mut grew = false;
        if schedule.is_due(iterations) {
            let before = penalty_ids.len();
            if constraint_check(&mut check_counter, best_x, &mut penalty_ids, &mut penalty_days)? {
                schedule.record_pass();
            } else {
                grew = penalty_ids.len() > before;
                schedule.record_violation(iterations);
            }
        }

        // The population-spread stop is only accepted for an incumbent that
        // also passes a fresh constraint check; otherwise the set grows and
        // the search continues. This keeps a spread collapse right after a
        // penalty-set change from ending the search on an uncertified point.
        if !grew && engine.converged(cfg.stop_std_frac) {
            let before = penalty_ids.len();
            if constraint_check(&mut check_counter, best_x, &mut penalty_ids, &mut penalty_days)? {
                break;
            }
            grew = penalty_ids.len() > before;
            schedule.record_violation(iterations);
        }
        if grew {
            let obj = |x: &[f64; 4]| eval.objective(&penalty_days, x);
            engine.reevaluate(&obj);
        }
    }

    let (best_x, _) = engine.best();
    let x_hat = ControllerParams::from_array(best_x);

    // Certification on the larger independent sample set.
    let mut rng = derive_rng(seed, stream_tag(STREAM_CERTIFICATION, year, 0));
    let cert_ids = inputs.pool.draw_day_ids(cfg.n_c_prime, &mut rng);
    let m_prime = cert_ids
        .par_iter()
        .filter(|&&id| {
            day_penalty(inputs, degr, &bounds_30min, &x_hat, &inputs.pool.day(id)) > 0.0
        })
        .count();
    let eps_k = chance_upper_bound(m_prime as u64, cfg.n_c_prime as u64, cfg.beta_conf)?;

    // Year-sample evaluation drives the degradation update and the expected
    // electricity cost.
    let year_evals: Vec<YearSampleEval> = (0..inputs.pool.year_count())
        .into_par_iter()
        .map(|y| evaluate_year_sample(inputs, degr, &bounds_30min, &x_hat, y))
        .collect();
    let n_y = year_evals.len() as f64;
    let mean_cap_loss = year_evals.iter().map(|e| e.cap_loss).sum::<f64>() / n_y;
    let mean_calendar = year_evals.iter().map(|e| e.calendar_cap_loss).sum::<f64>() / n_y;
    let mean_cycle = year_evals.iter().map(|e| e.cycle_cap_loss).sum::<f64>() / n_y;
    let mean_res_growth = year_evals.iter().map(|e| e.res_growth).sum::<f64>() / n_y;
    let mean_elec = year_evals.iter().map(|e| e.elec_cost_eur).sum::<f64>() / n_y;

    let next_degr = degr.advance_year(mean_cap_loss, mean_res_growth)?;

    let result = YearResult {
        year_k: year,
        x_hat,
        eps_k,
        feasible: eps_k <= cfg.eps_req,
        capacity_after: next_degr.capacity_frac,
        r0_after: next_degr.r0,
        r1_after: next_degr.r1,
        fcr_revenue_eur: fcr_revenue,
        expected_elec_cost_eur: mean_elec,
        expected_degr_cost_eur: mean_cap_loss / 0.2 * c_cell_total,
        mean_capacity_loss: mean_cap_loss,
        mean_calendar_loss: mean_calendar,
        mean_cycle_loss: mean_cycle,
        penalty_set_size: penalty_ids.len(),
        iterations,
        objective_evaluations: engine.evaluations(),
        bounds_30min,
    };
    Ok(YearOutcome {
        result,
        next_degr,
        log,
    })
}

/// Why the multi-year loop ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Termination {
    /// Remaining capacity fell below the 80% end-of-life line.
    Degraded,
    /// The certified penalty probability exceeded the requirement.
    Infeasible,
    /// The pack no longer passes the prequalification test.
    Prequalification(String),
    /// The configured year cap was reached.
    MaxYears,
}

/// Full multi-year optimisation trajectory.
#[derive(Debug, Clone)]
pub struct LifetimeRun {
    pub years: Vec<YearResult>,
    pub termination: Termination,
    pub lifetime: LifetimeResult,
    pub logs: Vec<Vec<IterLogRow>>,
}

/// Optimise year after year until the battery degrades to end of life or
/// can no longer deliver the service, then price the whole trajectory.
pub fn run_lifetime(inputs: &YearInputs<'_>) -> Result<LifetimeRun> {
    let cfg = inputs.cfg;
    let mut degr = DegradationState::new(inputs.bess.cell.r0, inputs.bess.cell.r1);
    let mut years: Vec<YearResult> = Vec::new();
    let mut logs = Vec::new();
    let mut cash: Vec<YearCashflowInput> = Vec::new();
    let mut termination = Termination::MaxYears;

    for _ in 0..cfg.max_years {
        if degr.capacity_frac < 0.8 {
            termination = Termination::Degraded;
            break;
        }
        let bounds = match doppelhoecker_test(inputs.bess, &degr, inputs.rules.r_w) {
            Ok(res) => res.bounds(),
            Err(CoreError::Prequalification(msg)) => {
                termination = Termination::Prequalification(msg);
                break;
            }
            Err(other) => return Err(other),
        };
        let outcome = optimize_year(inputs, &degr, bounds)?;
        cash.push(YearCashflowInput {
            fcr_revenue_eur: outcome.result.fcr_revenue_eur,
            elec_cost_eur: outcome.result.expected_elec_cost_eur,
            eps_k: outcome.result.eps_k,
            capacity_start: degr.capacity_frac,
            capacity_end: outcome.next_degr.capacity_frac,
        });
        let feasible = outcome.result.feasible;
        degr = outcome.next_degr;
        logs.push(outcome.log);
        years.push(outcome.result);
        if !feasible {
            termination = Termination::Infeasible;
            break;
        }
    }

    let lifetime = lifetime_revenue(&cash, cfg.eps_req, inputs.scenario.discount_rate)?;
    Ok(LifetimeRun {
        years,
        termination,
        lifetime,
        logs,
    })
}

/// Grid specification of the sizing sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub energies_wh: Vec<f64>,
    pub c_rates: Vec<f64>,
    /// Investment cost levels, EUR per kWh of rated energy.
    pub cost_eur_per_kwh: Vec<f64>,
    /// Contracted reserve, watts.
    pub r_w: f64,
}

/// One cell of the sizing sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub e_rated_wh: f64,
    pub c_rate: f64,
    /// "ok" or the reason the point cannot deliver the service.
    pub status: String,
    pub k_max: usize,
    pub service_years: f64,
    pub discounted_net_revenue_eur: f64,
    /// NPV per cost level, aligned with the sweep's cost list.
    pub npv_eur: Vec<f64>,
    pub payback_years: Vec<Option<f64>>,
}

/// Run the full multi-year optimisation on every grid point. Statically
/// infeasible points (power rule or failed prequalification) earn nothing,
/// so their NPV is exactly the negated investment.
#[allow(clippy::too_many_arguments)]
pub fn sizing_sweep(
    cell: &crate::cell::CellParams<f64>,
    ocv: &crate::cell::OcvCurve<f64>,
    inverter: &crate::bess::InverterCurve<f64>,
    dt_s: f64,
    ageing: &AgeingModel,
    scenario: &MarketScenario,
    pool: &SamplePool,
    cfg: &OptimizerConfig,
    spec: &SweepSpec,
    master_seed: u64,
) -> Result<Vec<SweepPoint>> {
    let points: Vec<(usize, f64, f64)> = spec
        .c_rates
        .iter()
        .flat_map(|&c| spec.energies_wh.iter().map(move |&e| (c, e)))
        .enumerate()
        .map(|(i, (c, e))| (i, c, e))
        .collect();

    let run_point =
        |&(idx, c_rate, e_wh): &(usize, f64, f64)| -> Result<SweepPoint> {
            let zero_revenue = |status: String| SweepPoint {
                e_rated_wh: e_wh,
                c_rate,
                status,
                k_max: 0,
                service_years: 0.0,
                discounted_net_revenue_eur: 0.0,
                npv_eur: spec
                    .cost_eur_per_kwh
                    .iter()
                    .map(|&cost| -cost * e_wh / 1000.0)
                    .collect(),
                payback_years: vec![None; spec.cost_eur_per_kwh.len()],
            };
            let bess = BessConfig::with_c_rate(
                cell.clone(),
                ocv.clone(),
                inverter.clone(),
                e_wh,
                c_rate,
                dt_s,
            )?;
            let rules = MarketRules::german(spec.r_w, bess.p_max_w);
            if let Err(e) = rules.validate(bess.p_max_w) {
                return Ok(zero_revenue(format!("infeasible: {e}")));
            }
            let inputs = YearInputs {
                bess: &bess,
                ageing,
                scenario,
                pool,
                rules,
                cfg,
                master_seed: master_seed.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            };
            let run = run_lifetime(&inputs)?;
            let status = match &run.termination {
                Termination::Prequalification(msg) if run.years.is_empty() => {
                    format!("infeasible: {msg}")
                }
                Termination::Infeasible if run.lifetime.k_max == 0 => {
                    "infeasible: penalty constraint unsatisfiable in year 0".to_string()
                }
                t => format!("{t:?}"),
            };
            Ok(SweepPoint {
                e_rated_wh: e_wh,
                c_rate,
                status,
                k_max: run.lifetime.k_max,
                service_years: run.lifetime.service_years,
                discounted_net_revenue_eur: run.lifetime.discounted_net_revenue_eur,
                npv_eur: spec
                    .cost_eur_per_kwh
                    .iter()
                    .map(|&cost| run.lifetime.npv_eur(cost * e_wh / 1000.0))
                    .collect(),
                payback_years: spec
                    .cost_eur_per_kwh
                    .iter()
                    .map(|&cost| run.lifetime.payback_years(cost * e_wh / 1000.0))
                    .collect(),
            })
        };

    let results: Vec<Result<SweepPoint>> = points.par_iter().map(run_point).collect();
    results.into_iter().collect()
}
