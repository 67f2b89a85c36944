//! German electricity-cost model (intraday recharge settlement, imbalance
//! residual, levies), FCR price scenarios, discounted lifetime revenues, NPV
//! and payback.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// Weeks in one operational year, for converting weekly FCR auction prices.
pub const WEEKS_PER_YEAR: f64 = 365.0 / 7.0;

/// A cyclic price series at fixed granularity (15 minutes by convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    /// Settlement period length, seconds.
    pub step_s: f64,
    /// Prices in EUR/MWh.
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn constant(eur_per_mwh: f64) -> Self {
        Self {
            step_s: 900.0,
            values: vec![eur_per_mwh],
        }
    }

    /// Cyclic lookup by global settlement-period index.
    pub fn get(&self, index: usize) -> f64 {
        self.values[index % self.values.len()]
    }
}

/// What a levy is charged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyBase {
    /// Energy consumed from the grid.
    Consumption,
    /// Conversion losses: grid energy in minus grid energy out.
    Losses,
    /// Recorded for documentation, contributes nothing.
    Exempt,
}

/// One element of the electricity cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levy {
    pub name: String,
    pub rate_eur_per_kwh: f64,
    pub base: LevyBase,
}

/// Default levy table for a grid-connected standalone battery in Germany:
/// renewable-energy and combined-heat-and-power levies apply to the losses
/// only; the grid-fee offshoots apply to consumption; network charges and
/// electricity tax are exempt. The concession fee varies by municipality
/// (0.11 to 2.39 ct/kWh); the lower bound is the shipped default.
pub fn german_default_levies() -> Vec<Levy> {
    let levy = |name: &str, ct_per_kwh: f64, base: LevyBase| Levy {
        name: name.to_string(),
        rate_eur_per_kwh: ct_per_kwh / 100.0,
        base,
    };
    vec![
        levy("network_charges", 0.0, LevyBase::Exempt),
        levy("electricity_tax", 2.05, LevyBase::Exempt),
        levy("eeg", 6.88, LevyBase::Losses),
        levy("kwk", 0.4438, LevyBase::Losses),
        levy("stromnev_19", 0.370, LevyBase::Consumption),
        levy("concession_fee", 0.11, LevyBase::Consumption),
        levy("offshore_liability", 0.037, LevyBase::Consumption),
        levy("interruptible_load", 0.011, LevyBase::Consumption),
    ]
}

/// Market environment: FCR price path, settlement price series, levy table,
/// inflation and discount rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketScenario {
    /// Yearly averaged FCR capacity price per operational year,
    /// EUR/MW/week. The last entry is held beyond the end of the path.
    pub fcr_eur_per_mw_week: Vec<f64>,
    pub intraday: PriceSeries,
    pub imbalance: PriceSeries,
    pub levies: Vec<Levy>,
    /// Electricity costs rise with inflation, fraction per year.
    pub inflation: f64,
    /// Discount rate for the net-present-value calculation, fraction per
    /// year.
    pub discount_rate: f64,
}

impl MarketScenario {
    fn exponential_path(start: f64, end: f64, horizon_years: usize) -> Vec<f64> {
        let n = horizon_years.max(1);
        (0..=n)
            .map(|k| start * (end / start).powf(k as f64 / n as f64))
            .collect()
    }

    /// Moderate price-decline scenario: from the recent weekly auction level
    /// towards the upper band of the published long-term forecasts.
    pub fn moderate() -> Self {
        Self {
            fcr_eur_per_mw_week: Self::exponential_path(2500.0, 1630.0, 18),
            intraday: PriceSeries::constant(40.0),
            imbalance: PriceSeries::constant(45.0),
            levies: german_default_levies(),
            inflation: 0.017,
            discount_rate: 0.017,
        }
    }

    /// Low price-decline scenario towards the lower band of the forecasts.
    pub fn low() -> Self {
        Self {
            fcr_eur_per_mw_week: Self::exponential_path(2500.0, 1000.0, 18),
            ..Self::moderate()
        }
    }

    /// FCR capacity price of operational year `k`, EUR/MW/week.
    pub fn fcr_price(&self, year_k: u32) -> f64 {
        let idx = (year_k as usize).min(self.fcr_eur_per_mw_week.len() - 1);
        self.fcr_eur_per_mw_week[idx]
    }

    /// Yearly FCR revenue for a reserve of `r_w` watts.
    pub fn fcr_revenue_eur(&self, year_k: u32, r_w: f64) -> f64 {
        self.fcr_price(year_k) * (r_w / 1.0e6) * WEEKS_PER_YEAR
    }
}

/// Settlement bookkeeping accumulated by a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEconomics<F: Real = f64> {
    /// Recharge energy traded per 15-min block, watt-hours (signed: positive
    /// buys).
    pub traded_block_wh: Vec<F>,
    /// Residual grid energy per block settled at the imbalance price,
    /// watt-hours (signed).
    pub residual_block_wh: Vec<F>,
    /// Total grid energy consumed, watt-hours.
    pub grid_in_wh: F,
    /// Total grid energy injected, watt-hours.
    pub grid_out_wh: F,
}

impl<F: Real> TraceEconomics<F> {
    pub fn with_blocks(n_blocks: usize) -> Self {
        Self {
            traded_block_wh: vec![F::zero(); n_blocks],
            residual_block_wh: vec![F::zero(); n_blocks],
            grid_in_wh: F::zero(),
            grid_out_wh: F::zero(),
        }
    }

    pub fn record_block_trade(&mut self, block: usize, energy_wh: F) {
        if block < self.traded_block_wh.len() {
            self.traded_block_wh[block] = energy_wh;
        }
    }

    pub fn record_residual(&mut self, block: usize, energy_wh: F) {
        if block < self.residual_block_wh.len() {
            self.residual_block_wh[block] = self.residual_block_wh[block] + energy_wh;
        }
    }

    /// Conversion losses over the trace, watt-hours.
    pub fn losses_wh(&self) -> F {
        self.grid_in_wh - self.grid_out_wh
    }
}

/// Electricity cost of one simulated trace in EUR.
///
/// Recharge blocks settle at the matching intraday price, the residual grid
/// energy at the imbalance price (signed, so symmetric activation may earn),
/// and the levies apply to their bases. `block_index_map` translates a local
/// block index into the global settlement-period index of the price series;
/// costs inflate with the operational year.
pub fn electricity_cost<M: Fn(usize) -> usize>(
    econ: &TraceEconomics<f64>,
    scenario: &MarketScenario,
    block_index_map: M,
    year_k: u32,
) -> f64 {
    let mut cost = 0.0;
    for (b, &wh) in econ.traded_block_wh.iter().enumerate() {
        cost += wh / 1.0e6 * scenario.intraday.get(block_index_map(b));
    }
    for (b, &wh) in econ.residual_block_wh.iter().enumerate() {
        cost += wh / 1.0e6 * scenario.imbalance.get(block_index_map(b));
    }
    let consumption_kwh = econ.grid_in_wh / 1.0e3;
    let losses_kwh = econ.losses_wh() / 1.0e3;
    for levy in &scenario.levies {
        let base_kwh = match levy.base {
            LevyBase::Consumption => consumption_kwh,
            LevyBase::Losses => losses_kwh,
            LevyBase::Exempt => 0.0,
        };
        cost += base_kwh * levy.rate_eur_per_kwh;
    }
    cost * (1.0 + scenario.inflation).powi(year_k as i32)
}

/// Fraction of an operational year's revenue that still counts.
///
/// Full years score 1. In the year during which the remaining capacity
/// crosses the 80% end-of-life line or the certified penalty probability
/// crosses the requirement, the fraction interpolates linearly on whichever
/// criterion binds (the minimum of the two interpolants), floored at zero.
pub fn year_revenue_fraction(
    capacity_start: f64,
    capacity_end: f64,
    eps_prev: f64,
    eps_k: f64,
    eps_req: f64,
) -> f64 {
    let c_term = if capacity_end >= 0.8 {
        1.0
    } else if capacity_end == capacity_start {
        if capacity_start >= 0.8 {
            1.0
        } else {
            0.0
        }
    } else {
        (0.8 - capacity_start) / (capacity_end - capacity_start)
    };
    let e_term = if eps_k <= eps_req {
        1.0
    } else if eps_k == eps_prev {
        0.0
    } else {
        (eps_req - eps_prev) / (eps_k - eps_prev)
    };
    c_term.min(e_term).clamp(0.0, 1.0)
}

/// Per-year inputs for the lifetime revenue calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearCashflowInput {
    pub fcr_revenue_eur: f64,
    pub elec_cost_eur: f64,
    /// Certified penalty probability upper bound for this year.
    pub eps_k: f64,
    /// Remaining capacity fraction at the start of the year.
    pub capacity_start: f64,
    /// Remaining capacity fraction at the end of the year.
    pub capacity_end: f64,
}

/// Per-year cashflow after applying the terminal-year fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearCashflow {
    pub year_k: u32,
    pub fcr_revenue_eur: f64,
    pub elec_cost_eur: f64,
    pub fraction: f64,
    pub discounted_net_eur: f64,
}

/// Discounted lifetime revenues and derived indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    pub years: Vec<YearCashflow>,
    /// Number of years with a positive revenue fraction.
    pub k_max: usize,
    /// Sum of the yearly fractions: the service lifetime in years.
    pub service_years: f64,
    pub discounted_net_revenue_eur: f64,
}

impl LifetimeResult {
    /// Net present value against an investment cost.
    pub fn npv_eur(&self, cost_bess_eur: f64) -> f64 {
        self.discounted_net_revenue_eur - cost_bess_eur
    }

    /// First (fractional) year at which cumulative discounted net revenue
    /// covers the investment, if it ever does.
    pub fn payback_years(&self, cost_bess_eur: f64) -> Option<f64> {
        if cost_bess_eur <= 0.0 {
            return Some(0.0);
        }
        let mut cum = 0.0;
        for (i, year) in self.years.iter().enumerate() {
            let next = cum + year.discounted_net_eur;
            if next >= cost_bess_eur {
                let within = if year.discounted_net_eur > 0.0 {
                    (cost_bess_eur - cum) / year.discounted_net_eur
                } else {
                    1.0
                };
                return Some(i as f64 + within);
            }
            cum = next;
        }
        None
    }
}

/// Assemble the discounted lifetime revenue from the per-year outcomes.
///
/// Cash flows are discounted end-of-year. If the very first year fails the
/// availability requirement the battery never qualifies for service and the
/// revenue is exactly zero.
pub fn lifetime_revenue(
    years: &[YearCashflowInput],
    eps_req: f64,
    discount_rate: f64,
) -> Result<LifetimeResult> {
    if discount_rate <= -1.0 {
        return Err(CoreError::InvalidParams(
            "discount rate must exceed -100%".into(),
        ));
    }
    let mut result_years = Vec::with_capacity(years.len());
    let mut total = 0.0;
    let mut service_years = 0.0;
    let mut k_max = 0usize;
    let first_year_infeasible = years.first().is_some_and(|y| y.eps_k > eps_req);
    if !first_year_infeasible {
        let mut eps_prev = 0.0;
        for (i, y) in years.iter().enumerate() {
            let fraction = year_revenue_fraction(
                y.capacity_start,
                y.capacity_end,
                eps_prev,
                y.eps_k,
                eps_req,
            );
            let discount = (1.0 + discount_rate).powi(i as i32 + 1);
            let discounted_net = (y.fcr_revenue_eur - y.elec_cost_eur) / discount * fraction;
            total += discounted_net;
            service_years += fraction;
            if fraction > 0.0 {
                k_max = i + 1;
            }
            result_years.push(YearCashflow {
                year_k: i as u32,
                fcr_revenue_eur: y.fcr_revenue_eur,
                elec_cost_eur: y.elec_cost_eur,
                fraction,
                discounted_net_eur: discounted_net,
            });
            eps_prev = y.eps_k;
        }
    }
    Ok(LifetimeResult {
        years: result_years,
        k_max,
        service_years,
        discounted_net_revenue_eur: total,
    })
}
