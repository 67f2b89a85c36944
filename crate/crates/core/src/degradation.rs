//! Calendar and cycle ageing, rainflow cycle extraction, and the day-sample
//! extrapolation of yearly degradation.
//!
//! Capacity fades with storage time through a `t^0.75` law and with cycling
//! through a `sqrt(Q)` law on the charge throughput `Q`; resistances grow with
//! `t^0.75` and linearly in `Q`. The stress factors (alpha for calendar, beta
//! for cycling) are pluggable functions of average SoC, temperature and depth
//! of discharge, loaded from configuration.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::{real, Real};

/// Whether a rainflow record is a half or a full cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CycleWeight {
    Half,
    Full,
}

/// One extracted cycle: its mean SoC, depth of discharge and the cumulative
/// throughput after it was counted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord<F: Real = f64> {
    /// Midpoint of the two extrema bounding the cycle, SoC fraction.
    pub soc_av: F,
    /// Depth of discharge in percent (SoC swing times 100).
    pub dod_pct: F,
    /// Cumulative throughput in ampere-hours after this cycle.
    pub q_cum_ah: F,
    pub weight: CycleWeight,
}

/// Local extrema of a trace. Plateaus collapse to their first sample; the
/// first and last samples always count as extrema.
fn local_extrema<F: Real>(trace: &[F]) -> Vec<F> {
    let mut dedup: Vec<F> = Vec::with_capacity(trace.len());
    for &v in trace {
        if dedup.last().is_none_or(|&last| last != v) {
            dedup.push(v);
        }
    }
    if dedup.len() < 2 {
        return Vec::new();
    }
    let mut extrema = Vec::with_capacity(dedup.len());
    extrema.push(dedup[0]);
    for w in dedup.windows(3) {
        let rising_then_falling = w[1] > w[0] && w[1] > w[2];
        let falling_then_rising = w[1] < w[0] && w[1] < w[2];
        if rising_then_falling || falling_then_rising {
            extrema.push(w[1]);
        }
    }
    extrema.push(dedup[dedup.len() - 1]);
    extrema
}

/// Rainflow cycle counting over a SoC trace.
///
/// Three-point counting over the local extrema: whenever the most recent
/// swing is at least as large as the previous one, the previous swing is
/// closed: as a full cycle when it is interior, as a half cycle when it
/// contains the start of the residual. Whatever survives the scan is emitted
/// as half cycles. Half cycles contribute `dSoC * C / 2` to the throughput,
/// full cycles `dSoC * C`; the per-cycle average SoC is the midpoint of the
/// two extrema.
pub fn rainflow<F: Real>(soc_trace: &[F], capacity_ah: F) -> Vec<CycleRecord<F>> {
    let extrema = local_extrema(soc_trace);
    let mut records: Vec<CycleRecord<F>> = Vec::new();
    let mut q_cum = F::zero();
    let hundred = real::<F>(100.0);
    let half = real::<F>(0.5);

    let mut emit = |a: F, b: F, weight: CycleWeight, q_cum: &mut F| {
        let swing = (a - b).abs();
        if swing == F::zero() {
            return;
        }
        let throughput = match weight {
            CycleWeight::Half => swing * capacity_ah * half,
            CycleWeight::Full => swing * capacity_ah,
        };
        *q_cum = *q_cum + throughput;
        records.push(CycleRecord {
            soc_av: (a + b) * half,
            dod_pct: swing * hundred,
            q_cum_ah: *q_cum,
            weight,
        });
    };

    let mut stack: Vec<F> = Vec::with_capacity(extrema.len());
    for &v in &extrema {
        stack.push(v);
        while stack.len() >= 3 {
            let n = stack.len();
            let (a, b, c) = (stack[n - 3], stack[n - 2], stack[n - 1]);
            let prev_swing = (a - b).abs();
            let last_swing = (b - c).abs();
            if last_swing < prev_swing {
                break;
            }
            if n == 3 {
                // The swing contains the start of the residual: half cycle,
                // and the residual now starts at its second point.
                emit(a, b, CycleWeight::Half, &mut q_cum);
                stack.remove(0);
            } else {
                emit(a, b, CycleWeight::Full, &mut q_cum);
                stack.remove(n - 3);
                stack.remove(n - 3);
            }
        }
    }
    // Residual extrema unwind as half cycles.
    for w in stack.windows(2) {
        emit(w[0], w[1], CycleWeight::Half, &mut q_cum);
    }
    records
}

/// One stress factor: `poly_a(x1) * poly_b(x2) * arrhenius(x2)`, clamped to
/// be non-negative.
///
/// For calendar factors the arguments are `(soc_av, temperature_c)` and the
/// optional Arrhenius term acts on the temperature; for cycle factors they
/// are `(soc_av, dod_pct)` and the second polynomial acts on the depth of
/// discharge.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StressFactor {
    /// Polynomial coefficients in the first argument, ascending powers.
    pub poly_first: Vec<f64>,
    /// Polynomial coefficients in the second argument, ascending powers.
    /// Leave as `[1.0]` when unused.
    #[serde(default = "StressFactor::unit_poly")]
    pub poly_second: Vec<f64>,
    /// Optional Arrhenius activation (kelvin): multiplies
    /// `exp(act * (1/298.15 - 1/T_K))` with the second argument read as
    /// degrees Celsius.
    #[serde(default)]
    pub arrhenius_activation_k: Option<f64>,
}

impl StressFactor {
    fn unit_poly() -> Vec<f64> {
        vec![1.0]
    }

    /// Constant factor, mostly for tests and synthetic studies.
    pub fn constant(value: f64) -> Self {
        Self {
            poly_first: vec![value],
            poly_second: Self::unit_poly(),
            arrhenius_activation_k: None,
        }
    }

    fn poly<F: Real>(coeffs: &[f64], x: F) -> F {
        let mut acc = F::zero();
        for &c in coeffs.iter().rev() {
            acc = acc * x + real(c);
        }
        acc
    }

    /// Evaluate the factor; clamped at zero so ageing never runs backwards.
    pub fn eval<F: Real>(&self, x1: F, x2: F) -> F {
        let mut v = Self::poly(&self.poly_first, x1) * Self::poly(&self.poly_second, x2);
        if let Some(act) = self.arrhenius_activation_k {
            let t_k = x2 + real(273.15);
            let t_ref_k = real::<F>(298.15);
            v = v * (real::<F>(act) * (t_ref_k.recip() - t_k.recip())).exp();
        }
        v.max(F::zero())
    }
}

/// The four ageing stress factors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgeingModel {
    /// Calendar capacity fade per `day^0.75`, as `f(soc_av, temperature_c)`.
    pub alpha_cap: StressFactor,
    /// Calendar resistance growth per `day^0.75`.
    pub alpha_res: StressFactor,
    /// Cycle capacity fade per `sqrt(Ah)`, as `f(soc_av, dod_pct)`.
    pub beta_cap: StressFactor,
    /// Cycle resistance growth per `Ah`.
    pub beta_res: StressFactor,
}

impl AgeingModel {
    /// Constant factors for tests and closed-form checks.
    pub fn constant(alpha_cap: f64, alpha_res: f64, beta_cap: f64, beta_res: f64) -> Self {
        Self {
            alpha_cap: StressFactor::constant(alpha_cap),
            alpha_res: StressFactor::constant(alpha_res),
            beta_cap: StressFactor::constant(beta_cap),
            beta_res: StressFactor::constant(beta_res),
        }
    }

    /// Shipped placeholder coefficients with a plausible magnitude
    /// (about 2%/year calendar fade at mid-SoC and room temperature, mild
    /// SoC and DoD dependence). Real studies must load fitted coefficients
    /// from configuration.
    pub fn default_placeholder() -> Self {
        Self {
            alpha_cap: StressFactor {
                poly_first: vec![1.0e-4, 2.8e-4],
                poly_second: vec![1.0],
                arrhenius_activation_k: Some(4000.0),
            },
            alpha_res: StressFactor {
                poly_first: vec![1.2e-4, 2.0e-4],
                poly_second: vec![1.0],
                arrhenius_activation_k: Some(4000.0),
            },
            beta_cap: StressFactor {
                poly_first: vec![1.0],
                poly_second: vec![2.0e-4, 4.0e-6],
                arrhenius_activation_k: None,
            },
            beta_res: StressFactor {
                poly_first: vec![1.0],
                poly_second: vec![1.0e-5, 2.0e-7],
                arrhenius_activation_k: None,
            },
        }
    }
}

/// Cycle capacity loss: `sum beta_cap(soc_av, dod) * (sqrt(Q_i) - sqrt(Q_{i-1}))`.
///
/// `records` must be ordered by cumulative throughput, as produced by
/// [`rainflow`]. An optional `q_scale` rescales the cumulative throughputs
/// before the square root, which is how a day-sample run extrapolates to a
/// full year (`q_scale = 365 / n_days`).
pub fn cycle_capacity_loss<F: Real>(
    records: &[CycleRecord<F>],
    model: &AgeingModel,
    q_scale: F,
) -> F {
    let mut prev = F::zero();
    let mut loss = F::zero();
    for rec in records {
        let q = rec.q_cum_ah * q_scale;
        loss = loss + model.beta_cap.eval(rec.soc_av, rec.dod_pct) * (q.sqrt() - prev.sqrt());
        prev = q;
    }
    loss
}

/// Cycle resistance growth: linear in the throughput increments.
pub fn cycle_resistance_growth<F: Real>(
    records: &[CycleRecord<F>],
    model: &AgeingModel,
    q_scale: F,
) -> F {
    let mut prev = F::zero();
    let mut growth = F::zero();
    for rec in records {
        let q = rec.q_cum_ah * q_scale;
        growth = growth + model.beta_res.eval(rec.soc_av, rec.dod_pct) * (q - prev);
        prev = q;
    }
    growth
}

/// Calendar capacity loss of operational year `k` (0-based):
/// `alpha_cap(soc_av, T) * ((365 (k+1))^0.75 - (365 k)^0.75)`, days as the
/// time unit.
pub fn calendar_loss<F: Real>(soc_av: F, temperature_c: F, year_k: u32, alpha: &StressFactor) -> F {
    let days_next = real::<F>(365.0 * f64::from(year_k + 1));
    let days_now = real::<F>(365.0 * f64::from(year_k));
    let expo = real::<F>(0.75);
    alpha.eval(soc_av, temperature_c) * (days_next.powf(expo) - days_now.powf(expo))
}

/// Capacity loss and resistance growth accrued over one operational year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationDelta<F: Real = f64> {
    /// Capacity fade from cycling, fraction of initial capacity.
    pub cycle_cap_loss: F,
    /// Capacity fade from storage, fraction of initial capacity.
    pub calendar_cap_loss: F,
    /// Resistance growth from cycling, fraction of initial resistance.
    pub cycle_res_growth: F,
    /// Resistance growth from storage, fraction of initial resistance.
    pub calendar_res_growth: F,
}

impl<F: Real> DegradationDelta<F> {
    pub fn total_cap_loss(&self) -> F {
        self.cycle_cap_loss + self.calendar_cap_loss
    }

    pub fn total_res_growth(&self) -> F {
        self.cycle_res_growth + self.calendar_res_growth
    }
}

/// Extrapolate the degradation of a full year from a SoC trace covering
/// `days_covered` days (not necessarily an integer).
///
/// Rainflow runs over the concatenated trace; cycle terms rescale the
/// cumulative throughput by `365 / days_covered`, and the calendar terms use
/// the empirical mean SoC of the concatenation.
pub fn annualized_delta<F: Real>(
    soc_concat: &[F],
    days_covered: f64,
    model: &AgeingModel,
    temperature_c: F,
    capacity_ah: F,
    year_k: u32,
) -> DegradationDelta<F> {
    assert!(days_covered > 0.0, "trace must cover a positive duration");
    let records = rainflow(soc_concat, capacity_ah);
    let scale = real::<F>(365.0 / days_covered);
    let soc_av = if soc_concat.is_empty() {
        F::zero()
    } else {
        soc_concat.iter().copied().sum::<F>() / real(soc_concat.len() as f64)
    };
    DegradationDelta {
        cycle_cap_loss: cycle_capacity_loss(&records, model, scale),
        calendar_cap_loss: calendar_loss(soc_av, temperature_c, year_k, &model.alpha_cap),
        cycle_res_growth: cycle_resistance_growth(&records, model, scale),
        calendar_res_growth: calendar_loss(soc_av, temperature_c, year_k, &model.alpha_res),
    }
}

/// Extrapolate a full year from `n_days` whole simulated days.
pub fn extrapolate_day_samples<F: Real>(
    soc_concat: &[F],
    n_days: usize,
    model: &AgeingModel,
    temperature_c: F,
    capacity_ah: F,
    year_k: u32,
) -> DegradationDelta<F> {
    assert!(n_days >= 1, "need at least one day sample");
    annualized_delta(
        soc_concat,
        n_days as f64,
        model,
        temperature_c,
        capacity_ah,
        year_k,
    )
}

/// Remaining capacity and grown resistances at the start of a year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationState {
    /// Operational year index, 0 = new.
    pub year_k: u32,
    /// Remaining capacity as a fraction of initial (1.0 = new).
    pub capacity_frac: f64,
    /// Series resistance, ohms.
    pub r0: f64,
    /// RC-branch resistance, ohms.
    pub r1: f64,
}

impl DegradationState {
    /// Fresh battery with the given initial resistances.
    pub fn new(r0: f64, r1: f64) -> Self {
        Self {
            year_k: 0,
            capacity_frac: 1.0,
            r0,
            r1,
        }
    }

    /// Degraded capacity in ampere-hours given the nominal cell capacity.
    pub fn capacity_ah(&self, nominal_ah: f64) -> f64 {
        self.capacity_frac * nominal_ah
    }

    /// Apply one year of mean losses: capacity decreases, resistances grow
    /// proportionally, the year advances.
    pub fn advance_year(&self, mean_cap_loss: f64, mean_res_growth: f64) -> Result<Self> {
        if mean_cap_loss < 0.0 || mean_res_growth < 0.0 {
            return Err(CoreError::Domain(
                "degradation losses must be non-negative".into(),
            ));
        }
        Ok(Self {
            year_k: self.year_k + 1,
            capacity_frac: self.capacity_frac - mean_cap_loss,
            r0: self.r0 * (1.0 + mean_res_growth),
            r1: self.r1 * (1.0 + mean_res_growth),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rainflow_simple_up_down() {
        let records = rainflow(&[0.5f64, 0.7, 0.5], 2.0);
        assert_eq!(records.len(), 2);
        for rec in &records {
            assert_eq!(rec.weight, CycleWeight::Half);
            assert!((rec.dod_pct - 20.0).abs() < 1e-12);
            assert!((rec.soc_av - 0.6).abs() < 1e-12);
        }
        let q_total = records.last().unwrap().q_cum_ah;
        assert!((q_total - 0.2 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn rainflow_constant_trace_is_empty() {
        assert!(rainflow(&[0.5f64, 0.5, 0.5], 2.0).is_empty());
        assert!(rainflow(&[0.5f64], 2.0).is_empty());
        assert!(rainflow::<f64>(&[], 2.0).is_empty());
    }

    #[test]
    fn rainflow_inner_cycle_extracted_as_full() {
        // 0.0 -> 1.0 envelope with a 0.4/0.6 blip inside.
        let trace = [0.0, 0.6, 0.4, 1.0, 0.1];
        let records = rainflow::<f64>(&trace, 1.0);
        let fulls: Vec<_> = records
            .iter()
            .filter(|r| r.weight == CycleWeight::Full)
            .collect();
        assert_eq!(fulls.len(), 1);
        assert!((fulls[0].dod_pct - 20.0).abs() < 1e-12);
        assert!((fulls[0].soc_av - 0.5).abs() < 1e-12);
        let halves: Vec<_> = records
            .iter()
            .filter(|r| r.weight == CycleWeight::Half)
            .collect();
        assert_eq!(halves.len(), 2);
    }

    #[test]
    fn rainflow_plateaus_collapse() {
        let records = rainflow(&[0.5f64, 0.7, 0.7, 0.7, 0.5], 2.0);
        assert_eq!(records.len(), 2);
    }

    fn swing_sum(trace: &[f64]) -> f64 {
        local_extrema(trace)
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum()
    }

    proptest! {
        // Throughput conservation: every extremum-to-extremum swing is
        // counted exactly once as half of a full cycle or one half cycle.
        #[test]
        fn rainflow_conserves_throughput(values in prop::collection::vec(0.0f64..1.0, 2..80)) {
            let cap = 2.05;
            let records = rainflow(&values, cap);
            let total: f64 = records.last().map(|r| r.q_cum_ah).unwrap_or(0.0);
            let expected = swing_sum(&values) * cap / 2.0;
            prop_assert!((total - expected).abs() < 1e-9 * (1.0 + expected));
        }

        #[test]
        fn rainflow_q_cum_is_nondecreasing(values in prop::collection::vec(0.0f64..1.0, 2..80)) {
            let records = rainflow(&values, 1.0);
            for pair in records.windows(2) {
                prop_assert!(pair[1].q_cum_ah >= pair[0].q_cum_ah);
            }
            for rec in &records {
                prop_assert!(rec.dod_pct >= 0.0 && rec.dod_pct <= 100.0);
            }
        }
    }

    #[test]
    fn cycle_loss_zero_beta() {
        let records = rainflow(&[0.2f64, 0.8, 0.2, 0.9], 2.0);
        let model = AgeingModel::constant(0.0, 0.0, 0.0, 0.0);
        assert_eq!(cycle_capacity_loss(&records, &model, 1.0), 0.0);
    }

    #[test]
    fn cycle_loss_single_cycle_sqrt() {
        // One record with Q = 4 Ah from zero: loss = beta * sqrt(4) = 2 beta.
        let records = vec![CycleRecord::<f64> {
            soc_av: 0.5,
            dod_pct: 50.0,
            q_cum_ah: 4.0,
            weight: CycleWeight::Full,
        }];
        let model = AgeingModel::constant(0.0, 0.0, 3.0e-4, 0.0);
        let loss = cycle_capacity_loss(&records, &model, 1.0);
        assert!((loss - 3.0e-4 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn cycle_loss_telescopes_for_constant_beta() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let beta = 5.0e-4;
        let model = AgeingModel::constant(0.0, 0.0, beta, beta);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let trace: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let records = rainflow(&trace, 2.05);
            if records.is_empty() {
                continue;
            }
            let q_tot = records.last().unwrap().q_cum_ah;
            let loss = cycle_capacity_loss(&records, &model, 1.0);
            assert!(
                (loss - beta * q_tot.sqrt()).abs() < 1e-9,
                "telescoping failed: {loss} vs {}",
                beta * q_tot.sqrt()
            );
            let growth = cycle_resistance_growth(&records, &model, 1.0);
            assert!((growth - beta * q_tot).abs() < 1e-9);
        }
    }

    #[test]
    fn calendar_loss_cases() {
        let zero = StressFactor::constant(0.0);
        assert_eq!(calendar_loss(0.5, 25.0, 0, &zero), 0.0);

        let a = 2.0e-4;
        let alpha = StressFactor::constant(a);
        // Independent evaluation of 365^0.75 through ln/exp: 83.506.
        let expected = a * (0.75 * 365.0f64.ln()).exp();
        let loss = calendar_loss(0.5, 25.0, 0, &alpha);
        assert!(((loss - expected) / expected).abs() < 1e-12);
        assert!((loss / a - 83.506).abs() < 0.01);

        // Ten years telescope to a * 3650^0.75.
        let total: f64 = (0..10).map(|k| calendar_loss(0.5, 25.0, k, &alpha)).sum();
        let direct = a * 3650.0f64.powf(0.75);
        assert!((total - direct).abs() < 1e-12);
    }

    #[test]
    fn stress_factor_polynomials_and_arrhenius() {
        let f = StressFactor {
            poly_first: vec![1.0, 2.0],
            poly_second: vec![0.5, 0.1],
            arrhenius_activation_k: None,
        };
        // (1 + 2*0.5) * (0.5 + 0.1*20) = 2 * 2.5 = 5
        assert!((f.eval(0.5f64, 20.0) - 5.0).abs() < 1e-12);

        let g = StressFactor {
            poly_first: vec![1.0],
            poly_second: vec![1.0],
            arrhenius_activation_k: Some(4000.0),
        };
        // At the reference temperature the Arrhenius term is 1.
        assert!((g.eval(0.3f64, 25.0) - 1.0).abs() < 1e-12);
        assert!(g.eval(0.3f64, 45.0) > 1.0);
        assert!(g.eval(0.3f64, 5.0) < 1.0);

        // Negative polynomial values clamp to zero.
        let h = StressFactor {
            poly_first: vec![-1.0],
            poly_second: vec![1.0],
            arrhenius_activation_k: None,
        };
        assert_eq!(h.eval(0.5f64, 0.0), 0.0);
    }

    #[test]
    fn extrapolation_scale_one_matches_direct() {
        let trace: Vec<f64> = (0..2000)
            .map(|i| 0.5 + 0.3 * (i as f64 / 50.0).sin())
            .collect();
        let model = AgeingModel::constant(1.0e-4, 1.0e-4, 5.0e-4, 1.0e-5);
        let delta = extrapolate_day_samples(&trace, 365, &model, 25.0, 2.05, 0);
        let records = rainflow(&trace, 2.05);
        let direct = cycle_capacity_loss(&records, &model, 1.0);
        assert!((delta.cycle_cap_loss - direct).abs() < 1e-15);
    }

    #[test]
    fn extrapolation_constant_beta_closed_form() {
        let trace: Vec<f64> = (0..5000)
            .map(|i| 0.5 + 0.2 * (i as f64 / 33.0).sin())
            .collect();
        let beta = 4.0e-4;
        let model = AgeingModel::constant(0.0, 0.0, beta, 0.0);
        for n_days in [5usize, 10, 50] {
            let delta = extrapolate_day_samples(&trace, n_days, &model, 25.0, 2.05, 0);
            let q_tot = rainflow(&trace, 2.05).last().unwrap().q_cum_ah;
            let expected = beta * (365.0 / n_days as f64 * q_tot).sqrt();
            assert!(
                (delta.cycle_cap_loss - expected).abs() < 1e-12,
                "n_days={n_days}"
            );
        }
    }

    #[test]
    fn day_split_invariance_for_constant_beta() {
        // Assembling the same day samples in a different order must not
        // change the constant-beta loss. Each day starts and ends at 0.5 so
        // the concatenation is seamless either way.
        let bridge_day = |amplitude: f64| -> Vec<f64> {
            (0..=500)
                .map(|i| {
                    0.5 + amplitude * (2.0 * std::f64::consts::PI * i as f64 / 500.0).sin()
                })
                .collect()
        };
        let days: Vec<Vec<f64>> = [0.1, 0.2, 0.3, 0.4].map(bridge_day).to_vec();
        let model = AgeingModel::constant(0.0, 0.0, 3.0e-4, 0.0);
        let concat = |order: &[usize]| -> Vec<f64> {
            order.iter().flat_map(|&i| days[i].iter().copied()).collect()
        };
        let a = extrapolate_day_samples(&concat(&[0, 1, 2, 3]), 4, &model, 25.0, 2.05, 0);
        let b = extrapolate_day_samples(&concat(&[3, 1, 0, 2]), 4, &model, 25.0, 2.05, 0);
        let rel = ((a.cycle_cap_loss - b.cycle_cap_loss) / a.cycle_cap_loss).abs();
        assert!(rel < 1e-9, "relative split error {rel}");
        // And the closed form under constant beta.
        let records = rainflow(&concat(&[0, 1, 2, 3]), 2.05);
        let q_tot = records.last().unwrap().q_cum_ah;
        let expected = 3.0e-4 * (365.0f64 / 4.0 * q_tot).sqrt();
        assert!(((a.cycle_cap_loss - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn advance_year_cases() {
        let state = DegradationState::new(0.0334, 0.0114);
        let next = state.advance_year(0.0, 0.0).unwrap();
        assert_eq!(next.year_k, 1);
        assert_eq!(next.capacity_frac, 1.0);
        assert_eq!(next.r0, 0.0334);

        let mut s = DegradationState::new(0.0334, 0.0114);
        for _ in 0..10 {
            s = s.advance_year(0.02, 0.01).unwrap();
        }
        assert!((s.capacity_frac - 0.80).abs() < 1e-12);
        assert!(s.r0 > 0.0334 && s.r1 > 0.0114);

        assert!(state.advance_year(-0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn advance_year_is_monotone(losses in prop::collection::vec((0.0f64..0.05, 0.0f64..0.05), 1..20)) {
            let mut state = DegradationState::new(0.0334, 0.0114);
            for (cap_loss, res_growth) in losses {
                let next = state.advance_year(cap_loss, res_growth).unwrap();
                prop_assert!(next.capacity_frac <= state.capacity_frac);
                prop_assert!(next.r0 >= state.r0);
                prop_assert!(next.r1 >= state.r1);
                prop_assert_eq!(next.year_k, state.year_k + 1);
                state = next;
            }
        }
    }

    #[test]
    fn rainflow_works_in_f32() {
        let records = rainflow(&[0.5f32, 0.7, 0.5], 2.0f32);
        assert_eq!(records.len(), 2);
    }
}
