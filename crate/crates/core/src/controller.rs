//! FCR delivery rule, discretised deadband recharge controller, opportunistic
//! overdelivery, emergency-state detection and the 30-min-criterion penalty
//! metric, all per the German market rules.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::{real, Real};

/// Decision vector of the recharge controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams<F: Real = f64> {
    /// Proportional gain of the recharge law (dimensionless, applied to the
    /// SoC error and scaled by the pack power rating).
    pub k_p: F,
    /// SoC setpoint the controller recharges towards.
    pub soc_0: F,
    /// Overdelivery fraction in `[0, 0.2]` (German limit).
    pub o_d: F,
    /// Total width of the SoC deadband, centred on `soc_0`.
    pub db_p: F,
}

impl<F: Real> ControllerParams<F> {
    pub fn validate(&self) -> Result<()> {
        let zero = F::zero();
        if self.k_p < zero {
            return Err(CoreError::InvalidParams("k_p must be >= 0".into()));
        }
        if self.soc_0 <= zero || self.soc_0 >= F::one() {
            return Err(CoreError::InvalidParams("soc_0 must lie in (0, 1)".into()));
        }
        if self.o_d < zero || self.o_d > real(0.2) {
            return Err(CoreError::InvalidParams(
                "overdelivery is limited to [0, 0.2] in the German market".into(),
            ));
        }
        if self.db_p < zero {
            return Err(CoreError::InvalidParams("db_p must be >= 0".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [F; 4] {
        [self.k_p, self.soc_0, self.o_d, self.db_p]
    }

    pub fn from_array(x: [F; 4]) -> Self {
        Self {
            k_p: x[0],
            soc_0: x[1],
            o_d: x[2],
            db_p: x[3],
        }
    }
}

/// Market timing and granularity rules for FCR delivery with recharge
/// settled on the intraday market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketRules<F: Real = f64> {
    /// Contracted FCR capacity, watts.
    pub r_w: F,
    /// Frequency deviation at which the full capacity is active, hertz.
    pub delta_f_max_hz: F,
    /// Deadband inside which no delivery is required, hertz.
    pub deadband_f_hz: F,
    /// Recharge power block length, seconds (intraday trading blocks).
    pub t_recharge_s: F,
    /// Lead time for deciding a block's recharge power, seconds.
    pub t_lead_s: F,
    /// Recharge power granularity, watts (intraday market granularity).
    pub rech_granularity_w: F,
    /// Maximum recharge power, watts.
    pub p_rech_max_w: F,
}

impl<F: Real> MarketRules<F> {
    /// German market defaults for a reserve of `r_w` on a pack rated
    /// `p_max_w`: 200 mHz full activation, 10 mHz deadband, 15-min blocks
    /// decided 5 min ahead in 100 kW steps, recharge capped at the power
    /// headroom above the reserve.
    pub fn german(r_w: F, p_max_w: F) -> Self {
        Self {
            r_w,
            delta_f_max_hz: real(0.2),
            deadband_f_hz: real(0.01),
            t_recharge_s: real(900.0),
            t_lead_s: real(300.0),
            rech_granularity_w: real(100_000.0),
            p_rech_max_w: (p_max_w - r_w).max(F::zero()),
        }
    }

    /// Validate against the pack power rating: the reserve may use at most
    /// 80% of the rating, recharge must fit in the remaining headroom and
    /// still cover a quarter of the reserve.
    pub fn validate(&self, p_max_w: F) -> Result<()> {
        if self.r_w > real::<F>(0.80) * p_max_w {
            return Err(CoreError::InvalidParams(format!(
                "reserve {} W exceeds 80% of the pack rating {} W",
                self.r_w, p_max_w
            )));
        }
        if self.p_rech_max_w > p_max_w - self.r_w {
            return Err(CoreError::InvalidParams(
                "maximum recharge power exceeds the headroom above the reserve".into(),
            ));
        }
        if self.p_rech_max_w < real::<F>(0.25) * self.r_w {
            return Err(CoreError::InvalidParams(format!(
                "maximum recharge power {} W is below a quarter of the reserve {} W",
                self.p_rech_max_w, self.r_w
            )));
        }
        Ok(())
    }
}

/// Normalised frequency deviation after deadband and saturation: zero inside
/// the deadband, `clamp(delta_f / delta_f_max, -1, 1)` outside.
pub fn delta_f_normalised<F: Real>(rules: &MarketRules<F>, delta_f_hz: F) -> F {
    if delta_f_hz.abs() <= rules.deadband_f_hz {
        return F::zero();
    }
    (delta_f_hz / rules.delta_f_max_hz)
        .max(-F::one())
        .min(F::one())
}

/// FCR delivery: proportional response saturated at the reserve capacity.
/// Positive output consumes from the grid (over-frequency), negative injects.
pub fn fcr_power<F: Real>(rules: &MarketRules<F>, delta_f_hz: F) -> F {
    rules.r_w * delta_f_normalised(rules, delta_f_hz)
}

/// Recharge setpoint for a 15-min block given the SoC sampled at the block's
/// decision time.
///
/// Dead-banded proportional law scaled to pack power, truncated towards zero
/// onto the market granularity and clipped to the admissible recharge range.
pub fn recharge_setpoint<F: Real>(
    params: &ControllerParams<F>,
    rules: &MarketRules<F>,
    p_max_bess_w: F,
    soc_at_decision: F,
) -> F {
    let err = soc_at_decision - params.soc_0;
    let half_band = params.db_p / real(2.0);
    if err.abs() <= half_band {
        return F::zero();
    }
    let shifted = err - half_band * err.signum();
    let raw_w = -params.k_p * shifted * p_max_bess_w;
    // Truncate towards zero: never schedule more than the proportional law asks.
    let quantised = (raw_w / rules.rech_granularity_w).trunc() * rules.rech_granularity_w;
    quantised.max(-rules.p_rech_max_w).min(rules.p_rech_max_w)
}

/// Opportunistic overdelivery: a fraction `o_d` of the FCR response, granted
/// only when the extra delivery moves the SoC towards the setpoint. An SoC
/// exactly at the setpoint blocks overdelivery.
pub fn overdelivery_power<F: Real>(
    params: &ControllerParams<F>,
    rules: &MarketRules<F>,
    delta_f_hz: F,
    soc: F,
) -> F {
    let df = delta_f_normalised(rules, delta_f_hz);
    let err = soc - params.soc_0;
    if err == F::zero() || df == F::zero() {
        return F::zero();
    }
    if (err > F::zero()) == (df < F::zero()) {
        params.o_d * rules.r_w * df
    } else {
        F::zero()
    }
}

/// Grid power assembled from the three components, clipped to the pack
/// rating. FCR has absolute priority: when the sum exceeds the rating,
/// overdelivery is reduced first, then recharge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPowerSplit<F: Real = f64> {
    pub p_grid: F,
    pub p_fcr: F,
    pub p_rech: F,
    pub p_od: F,
}

pub fn grid_power<F: Real>(
    p_fcr: F,
    block_rech: F,
    p_od: F,
    p_max_bess_w: F,
) -> GridPowerSplit<F> {
    let mut rech = block_rech;
    let mut od = p_od;
    let total = p_fcr + rech + od;
    let clipped = total.max(-p_max_bess_w).min(p_max_bess_w);
    let mut excess = total - clipped;
    if excess != F::zero() {
        // Shed components whose sign matches the excess, overdelivery first.
        for part in [&mut od, &mut rech] {
            if excess == F::zero() {
                break;
            }
            if (*part > F::zero()) == (excess > F::zero()) && *part != F::zero() {
                let shed = if excess.abs() <= part.abs() {
                    excess
                } else {
                    *part
                };
                *part = *part - shed;
                excess = excess - shed;
            }
        }
    }
    GridPowerSplit {
        p_grid: p_fcr + rech + od,
        p_fcr,
        p_rech: rech,
        p_od: od,
    }
}

/// Streaming detector of the German emergency states: `|df| > 200 mHz`
/// instantaneously, `|df| > 100 mHz` for longer than 5 min, or
/// `|df| > 50 mHz` for longer than 15 min.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmergencyDetector<F: Real = f64> {
    above_100_mhz_s: F,
    above_50_mhz_s: F,
}

impl<F: Real> EmergencyDetector<F> {
    pub fn new() -> Self {
        Self {
            above_100_mhz_s: F::zero(),
            above_50_mhz_s: F::zero(),
        }
    }

    /// Feed one sample of length `dt_s`; returns whether the grid is in an
    /// emergency state at this step.
    pub fn update(&mut self, delta_f_hz: F, dt_s: F) -> bool {
        let mag = delta_f_hz.abs();
        if mag > real(0.1) {
            self.above_100_mhz_s = self.above_100_mhz_s + dt_s;
        } else {
            self.above_100_mhz_s = F::zero();
        }
        if mag > real(0.05) {
            self.above_50_mhz_s = self.above_50_mhz_s + dt_s;
        } else {
            self.above_50_mhz_s = F::zero();
        }
        mag > real(0.2)
            || self.above_100_mhz_s > real(300.0)
            || self.above_50_mhz_s > real(900.0)
    }
}

/// Emergency flags for a whole deviation trace (true = emergency).
pub fn emergency_trace<F: Real>(delta_f_hz: &[F], dt_s: F) -> Vec<bool> {
    let mut detector = EmergencyDetector::new();
    delta_f_hz
        .iter()
        .map(|&df| detector.update(df, dt_s))
        .collect()
}

/// SoC bounds derived from the prequalification test for one operational
/// year: outside `[soc_min, soc_max]` the 30-min criterion is violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBounds<F: Real = f64> {
    pub soc_min: F,
    pub soc_max: F,
}

impl<F: Real> PenaltyBounds<F> {
    pub fn validate(&self) -> Result<()> {
        if !(F::zero() <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= F::one())
        {
            return Err(CoreError::InvalidParams(format!(
                "penalty bounds [{}, {}] must satisfy 0 <= min < max <= 1",
                self.soc_min, self.soc_max
            )));
        }
        Ok(())
    }
}

/// Fraction of non-emergency timesteps with the SoC outside the 30-min
/// bounds. Violations during emergency states are forgiven.
pub fn penalty_metric<F: Real>(
    soc_trace: &[F],
    bounds: &PenaltyBounds<F>,
    emergency: &[bool],
) -> F {
    assert_eq!(
        soc_trace.len(),
        emergency.len(),
        "SoC and emergency traces must be aligned"
    );
    if soc_trace.is_empty() {
        return F::zero();
    }
    let mut violations = 0usize;
    for (&soc, &emerg) in soc_trace.iter().zip(emergency) {
        if !emerg && (soc > bounds.soc_max || soc < bounds.soc_min) {
            violations += 1;
        }
    }
    real::<F>(violations as f64) / real(soc_trace.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rules_1mw() -> MarketRules<f64> {
        MarketRules::german(1.0e6, 1.6e6)
    }

    fn fig7_params() -> ControllerParams<f64> {
        ControllerParams {
            k_p: 2.0,
            soc_0: 0.45,
            o_d: 0.1,
            db_p: 0.2,
        }
    }

    #[test]
    fn fcr_zero_inside_deadband() {
        let rules = rules_1mw();
        assert_eq!(fcr_power(&rules, 0.0), 0.0);
        assert_eq!(fcr_power(&rules, 0.005), 0.0);
        assert_eq!(fcr_power(&rules, -0.009), 0.0);
    }

    #[test]
    fn fcr_full_activation_and_saturation() {
        let rules = rules_1mw();
        assert!((fcr_power(&rules, -0.2) + 1.0e6).abs() < 1e-6);
        assert!((fcr_power(&rules, 0.2) - 1.0e6).abs() < 1e-6);
        assert!((fcr_power(&rules, -0.35) + 1.0e6).abs() < 1e-6);
        assert!((fcr_power(&rules, 0.1) - 0.5e6).abs() < 1e-6);
    }

    #[test]
    fn recharge_zero_inside_band() {
        let rules = rules_1mw();
        let params = fig7_params();
        for soc in [0.45, 0.36, 0.54, 0.35, 0.55] {
            assert_eq!(recharge_setpoint(&params, &rules, 1.6e6, soc), 0.0);
        }
    }

    #[test]
    fn recharge_staircase_truncates_towards_zero() {
        let rules = rules_1mw();
        let params = fig7_params();
        let p_max = 1.6e6;
        // soc above the band: raw = -k_p (err - db/2) p_max.
        // err = 0.55 + x; raw = -2 * x * 1.6e6.
        // raw magnitude 50 kW -> 0.
        let soc = 0.55 + 50.0e3 / (2.0 * p_max);
        assert_eq!(recharge_setpoint(&params, &rules, p_max, soc), 0.0);
        // raw magnitude 150 kW -> 100 kW.
        let soc = 0.55 + 150.0e3 / (2.0 * p_max);
        assert_eq!(recharge_setpoint(&params, &rules, p_max, soc), -100.0e3);
        // Same below the band, positive recharge.
        let soc = 0.35 - 150.0e3 / (2.0 * p_max);
        assert_eq!(recharge_setpoint(&params, &rules, p_max, soc), 100.0e3);
        // Exactly 200 kW raw stays 200 kW.
        let soc = 0.55 + 200.0e3 / (2.0 * p_max);
        assert_eq!(recharge_setpoint(&params, &rules, p_max, soc), -200.0e3);
    }

    #[test]
    fn recharge_clips_to_headroom() {
        let rules = rules_1mw();
        let params = fig7_params();
        // Deep SoC deficit asks for more than p_max - r = 600 kW.
        let p = recharge_setpoint(&params, &rules, 1.6e6, 0.01);
        assert_eq!(p, 600.0e3);
        let p = recharge_setpoint(&params, &rules, 1.6e6, 0.99);
        assert_eq!(p, -600.0e3);
    }

    proptest! {
        #[test]
        fn recharge_is_always_a_granularity_multiple(soc in 0.0f64..1.0) {
            let rules = rules_1mw();
            let params = fig7_params();
            let p = recharge_setpoint(&params, &rules, 1.6e6, soc);
            let steps = p / 100.0e3;
            prop_assert!((steps - steps.round()).abs() < 1e-9);
            prop_assert!(p.abs() <= rules.p_rech_max_w);
        }
    }

    #[test]
    fn overdelivery_sign_logic() {
        let rules = rules_1mw();
        let params = fig7_params();
        // At the setpoint: blocked.
        assert_eq!(overdelivery_power(&params, &rules, -0.1, 0.45), 0.0);
        // Above the setpoint with under-frequency: injection helps, granted.
        let p = overdelivery_power(&params, &rules, -0.1, 0.6);
        assert!((p - 0.1 * 1.0e6 * (-0.5)).abs() < 1e-6);
        // Above the setpoint with over-frequency: would charge, blocked.
        assert_eq!(overdelivery_power(&params, &rules, 0.1, 0.6), 0.0);
        // Below the setpoint with over-frequency: charging helps, granted.
        let p = overdelivery_power(&params, &rules, 0.1, 0.3);
        assert!((p - 0.1 * 1.0e6 * 0.5).abs() < 1e-6);
        // o_d = 0 disables it.
        let mut params0 = params;
        params0.o_d = 0.0;
        assert_eq!(overdelivery_power(&params0, &rules, -0.1, 0.6), 0.0);
        // Deadband applies to the overdelivery base as well.
        assert_eq!(overdelivery_power(&params, &rules, 0.005, 0.3), 0.0);
    }

    #[test]
    fn grid_power_zero_and_sum() {
        let split = grid_power(0.0f64, 0.0, 0.0, 1.6e6);
        assert_eq!(split.p_grid, 0.0);
        let split = grid_power(-0.5e6f64, 0.2e6, -0.05e6, 1.6e6);
        assert!((split.p_grid - (-0.35e6)).abs() < 1e-6);
        assert_eq!(split.p_rech, 0.2e6);
        assert_eq!(split.p_od, -0.05e6);
    }

    #[test]
    fn grid_power_sheds_overdelivery_before_recharge() {
        // fcr -1.0 MW, rech -0.4 MW, od -0.1 MW on a 1.25 MW pack:
        // total -1.5 MW, excess -0.25 MW. od (-0.1) zeroed, rech loses 0.15.
        let split = grid_power(-1.0e6f64, -0.4e6, -0.1e6, 1.25e6);
        assert!((split.p_grid + 1.25e6).abs() < 1e-6);
        assert_eq!(split.p_od, 0.0);
        assert!((split.p_rech + 0.25e6).abs() < 1e-6);
        assert_eq!(split.p_fcr, -1.0e6);
    }

    #[test]
    fn grid_power_keeps_opposite_sign_components() {
        // Recharge opposes the FCR direction: reducing it would not help,
        // and the total is already inside the rating.
        let split = grid_power(-1.0e6f64, 0.6e6, 0.0, 1.25e6);
        assert!((split.p_grid + 0.4e6).abs() < 1e-6);
        assert_eq!(split.p_rech, 0.6e6);
    }

    proptest! {
        #[test]
        fn grid_power_respects_rating(
            fcr in -1.0e6f64..1.0e6,
            rech in -0.6e6f64..0.6e6,
            od in -0.2e6f64..0.2e6,
        ) {
            let split = grid_power(fcr, rech, od, 1.6e6);
            prop_assert!(split.p_grid.abs() <= 1.6e6 + 1e-6);
            prop_assert!((split.p_grid - (split.p_fcr + split.p_rech + split.p_od)).abs() < 1e-6);
            // Shedding never flips a component's sign.
            prop_assert!(split.p_od * od >= 0.0);
            prop_assert!(split.p_rech * rech >= 0.0);
        }
    }

    #[test]
    fn emergency_instantaneous_threshold() {
        let mut det = EmergencyDetector::new();
        assert!(det.update(0.21, 10.0));
        assert!(!det.update(0.2, 10.0), "exactly 200 mHz is not an emergency");
    }

    #[test]
    fn emergency_sustained_100_mhz() {
        let mut det = EmergencyDetector::new();
        let mut fired_at = None;
        for step in 1..=301 {
            if det.update(0.12, 1.0) {
                fired_at = Some(step);
                break;
            }
        }
        assert_eq!(fired_at, Some(301), "fires once duration exceeds 300 s");

        // Interruption resets the duration.
        let mut det = EmergencyDetector::new();
        for _ in 0..200 {
            assert!(!det.update(0.12, 1.0));
        }
        assert!(!det.update(0.05, 1.0));
        for _ in 0..300 {
            assert!(!det.update(0.12, 1.0));
        }
    }

    #[test]
    fn emergency_sustained_50_mhz_and_below() {
        let mut det = EmergencyDetector::new();
        let mut fired = false;
        for _ in 0..2000 {
            fired |= det.update(0.06, 1.0);
        }
        assert!(fired, "60 mHz sustained beyond 15 min is an emergency");

        let mut det = EmergencyDetector::new();
        for _ in 0..100_000 {
            assert!(!det.update(0.04, 10.0), "40 mHz never triggers");
        }
    }

    #[test]
    fn penalty_metric_cases() {
        let bounds = PenaltyBounds {
            soc_min: 0.2,
            soc_max: 0.8,
        };
        bounds.validate().unwrap();

        let soc = vec![0.5; 100];
        let emergency = vec![false; 100];
        assert_eq!(penalty_metric(&soc, &bounds, &emergency), 0.0);

        // Violations only during emergencies are forgiven.
        let mut soc = vec![0.5; 100];
        let mut emergency = vec![false; 100];
        for i in 40..50 {
            soc[i] = 0.9;
            emergency[i] = true;
        }
        assert_eq!(penalty_metric(&soc, &bounds, &emergency), 0.0);

        // 10 of 8640 non-emergency steps out of bounds.
        let mut soc = vec![0.5; 8640];
        for value in soc.iter_mut().take(10) {
            *value = 0.05;
        }
        let emergency = vec![false; 8640];
        let p: f64 = penalty_metric(&soc, &bounds, &emergency);
        assert!((p - 10.0 / 8640.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_metric_monotone_in_band_width() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let soc: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let emergency = vec![false; 500];
        let narrow = PenaltyBounds {
            soc_min: 0.4,
            soc_max: 0.6,
        };
        let wide = PenaltyBounds {
            soc_min: 0.3,
            soc_max: 0.7,
        };
        assert!(
            penalty_metric(&soc, &wide, &emergency)
                <= penalty_metric(&soc, &narrow, &emergency)
        );
    }

    #[test]
    fn wide_deadband_reduces_to_pure_fcr() {
        // With overdelivery off and a deadband covering the whole SoC range
        // the grid power is the saturated FCR response alone.
        let rules = rules_1mw();
        let params = ControllerParams {
            k_p: 5.0,
            soc_0: 0.5,
            o_d: 0.0,
            db_p: 2.0,
        };
        for soc in [0.05, 0.3, 0.5, 0.95] {
            for df in [-0.3, -0.1, -0.005, 0.0, 0.02, 0.25] {
                let rech = recharge_setpoint(&params, &rules, 1.6e6, soc);
                let od = overdelivery_power(&params, &rules, df, soc);
                assert_eq!(rech, 0.0);
                assert_eq!(od, 0.0);
                let split = grid_power(fcr_power(&rules, df), rech, od, 1.6e6);
                assert_eq!(split.p_grid, fcr_power(&rules, df));
            }
        }
    }

    #[test]
    fn rules_validation() {
        let rules = MarketRules::german(1.0e6, 1.6e6);
        rules.validate(1.6e6).unwrap();
        // Reserve above 80% of the rating.
        let rules = MarketRules::german(1.0e6, 1.2e6);
        assert!(rules.validate(1.2e6).is_err());
        // Headroom below a quarter of the reserve.
        let rules = MarketRules::german(1.0e6, 1.2e6 + 1.0);
        assert!(rules.validate(1.2e6 + 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        fig7_params().validate().unwrap();
        let mut p = fig7_params();
        p.o_d = 0.25;
        assert!(p.validate().is_err());
        let mut p = fig7_params();
        p.soc_0 = 0.0;
        assert!(p.validate().is_err());
    }
}
