//! First-order RC equivalent-circuit model of a single Li-ion cell.
//!
//! The cell is an OCV source behind a series resistance `R0` and one parallel
//! RC branch `(R1, C1)`. Terminal voltage is
//! `V_bat = V_oc(SoC) + V_c1 + R0 * I` with `I > 0` charging.

use crate::error::{CoreError, Result};
use crate::scalar::{real, Real};

/// Electrical and thermal parameters of one battery cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams<F: Real = f64> {
    /// Nominal capacity in ampere-hours.
    pub capacity_ah: F,
    /// Series resistance in ohms.
    pub r0: F,
    /// Resistance of the parallel RC branch in ohms.
    pub r1: F,
    /// Capacitance of the parallel RC branch in farads.
    pub c1: F,
    /// Coulombic efficiency in `(0, 1]`.
    pub eta_coulomb: F,
    /// Nominal voltage in volts.
    pub v_nom: F,
    /// Terminal voltage at which charging stops, volts.
    pub v_cutoff_charge: F,
    /// Terminal voltage at which discharging stops, volts.
    pub v_cutoff_discharge: F,
    /// Heat capacity in joules per kelvin.
    pub heat_capacity_j_per_k: F,
    /// Rated energy content in watt-hours.
    pub e_rated_wh: F,
}

impl<F: Real> CellParams<F> {
    /// Shipped defaults: a 2.05 Ah NMC 18650 cell.
    ///
    /// The rated energy is fixed to `2.05 Ah x 3.6 V = 7.38 Wh`.
    pub fn default_nmc_18650() -> Self {
        Self {
            capacity_ah: real(2.05),
            r0: real(0.0334),
            r1: real(0.0114),
            c1: real(1867.0),
            eta_coulomb: real(0.99),
            v_nom: real(3.6),
            v_cutoff_charge: real(4.2),
            v_cutoff_discharge: real(2.75),
            heat_capacity_j_per_k: real(40.05),
            e_rated_wh: real(7.38),
        }
    }

    /// Check the structural invariants of the parameter set.
    pub fn validate(&self) -> Result<()> {
        let zero = F::zero();
        if self.r0 <= zero || self.r1 <= zero || self.c1 <= zero {
            return Err(CoreError::InvalidParams(
                "R0, R1 and C1 must be positive".into(),
            ));
        }
        if self.eta_coulomb <= zero || self.eta_coulomb > F::one() {
            return Err(CoreError::InvalidParams(
                "coulombic efficiency must lie in (0, 1]".into(),
            ));
        }
        if !(self.v_cutoff_discharge < self.v_nom && self.v_nom < self.v_cutoff_charge) {
            return Err(CoreError::InvalidParams(
                "cut-off voltages must bracket the nominal voltage".into(),
            ));
        }
        let product = self.capacity_ah * self.v_nom;
        let rel = ((self.e_rated_wh - product) / product).abs();
        if rel > real(0.005) {
            return Err(CoreError::InvalidParams(format!(
                "rated energy {} Wh deviates more than 0.5% from capacity x nominal voltage = {} Wh",
                self.e_rated_wh, product
            )));
        }
        Ok(())
    }
}

/// Instantaneous state of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState<F: Real = f64> {
    /// State of charge as a fraction in `[0, 1]`.
    pub soc: F,
    /// Voltage across the parallel RC branch, volts.
    pub v_c1: F,
    /// Cell temperature, degrees Celsius.
    pub temperature_c: F,
}

impl<F: Real> CellState<F> {
    /// Relaxed state at a given SoC and temperature.
    pub fn rested(soc: F, temperature_c: F) -> Self {
        Self {
            soc,
            v_c1: F::zero(),
            temperature_c,
        }
    }
}

/// Open-circuit voltage as a piecewise-linear function of SoC.
///
/// Knots must strictly increase in both coordinates and span `[0, 1]`, which
/// keeps the interpolant monotone (NMC chemistry has a monotone OCV).
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve<F: Real = f64> {
    points: Vec<(F, F)>,
}

impl<F: Real> OcvCurve<F> {
    /// Build a curve from `(soc, voltage)` knots, validating the invariants.
    pub fn new(points: Vec<(F, F)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(CoreError::InvalidParams(
                "OCV curve needs at least two knots".into(),
            ));
        }
        if points[0].0 != F::zero() || points[points.len() - 1].0 != F::one() {
            return Err(CoreError::InvalidParams(
                "OCV curve must cover SoC in [0, 1]".into(),
            ));
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(CoreError::InvalidParams(
                    "OCV knots must strictly increase in SoC".into(),
                ));
            }
            if pair[1].1 <= pair[0].1 {
                return Err(CoreError::InvalidParams(
                    "OCV must strictly increase with SoC".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    /// Shipped default curve with a generic NMC shape. The true curve of a
    /// specific cell should be loaded from a data file.
    pub fn default_nmc() -> Self {
        let knots = [
            (0.0, 3.00),
            (0.05, 3.30),
            (0.10, 3.45),
            (0.20, 3.55),
            (0.30, 3.60),
            (0.40, 3.65),
            (0.50, 3.70),
            (0.60, 3.77),
            (0.70, 3.85),
            (0.80, 3.95),
            (0.90, 4.05),
            (1.0, 4.20),
        ];
        Self::new(knots.iter().map(|&(s, v)| (real(s), real(v))).collect())
            .expect("builtin curve is valid")
    }

    /// Interpolation knots.
    pub fn points(&self) -> &[(F, F)] {
        &self.points
    }

    /// Piecewise-linear OCV lookup. Exact at knots, monotone in SoC.
    pub fn voltage(&self, soc: F) -> Result<F> {
        if soc < F::zero() || soc > F::one() || soc.is_nan() {
            return Err(CoreError::Domain(format!(
                "SoC {soc} outside [0, 1] in OCV lookup"
            )));
        }
        let pts = &self.points;
        // Binary search for the bracketing segment.
        let mut lo = 0usize;
        let mut hi = pts.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if pts[mid].0 <= soc {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (s0, v0) = pts[lo];
        let (s1, v1) = pts[hi];
        if soc == s0 {
            return Ok(v0);
        }
        if soc == s1 {
            return Ok(v1);
        }
        Ok(v0 + (v1 - v0) * (soc - s0) / (s1 - s0))
    }
}

/// Solve the per-cell current from the requested cell power.
///
/// Power balance at the terminals: `(V_oc + V_c1 + R0 * I) * I = p_cell`.
/// The physically meaningful root is
/// `I = (-(V_oc + V_c1) + sqrt((V_oc + V_c1)^2 + 4 R0 p_cell)) / (2 R0)`,
/// which has the sign of `p_cell` whenever `V_oc + V_c1 > 0`.
///
/// A negative discriminant means the requested discharge power exceeds the
/// cell capability; the caller must clip to the returned feasible maximum.
pub fn current_from_power<F: Real>(r0: F, v_oc: F, v_c1: F, p_cell: F) -> Result<F> {
    let v = v_oc + v_c1;
    if r0 == F::zero() {
        // Resistance-free limit: V * I = p.
        return Ok(p_cell / v);
    }
    let four = real::<F>(4.0);
    let disc = v * v + four * r0 * p_cell;
    if disc < F::zero() {
        let max_feasible = -(v * v) / (four * r0);
        return Err(CoreError::Capability {
            requested_w: p_cell.to_f64().unwrap_or(f64::NAN),
            max_feasible_w: max_feasible.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((-v + disc.sqrt()) / (real::<F>(2.0) * r0))
}

/// Most negative cell power the quadratic admits (the capability limit).
pub fn max_discharge_power<F: Real>(r0: F, v_oc: F, v_c1: F) -> F {
    let v = v_oc + v_c1;
    if r0 == F::zero() {
        return F::neg_infinity();
    }
    -(v * v) / (real::<F>(4.0) * r0)
}

/// Advance the parallel RC branch voltage by one step of length `dt` seconds.
///
/// Exact discretisation of `C1 dV/dt = I - V/R1`: exponential decay towards
/// the steady state `R1 * I`.
pub fn step_rc_branch<F: Real>(r1: F, c1: F, v_c1: F, i: F, dt_s: F) -> F {
    let decay = (-dt_s / (r1 * c1)).exp();
    v_c1 * decay + (F::one() - decay) * r1 * i
}

/// Outcome of one coulomb-counting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep<F: Real = f64> {
    pub soc: F,
    /// Set when the raw update left `[0, 1]` and was clipped. Repeated
    /// clipping signals a misconfigured controller.
    pub clipped: bool,
}

/// Coulomb counting with asymmetric efficiency.
///
/// Charging multiplies the current by the coulombic efficiency, discharging
/// divides by it. `capacity_ah` is the *degraded* capacity of the current
/// operational year.
pub fn step_soc<F: Real>(eta_coulomb: F, capacity_ah: F, soc: F, i: F, dt_s: F) -> SocStep<F> {
    let zero = F::zero();
    let capacity_as = capacity_ah * real(3600.0);
    let charge = i.max(zero) * eta_coulomb;
    let discharge = i.min(zero) / eta_coulomb;
    let raw = soc + (charge + discharge) * dt_s / capacity_as;
    if raw < zero {
        SocStep {
            soc: zero,
            clipped: true,
        }
    } else if raw > F::one() {
        SocStep {
            soc: F::one(),
            clipped: true,
        }
    } else {
        SocStep {
            soc: raw,
            clipped: false,
        }
    }
}

/// Result of a pulse-test least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct RcFit<F: Real = f64> {
    pub r0: F,
    pub r1: F,
    pub c1: F,
    /// Root of the mean squared voltage residual, volts.
    pub residual_rms: F,
}

/// Fit `(R0, R1, C1)` to a measured pulse-power test.
///
/// `current` and `voltage` are sampled every `dt_s` seconds; the SoC along
/// the pulse is reconstructed by coulomb counting from `initial_soc` so the
/// OCV contribution can be subtracted.
///
/// For a fixed branch time constant `tau = R1 * C1` the model response is
/// linear in `(R0, R1)`:
/// `V_t = V_oc(SoC_t) + R0 * I_t + R1 * w_t`, where `w` is the current
/// filtered through the branch dynamics. The fit therefore solves a 2x2
/// linear least squares in `(R0, R1)` inside a golden-section search on
/// `tau`.
pub fn fit_rc_from_pulse<F: Real>(
    params_hint: &CellParams<F>,
    curve: &OcvCurve<F>,
    dt_s: F,
    current: &[F],
    voltage: &[F],
    initial_soc: F,
) -> Result<RcFit<F>> {
    if current.len() != voltage.len() || current.len() < 4 {
        return Err(CoreError::Fit(
            "pulse must provide at least 4 aligned (current, voltage) samples".into(),
        ));
    }
    let first = current[0];
    if current.iter().all(|&i| i == first) {
        return Err(CoreError::Fit(
            "constant-current pulse cannot identify the RC parameters".into(),
        ));
    }

    // Reconstruct SoC and the OCV-free voltage residual target.
    let mut soc = initial_soc;
    let mut ocv = Vec::with_capacity(current.len());
    for &i in current {
        ocv.push(curve.voltage(soc)?);
        soc = step_soc(params_hint.eta_coulomb, params_hint.capacity_ah, soc, i, dt_s).soc;
    }

    let sse_for_tau = |tau: F| -> (F, F, F) {
        // Filtered current w_t with w_0 = 0 (relaxed start).
        let decay = (-dt_s / tau).exp();
        let mut w = F::zero();
        // Normal equations for residual = y - r0*i - r1*w.
        let (mut sii, mut siw, mut sww, mut siy, mut swy) =
            (F::zero(), F::zero(), F::zero(), F::zero(), F::zero());
        let mut syy = F::zero();
        for (idx, (&i, &v)) in current.iter().zip(voltage).enumerate() {
            let y = v - ocv[idx];
            sii = sii + i * i;
            siw = siw + i * w;
            sww = sww + w * w;
            siy = siy + i * y;
            swy = swy + w * y;
            syy = syy + y * y;
            w = w * decay + (F::one() - decay) * i;
        }
        let det = sii * sww - siw * siw;
        if det.abs() <= F::epsilon() * sii.max(sww) {
            return (F::infinity(), F::zero(), F::zero());
        }
        let r0 = (siy * sww - swy * siw) / det;
        let r1 = (swy * sii - siy * siw) / det;
        let sse = syy - r0 * siy - r1 * swy;
        (sse, r0, r1)
    };

    // Golden-section search on log(tau). Bracket: one sample step up to the
    // full pulse duration times ten.
    let n = real::<F>(current.len() as f64);
    let lo = (dt_s * real(0.2)).ln();
    let hi = (dt_s * n * real(10.0)).ln();
    let phi = real::<F>(0.618_033_988_749_894_9);
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = sse_for_tau(c.exp()).0;
    let mut fd = sse_for_tau(d.exp()).0;
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = sse_for_tau(c.exp()).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = sse_for_tau(d.exp()).0;
        }
        if (b - a).abs() < real(1e-12) {
            break;
        }
    }
    let tau = ((a + b) / real(2.0)).exp();
    let (sse, r0, r1) = sse_for_tau(tau);
    if !sse.is_finite() || r0 <= F::zero() || r1 <= F::zero() {
        return Err(CoreError::Fit(
            "pulse fit did not converge to positive resistances".into(),
        ));
    }
    Ok(RcFit {
        r0,
        r1,
        c1: tau / r1,
        residual_rms: (sse / n).max(F::zero()).sqrt(),
    })
}

/// A measured pulse-power test at uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseData {
    pub dt_s: f64,
    pub current_a: Vec<f64>,
    pub voltage_v: Vec<f64>,
}

/// Read a pulse test from a CSV with header `time_s,current_a,voltage_v`.
/// Timestamps must be uniformly spaced.
pub fn load_pulse_csv(path: &std::path::Path) -> Result<PulseData> {
    let data_err = |line: usize, message: String| CoreError::Data {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_err(0, e.to_string()))?;
    let mut times = Vec::new();
    let mut current = Vec::new();
    let mut voltage = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| data_err(line, e.to_string()))?;
        let parse = |field: usize, name: &str| -> Result<f64> {
            record
                .get(field)
                .ok_or_else(|| data_err(line, format!("missing {name}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| data_err(line, format!("bad {name}: {e}")))
        };
        times.push(parse(0, "time_s")?);
        current.push(parse(1, "current_a")?);
        voltage.push(parse(2, "voltage_v")?);
    }
    if times.len() < 2 {
        return Err(data_err(0, "pulse needs at least two samples".into()));
    }
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(data_err(3, "time must strictly increase".into()));
    }
    for (i, pair) in times.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - dt).abs() > 1e-9 {
            return Err(data_err(
                i + 3,
                format!("non-uniform time step: {} vs {dt}", pair[1] - pair[0]),
            ));
        }
    }
    Ok(PulseData {
        dt_s: dt,
        current_a: current,
        voltage_v: voltage,
    })
}

/// Read an OCV curve from a two-column CSV (`soc`, `voltage_v`) with a header
/// row, UTF-8 and dot decimal separator.
pub fn load_ocv_csv(path: &std::path::Path) -> Result<OcvCurve<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CoreError::Data {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut points = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| CoreError::Data {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        let parse = |field: usize| -> Result<f64> {
            record
                .get(field)
                .ok_or_else(|| CoreError::Data {
                    path: path.display().to_string(),
                    line,
                    message: format!("missing column {field}"),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| CoreError::Data {
                    path: path.display().to_string(),
                    line,
                    message: e.to_string(),
                })
        };
        points.push((parse(0)?, parse(1)?));
    }
    OcvCurve::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ocv_exact_at_knots_and_linear_between() {
        let curve = OcvCurve::<f64>::new(vec![(0.0, 3.0), (1.0, 4.2)]).unwrap();
        assert_eq!(curve.voltage(0.0).unwrap(), 3.0);
        assert_eq!(curve.voltage(1.0).unwrap(), 4.2);
        assert!((curve.voltage(0.5).unwrap() - 3.6).abs() < 1e-12);
    }

    #[test]
    fn ocv_monotone_and_domain_checked() {
        let curve = OcvCurve::<f64>::default_nmc();
        let mut prev = curve.voltage(0.0).unwrap();
        for k in 1..=1000 {
            let soc = k as f64 / 1000.0;
            let v = curve.voltage(soc).unwrap();
            assert!(v >= prev, "OCV must be monotone");
            prev = v;
        }
        assert!(curve.voltage(-0.01).is_err());
        assert!(curve.voltage(1.01).is_err());
    }

    #[test]
    fn ocv_rejects_bad_curves() {
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.5, 2.9), (1.0, 4.2)]).is_err());
        assert!(OcvCurve::new(vec![(0.1, 3.0), (1.0, 4.2)]).is_err());
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.0, 3.1), (1.0, 4.2)]).is_err());
    }

    #[test]
    fn current_zero_power_is_zero() {
        let i = current_from_power(0.0334f64, 3.6, 0.0, 0.0).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn current_matches_bisection_oracle() {
        // Independent route: solve (V + R0 I) I = p by bisection on I.
        let (r0, v, p) = (0.0334, 3.6, 7.2);
        let f = |i: f64| (v + r0 * i) * i - p;
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let i = current_from_power(r0, v, 0.0, p).unwrap();
        assert!((i - oracle).abs() < 1e-9, "i={i} oracle={oracle}");
        assert!((i - 1.963).abs() < 2e-3);
    }

    #[test]
    fn current_power_identity_randomised() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let curve = OcvCurve::<f64>::default_nmc();
        for _ in 0..10_000 {
            let soc: f64 = rng.random_range(0.0..=1.0);
            let v_c1: f64 = rng.random_range(-0.1..0.1);
            let v_oc = curve.voltage(soc).unwrap();
            let p_max_dischg = max_discharge_power(0.0334, v_oc, v_c1);
            let p: f64 = rng.random_range((0.9 * p_max_dischg)..20.0);
            let i = current_from_power(0.0334, v_oc, v_c1, p).unwrap();
            let back = (v_oc + v_c1 + 0.0334 * i) * i;
            let scale = p.abs().max(1e-6);
            assert!(((back - p) / scale).abs() < 1e-9, "p={p} back={back}");
        }
    }

    #[test]
    fn current_sign_matches_power_sign() {
        let v = 3.6;
        assert!(current_from_power(0.0334f64, v, 0.0, 5.0).unwrap() > 0.0);
        assert!(current_from_power(0.0334f64, v, 0.0, -5.0).unwrap() < 0.0);
    }

    #[test]
    fn current_infeasible_discharge_errors() {
        let v: f64 = 3.6;
        let limit = -(v * v) / (4.0 * 0.0334);
        let err = current_from_power(0.0334, v, 0.0, limit * 1.01).unwrap_err();
        match err {
            CoreError::Capability { max_feasible_w, .. } => {
                assert!((max_feasible_w - limit).abs() < 1e-9);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rc_branch_equilibrium_and_limit() {
        assert_eq!(step_rc_branch(0.0114f64, 1867.0, 0.0, 0.0, 10.0), 0.0);
        // dt -> infinity drives V_c1 to R1 * I.
        let v = step_rc_branch(0.0114f64, 1867.0, 0.3, 2.0, 1e9);
        assert!((v - 0.0114 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn rc_branch_matches_fine_ode_integration() {
        // Independent oracle: RK4 on C1 dV/dt = I - V/R1 with tiny steps.
        let (r1, c1, i, dt) = (0.0114, 1867.0, 2.0, 10.0);
        let deriv = |v: f64| (i - v / r1) / c1;
        let mut v = 0.0f64;
        let h = 1e-4;
        let steps = (dt / h) as usize;
        for _ in 0..steps {
            let k1 = deriv(v);
            let k2 = deriv(v + 0.5 * h * k1);
            let k3 = deriv(v + 0.5 * h * k2);
            let k4 = deriv(v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let stepped = step_rc_branch(r1, c1, 0.0, i, dt);
        assert!((stepped - v).abs() < 1e-9, "stepped={stepped} rk4={v}");
        assert!((stepped - 0.00852).abs() < 5e-5);
    }

    #[test]
    fn rc_branch_is_a_contraction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let v0: f64 = rng.random_range(-1.0..1.0);
            let i: f64 = rng.random_range(-5.0..5.0);
            let dt: f64 = rng.random_range(0.001..100.0);
            let target = 0.0114 * i;
            let v1 = step_rc_branch(0.0114, 1867.0, v0, i, dt);
            if (v0 - target).abs() > 1e-12 {
                assert!((v1 - target).abs() < (v0 - target).abs());
            }
        }
    }

    #[test]
    fn soc_step_cases() {
        // No current: unchanged.
        let s = step_soc(0.99f64, 2.05, 0.5, 0.0, 3600.0);
        assert_eq!(s.soc, 0.5);
        assert!(!s.clipped);
        // One-hour full charge clips exactly at 1.0.
        let s = step_soc(0.99f64, 2.05, 0.5, 2.05, 3600.0);
        assert_eq!(s.soc, 1.0);
        assert!(s.clipped);
        // Unclipped arithmetic: eta * I * dt / (C * 3600).
        let s = step_soc(0.99f64, 2.05, 0.2, 2.05, 1800.0);
        assert!((s.soc - (0.2 + 0.99 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn soc_round_trip_loses_charge() {
        let eta = 0.99f64;
        let up = step_soc(eta, 2.05, 0.5, 1.0, 600.0).soc;
        let down = step_soc(eta, 2.05, up, -1.0, 600.0).soc;
        let expected_loss = (1.0 / eta - eta) * 1.0 * 600.0 / (2.05 * 3600.0);
        assert!(down < 0.5);
        assert!(((0.5 - down) - expected_loss).abs() < 1e-12);
    }

    #[test]
    fn default_params_validate() {
        let p = CellParams::<f64>::default_nmc_18650();
        p.validate().unwrap();
        assert_eq!(p.r0, 0.0334);
        assert_eq!(p.r1, 0.0114);
        assert_eq!(p.c1, 1867.0);
        assert!((p.e_rated_wh - 7.38).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = CellParams::<f64>::default_nmc_18650();
        p.e_rated_wh = 7.0;
        assert!(p.validate().is_err());
        let mut p = CellParams::<f64>::default_nmc_18650();
        p.eta_coulomb = 1.2;
        assert!(p.validate().is_err());
    }

    fn synth_pulse(
        params: &CellParams<f64>,
        curve: &OcvCurve<f64>,
        dt: f64,
        noise_mv: f64,
        seed: u64,
    ) -> (Vec<f64>, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Discharge pulse, rest, charge pulse, rest.
        let profile: Vec<f64> = std::iter::repeat_n(-2.0, 60)
            .chain(std::iter::repeat_n(0.0, 120))
            .chain(std::iter::repeat_n(2.0, 60))
            .chain(std::iter::repeat_n(0.0, 120))
            .collect();
        let mut soc = 0.6;
        let mut v_c1 = 0.0;
        let mut voltage = Vec::with_capacity(profile.len());
        for &i in &profile {
            let v_oc = curve.voltage(soc).unwrap();
            let noise = if noise_mv > 0.0 {
                // Box-Muller keeps the dev-dependency surface small.
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                noise_mv * 1e-3
                    * (-2.0 * u1.ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * u2).cos()
            } else {
                0.0
            };
            voltage.push(v_oc + v_c1 + params.r0 * i + noise);
            v_c1 = step_rc_branch(params.r1, params.c1, v_c1, i, dt);
            soc = step_soc(params.eta_coulomb, params.capacity_ah, soc, i, dt).soc;
        }
        (profile, voltage)
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let params = CellParams::<f64>::default_nmc_18650();
        let curve = OcvCurve::default_nmc();
        let (current, voltage) = synth_pulse(&params, &curve, 1.0, 0.0, 0);
        let fit = fit_rc_from_pulse(&params, &curve, 1.0, &current, &voltage, 0.6).unwrap();
        assert!((fit.r0 / params.r0 - 1.0).abs() < 1e-3, "r0 {}", fit.r0);
        assert!((fit.r1 / params.r1 - 1.0).abs() < 1e-3, "r1 {}", fit.r1);
        assert!((fit.c1 / params.c1 - 1.0).abs() < 1e-3, "c1 {}", fit.c1);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn fit_with_noise_stays_within_five_percent() {
        let params = CellParams::<f64>::default_nmc_18650();
        let curve = OcvCurve::default_nmc();
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let (current, voltage) = synth_pulse(&params, &curve, 1.0, 1.0, seed);
            let fit = fit_rc_from_pulse(&params, &curve, 1.0, &current, &voltage, 0.6).unwrap();
            worst = worst
                .max((fit.r0 / params.r0 - 1.0).abs())
                .max((fit.r1 / params.r1 - 1.0).abs());
        }
        assert!(worst < 0.05, "worst relative error {worst}");
    }

    #[test]
    fn fit_rejects_constant_current() {
        let params = CellParams::<f64>::default_nmc_18650();
        let curve = OcvCurve::default_nmc();
        let current = vec![1.0; 100];
        let voltage = vec![3.7; 100];
        assert!(matches!(
            fit_rc_from_pulse(&params, &curve, 1.0, &current, &voltage, 0.5),
            Err(CoreError::Fit(_))
        ));
    }

    #[test]
    fn pulse_csv_round_trips_into_the_fit() {
        let params = CellParams::<f64>::default_nmc_18650();
        let curve = OcvCurve::default_nmc();
        let (current, voltage) = synth_pulse(&params, &curve, 1.0, 0.0, 0);
        let dir = std::env::temp_dir().join(format!("bess-pulse-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pulse.csv");
        let mut text = String::from("time_s,current_a,voltage_v\n");
        for (i, (c, v)) in current.iter().zip(&voltage).enumerate() {
            text.push_str(&format!("{i},{c},{v}\n"));
        }
        std::fs::write(&path, text).unwrap();
        let pulse = load_pulse_csv(&path).unwrap();
        assert_eq!(pulse.dt_s, 1.0);
        let fit = fit_rc_from_pulse(
            &params,
            &curve,
            pulse.dt_s,
            &pulse.current_a,
            &pulse.voltage_v,
            0.6,
        )
        .unwrap();
        assert!((fit.r0 / params.r0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernels_compile_in_f32() {
        let curve: OcvCurve<f32> = OcvCurve::new(vec![(0.0, 3.0), (1.0, 4.2)]).unwrap();
        assert!((curve.voltage(0.5).unwrap() - 3.6).abs() < 1e-6);
        let s = step_soc(0.99f32, 2.05, 0.5, 0.0, 10.0);
        assert_eq!(s.soc, 0.5);
    }
}
