//! Assembly of battery cells, inverter and HVAC into the full pack dynamics,
//! constant-power characterisation and the German prequalification discharge
//! test.
//!
//! Sign conventions: grid power is positive when consuming from the grid,
//! battery power is positive when charging the cells. All cells are assumed
//! perfectly balanced, so one average cell is simulated and scaled by the
//! cell count.

use crate::cell::{
    current_from_power, max_discharge_power, step_rc_branch, step_soc, CellParams, CellState,
    OcvCurve,
};
use crate::controller::PenaltyBounds;
use crate::degradation::DegradationState;
use crate::error::{CoreError, Result};
use crate::scalar::{real, Real};

/// One-way inverter efficiency as a piecewise-linear function of the power
/// fraction `|p| / p_rated`. The same curve applies to consumption and
/// injection.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterCurve<F: Real = f64> {
    points: Vec<(F, F)>,
}

impl<F: Real> InverterCurve<F> {
    pub fn new(points: Vec<(F, F)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(CoreError::InvalidParams(
                "inverter curve needs at least two knots".into(),
            ));
        }
        if points[0].0 != F::zero() || points[points.len() - 1].0 != F::one() {
            return Err(CoreError::InvalidParams(
                "inverter curve must cover power fractions [0, 1]".into(),
            ));
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(CoreError::InvalidParams(
                    "inverter knots must strictly increase in power fraction".into(),
                ));
            }
        }
        if points
            .iter()
            .any(|&(_, eta)| eta <= F::zero() || eta > F::one())
        {
            return Err(CoreError::InvalidParams(
                "inverter efficiencies must lie in (0, 1]".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Shipped default with the usual commercial shape: poor at a few percent
    /// of rated power, flat around 98% above 20%.
    pub fn default_commercial() -> Self {
        let knots = [
            (0.0, 0.50),
            (0.005, 0.70),
            (0.01, 0.80),
            (0.02, 0.88),
            (0.05, 0.95),
            (0.10, 0.965),
            (0.20, 0.98),
            (0.40, 0.982),
            (0.60, 0.982),
            (0.80, 0.980),
            (1.0, 0.975),
        ];
        Self::new(knots.iter().map(|&(p, e)| (real(p), real(e))).collect())
            .expect("builtin curve is valid")
    }

    /// Lossless inverter, useful for reduction tests.
    pub fn ideal() -> Self {
        Self::new(vec![(F::zero(), F::one()), (F::one(), F::one())])
            .expect("ideal curve is valid")
    }

    pub fn points(&self) -> &[(F, F)] {
        &self.points
    }

    /// One-way efficiency at `|p| / p_rated`, clamped to the table range.
    pub fn efficiency(&self, p_frac: F) -> F {
        let x = p_frac.abs().min(F::one());
        let pts = &self.points;
        let mut lo = 0usize;
        let mut hi = pts.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if pts[mid].0 <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (x0, y0) = pts[lo];
        let (x1, y1) = pts[hi];
        if x <= x0 {
            return y0;
        }
        if x >= x1 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Read an inverter curve from a two-column CSV (`p_frac`, `efficiency`)
/// with a header row.
pub fn load_inverter_csv(path: &std::path::Path) -> Result<InverterCurve<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CoreError::Data {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut points = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
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
    InverterCurve::new(points)
}

/// Full pack configuration.
#[derive(Debug, Clone)]
pub struct BessConfig<F: Real = f64> {
    pub cell: CellParams<F>,
    pub ocv: OcvCurve<F>,
    pub inverter: InverterCurve<F>,
    /// Rated energy capacity, watt-hours.
    pub e_rated_wh: F,
    /// Rated power (equals the inverter rating), watts.
    pub p_max_w: F,
    /// Number of cells, `round(e_rated / e_cell)`.
    pub n_cells: u64,
    /// HVAC coefficient of performance.
    pub cop: F,
    /// HVAC reference temperature, degrees Celsius.
    pub t_ref_c: F,
    /// HVAC power limit as a fraction of the pack rating.
    pub hvac_p_limit_frac: F,
    /// Proportional HVAC gain, watts per kelvin.
    pub hvac_gain_w_per_k: F,
    /// Simulation step, seconds.
    pub dt_s: F,
}

impl<F: Real> BessConfig<F> {
    /// Build a pack from rated energy and power. The cell count follows the
    /// one-to-one convention `n_cells = round(e_rated / e_cell)`; the HVAC
    /// gain is sized for a steady-state offset below 2 K at full power.
    pub fn new(
        cell: CellParams<F>,
        ocv: OcvCurve<F>,
        inverter: InverterCurve<F>,
        e_rated_wh: F,
        p_max_w: F,
        dt_s: F,
    ) -> Result<Self> {
        cell.validate()?;
        if e_rated_wh <= F::zero() || p_max_w <= F::zero() || dt_s <= F::zero() {
            return Err(CoreError::InvalidParams(
                "rated energy, rated power and dt must be positive".into(),
            ));
        }
        let n_cells_f = (e_rated_wh / cell.e_rated_wh).round();
        let n_cells = n_cells_f.to_f64().unwrap_or(0.0) as u64;
        if n_cells == 0 {
            return Err(CoreError::InvalidParams(
                "rated energy is below one cell".into(),
            ));
        }
        let cop = real(2.5);
        let i_max = p_max_w / (n_cells_f * cell.v_nom);
        let joule_max = (cell.r0 + cell.r1) * i_max * i_max * n_cells_f;
        let hvac_gain = joule_max / (cop * real(2.0));
        Ok(Self {
            cell,
            ocv,
            inverter,
            e_rated_wh,
            p_max_w,
            n_cells,
            cop,
            t_ref_c: real(25.0),
            hvac_p_limit_frac: real(0.02),
            hvac_gain_w_per_k: hvac_gain,
            dt_s,
        })
    }

    /// Convenience constructor from a C-rate: `p_max = c_rate * e_rated`.
    pub fn with_c_rate(
        cell: CellParams<F>,
        ocv: OcvCurve<F>,
        inverter: InverterCurve<F>,
        e_rated_wh: F,
        c_rate: F,
        dt_s: F,
    ) -> Result<Self> {
        let p_max = c_rate * e_rated_wh;
        Self::new(cell, ocv, inverter, e_rated_wh, p_max, dt_s)
    }

    fn n_cells_f(&self) -> F {
        real(self.n_cells as f64)
    }

    /// HVAC power ceiling, watts.
    pub fn hvac_p_limit_w(&self) -> F {
        self.hvac_p_limit_frac * self.p_max_w
    }
}

/// Pack state: the average cell plus bookkeeping flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BessState<F: Real = f64> {
    pub cell: CellState<F>,
}

impl<F: Real> BessState<F> {
    pub fn rested(soc: F, temperature_c: F) -> Self {
        Self {
            cell: CellState::rested(soc, temperature_c),
        }
    }
}

/// Per-step trace row, matching the CSV export layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<F: Real = f64> {
    pub t_s: F,
    pub delta_f_hz: F,
    /// Actual grid power after any capability clipping, watts.
    pub p_grid_w: F,
    pub p_rech_w: F,
    pub p_od_w: F,
    pub p_hvac_w: F,
    pub i_cell_a: F,
    pub v_bat_v: F,
    pub soc: F,
    pub temperature_c: F,
    /// Set when cut-off voltages, cell capability or SoC limits clipped the
    /// requested power.
    pub clipped: bool,
}

/// Outcome of one plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantStep<F: Real = f64> {
    /// Grid power actually realised, watts.
    pub p_grid_w: F,
    /// Battery-side power (all cells), watts.
    pub p_bat_w: F,
    pub p_hvac_w: F,
    pub i_cell_a: F,
    pub v_bat_v: F,
    pub clipped: bool,
}

/// Sequential simulator of the pack recurrence for one degradation state.
#[derive(Debug, Clone)]
pub struct BessSimulator<'a, F: Real = f64> {
    pub config: &'a BessConfig<F>,
    /// Degraded capacity of the current operational year, ampere-hours.
    pub capacity_ah: F,
    /// Degraded series resistance, ohms.
    pub r0: F,
    /// Degraded RC-branch resistance, ohms.
    pub r1: F,
    pub state: BessState<F>,
    /// Cumulative grid energy consumed, watt-hours.
    pub energy_in_wh: F,
    /// Cumulative grid energy injected, watt-hours.
    pub energy_out_wh: F,
}

impl<'a, F: Real> BessSimulator<'a, F> {
    /// Fresh simulator at a rested state.
    pub fn new(config: &'a BessConfig<F>, degr: &DegradationState, soc: F) -> Self {
        Self {
            config,
            capacity_ah: real::<F>(degr.capacity_frac) * config.cell.capacity_ah,
            r0: real(degr.r0),
            r1: real(degr.r1),
            state: BessState::rested(soc, config.t_ref_c),
            energy_in_wh: F::zero(),
            energy_out_wh: F::zero(),
        }
    }

    /// HVAC power for the current temperature: proportional cooling, capped
    /// by the configured limit and by the power that would land exactly on
    /// the reference temperature within one step.
    fn hvac_power(&self, joule_w: F) -> F {
        let cfg = self.config;
        let over = self.state.cell.temperature_c - cfg.t_ref_c;
        if over <= F::zero() {
            return F::zero();
        }
        let proportional = cfg.hvac_gain_w_per_k * over;
        let n = cfg.n_cells_f();
        let exact = (over * cfg.cell.heat_capacity_j_per_k * n / cfg.dt_s + joule_w) / cfg.cop;
        proportional.min(exact).min(cfg.hvac_p_limit_w()).max(F::zero())
    }

    /// Advance the pack by one step at the requested grid power.
    ///
    /// Charging halts at the charge cut-off voltage or at full SoC,
    /// discharging at the discharge cut-off voltage, empty SoC or the cell
    /// power capability; in all cases the realised power is reduced and the
    /// step is flagged.
    pub fn step(&mut self, p_grid_req_w: F) -> PlantStep<F> {
        let cfg = self.config;
        let n = cfg.n_cells_f();
        let dt = cfg.dt_s;
        let zero = F::zero();
        let mut clipped = false;

        let soc = self.state.cell.soc;
        let v_c1 = self.state.cell.v_c1;
        let v_oc = cfg
            .ocv
            .voltage(soc)
            .expect("simulator keeps SoC inside [0, 1]");

        let eta = cfg.inverter.efficiency(p_grid_req_w / cfg.p_max_w);
        let p_conv = if p_grid_req_w >= zero {
            eta * p_grid_req_w
        } else {
            p_grid_req_w / eta
        };
        // The HVAC law needs this step's Joule losses; estimate them from
        // the requested power before any clipping.
        let p_cell_prov = p_conv / n;
        let i_prov = match current_from_power(self.r0, v_oc, v_c1, p_cell_prov) {
            Ok(i) => i,
            Err(_) => zero,
        };
        let joule_prov = (self.r0 + self.r1) * i_prov * i_prov * n;
        let p_hvac = self.hvac_power(joule_prov);

        let p_bat_req = p_conv - p_hvac;
        let mut p_cell = p_bat_req / n;

        // Cell power capability.
        let p_floor = max_discharge_power(self.r0, v_oc, v_c1);
        if p_cell < p_floor {
            p_cell = p_floor;
            clipped = true;
        }
        let mut i = current_from_power(self.r0, v_oc, v_c1, p_cell)
            .expect("power was clipped to the feasible range");

        // Cut-off voltages.
        if self.r0 > zero {
            if i > zero {
                let i_lim = (cfg.cell.v_cutoff_charge - v_oc - v_c1) / self.r0;
                if i > i_lim {
                    i = i_lim.max(zero);
                    clipped = true;
                }
            } else if i < zero {
                let i_lim = (cfg.cell.v_cutoff_discharge - v_oc - v_c1) / self.r0;
                if i < i_lim {
                    i = i_lim.min(zero);
                    clipped = true;
                }
            }
        }

        // Hard SoC limits: a full pack cannot charge, an empty one cannot
        // discharge.
        if (soc >= F::one() && i > zero) || (soc <= zero && i < zero) {
            i = zero;
            clipped = true;
        }

        let v_bat = v_oc + v_c1 + self.r0 * i;
        let p_cell_act = v_bat * i;
        let p_bat_act = p_cell_act * n;

        // Invert the conversion back to the grid side with the same
        // efficiency sample.
        let p_ac = p_bat_act + p_hvac;
        let p_grid_act = if p_ac >= zero { p_ac / eta } else { p_ac * eta };

        // Thermal update.
        let joule = (self.r0 + self.r1) * i * i * n;
        let heat_cap = cfg.cell.heat_capacity_j_per_k * n;
        let t_next =
            self.state.cell.temperature_c + (joule - cfg.cop * p_hvac) / heat_cap * dt;

        // Electrical update.
        let v_c1_next = step_rc_branch(self.r1, cfg.cell.c1, v_c1, i, dt);
        let soc_step = step_soc(cfg.cell.eta_coulomb, self.capacity_ah, soc, i, dt);
        clipped |= soc_step.clipped;

        self.state.cell = CellState {
            soc: soc_step.soc,
            v_c1: v_c1_next,
            temperature_c: t_next,
        };
        let hours = dt / real(3600.0);
        if p_grid_act >= zero {
            self.energy_in_wh = self.energy_in_wh + p_grid_act * hours;
        } else {
            self.energy_out_wh = self.energy_out_wh - p_grid_act * hours;
        }

        PlantStep {
            p_grid_w: p_grid_act,
            p_bat_w: p_bat_act,
            p_hvac_w: p_hvac,
            i_cell_a: i,
            v_bat_v: v_bat,
            clipped,
        }
    }
}

/// One row of the constant-power characterisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPowerPoint<F: Real = f64> {
    pub power_w: F,
    /// Grid energy recovered during the discharge phase, watt-hours.
    pub available_energy_wh: F,
    /// Discharged over charged grid energy.
    pub round_trip_efficiency: F,
}

/// Charge from empty to the cut-off voltage and discharge back at each power
/// level, reporting the usable energy and the round-trip efficiency.
pub fn characterize_constant_power<F: Real>(
    config: &BessConfig<F>,
    degr: &DegradationState,
    p_levels_w: &[F],
) -> Result<Vec<ConstantPowerPoint<F>>> {
    let mut out = Vec::with_capacity(p_levels_w.len());
    for &p in p_levels_w {
        if p <= F::zero() || p > config.p_max_w {
            return Err(CoreError::InvalidParams(format!(
                "characterisation level {p} W outside (0, p_max]"
            )));
        }
        let max_steps = (real::<F>(400.0 * 3600.0) / config.dt_s)
            .to_f64()
            .unwrap_or(0.0) as usize;

        let mut sim = BessSimulator::new(config, degr, F::zero());
        for _ in 0..max_steps {
            let step = sim.step(p);
            if step.clipped || sim.state.cell.soc >= F::one() {
                break;
            }
        }
        let energy_in = sim.energy_in_wh;

        sim.energy_in_wh = F::zero();
        sim.energy_out_wh = F::zero();
        for _ in 0..max_steps {
            let step = sim.step(-p);
            if step.clipped || sim.state.cell.soc <= F::zero() {
                break;
            }
        }
        let energy_out = sim.energy_out_wh;
        out.push(ConstantPowerPoint {
            power_w: p,
            available_energy_wh: energy_out,
            round_trip_efficiency: if energy_in > F::zero() {
                energy_out / energy_in
            } else {
                F::zero()
            },
        });
    }
    Ok(out)
}

/// Result of the prequalification discharge test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrequalResult<F: Real = f64> {
    /// SoC below which less than 30 min of discharge at the reserve power
    /// remains.
    pub soc_min_30min: F,
    /// SoC above which less than 30 min of charge headroom remains.
    pub soc_max_30min: F,
    /// Total grid energy discharged during the test profile, watt-hours.
    pub discharged_energy_wh: F,
}

impl<F: Real> PrequalResult<F> {
    pub fn bounds(&self) -> PenaltyBounds<F> {
        PenaltyBounds {
            soc_min: self.soc_min_30min,
            soc_max: self.soc_max_30min,
        }
    }
}

/// Sweep at constant signed power from a rested state until the pack clips,
/// recording `(soc_before, cumulative grid energy)` per step.
fn energy_sweep<F: Real>(
    config: &BessConfig<F>,
    degr: &DegradationState,
    start_soc: F,
    p_grid_w: F,
) -> (Vec<(F, F)>, F) {
    let mut sim = BessSimulator::new(config, degr, start_soc);
    let mut profile = Vec::new();
    let max_steps = (real::<F>(400.0 * 3600.0) / config.dt_s)
        .to_f64()
        .unwrap_or(0.0) as usize;
    for _ in 0..max_steps {
        let soc_before = sim.state.cell.soc;
        let step = sim.step(p_grid_w);
        let cum = if p_grid_w < F::zero() {
            sim.energy_out_wh
        } else {
            sim.energy_in_wh
        };
        profile.push((soc_before, cum));
        if step.clipped {
            break;
        }
    }
    let total = profile.last().map(|&(_, e)| e).unwrap_or(F::zero());
    (profile, total)
}

/// Interpolate the SoC at which the cumulative energy crosses `target`.
fn soc_at_energy<F: Real>(profile: &[(F, F)], target: F) -> Option<F> {
    let mut prev = (F::one(), F::zero());
    for (idx, &(soc, cum)) in profile.iter().enumerate() {
        if cum >= target {
            if idx == 0 {
                return Some(soc);
            }
            let (soc0, cum0) = prev;
            if cum == cum0 {
                return Some(soc);
            }
            let w = (target - cum0) / (cum - cum0);
            return Some(soc0 + (soc - soc0) * w);
        }
        prev = (soc, cum);
    }
    None
}

/// German prequalification discharge test at reserve power `r_w`.
///
/// The profile starts at full SoC: two 15-min discharges at `r_w` separated
/// by 15-min rests, then discharge to empty. The total discharged energy is
/// reported; the 30-min SoC bounds are derived from constant-power sweeps so
/// that half an hour of delivery remains available in each direction.
pub fn doppelhoecker_test<F: Real>(
    config: &BessConfig<F>,
    degr: &DegradationState,
    r_w: F,
) -> Result<PrequalResult<F>> {
    if r_w <= F::zero() || r_w > real::<F>(0.80) * config.p_max_w {
        return Err(CoreError::InvalidParams(format!(
            "reserve {r_w} W outside (0, 0.8 * p_max]"
        )));
    }
    let dt = config.dt_s;
    let steps_15min = (real::<F>(900.0) / dt).to_f64().unwrap_or(0.0) as usize;

    let mut sim = BessSimulator::new(config, degr, F::one());
    for phase in 0..4 {
        let power = if phase % 2 == 0 { -r_w } else { F::zero() };
        for _ in 0..steps_15min {
            let step = sim.step(power);
            if power != F::zero() && step.clipped {
                return Err(CoreError::Prequalification(format!(
                    "pack cannot sustain {r_w} W for the 15-min test humps"
                )));
            }
        }
    }
    let max_steps = (real::<F>(400.0 * 3600.0) / dt).to_f64().unwrap_or(0.0) as usize;
    for _ in 0..max_steps {
        if sim.step(-r_w).clipped {
            break;
        }
    }
    let discharged = sim.energy_out_wh;

    // 30 minutes of reserve power, in watt-hours.
    let reserve_wh = r_w * real(0.5);

    let (down, e_down_total) = energy_sweep(config, degr, F::one(), -r_w);
    if e_down_total < reserve_wh {
        return Err(CoreError::Prequalification(
            "less than 30 min of discharge available from full".into(),
        ));
    }
    let soc_min = soc_at_energy(&down, e_down_total - reserve_wh).ok_or_else(|| {
        CoreError::Prequalification("discharge sweep did not cover the reserve".into())
    })?;

    let (up, e_up_total) = energy_sweep(config, degr, F::zero(), r_w);
    if e_up_total < reserve_wh {
        return Err(CoreError::Prequalification(
            "less than 30 min of charge headroom available from empty".into(),
        ));
    }
    let soc_max = soc_at_energy(&up, e_up_total - reserve_wh).ok_or_else(|| {
        CoreError::Prequalification("charge sweep did not cover the reserve".into())
    })?;

    if soc_min >= soc_max {
        return Err(CoreError::Prequalification(format!(
            "30-min bounds collapsed: soc_min {soc_min} >= soc_max {soc_max}"
        )));
    }
    Ok(PrequalResult {
        soc_min_30min: soc_min,
        soc_max_30min: soc_max,
        discharged_energy_wh: discharged,
    })
}
