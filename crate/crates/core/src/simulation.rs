//! Closed-loop FCR simulation: the recharge controller driving the pack
//! against a frequency deviation trace, with block scheduling, emergency
//! detection, the availability penalty and the settlement bookkeeping.

use crate::bess::{BessConfig, BessSimulator, StepRecord};
use crate::controller::{
    fcr_power, grid_power, overdelivery_power, recharge_setpoint, ControllerParams,
    EmergencyDetector, MarketRules, PenaltyBounds,
};
use crate::degradation::DegradationState;
use crate::economics::TraceEconomics;
use crate::scalar::{real, Real};

/// Everything a closed-loop run needs, borrowed from the caller.
#[derive(Clone, Copy)]
pub struct FcrContext<'a, F: Real = f64> {
    pub bess: &'a BessConfig<F>,
    pub degr: &'a DegradationState,
    pub rules: &'a MarketRules<F>,
    pub params: &'a ControllerParams<F>,
    pub bounds: &'a PenaltyBounds<F>,
}

/// Output of one closed-loop run.
#[derive(Debug, Clone)]
pub struct FcrRun<F: Real = f64> {
    /// SoC after every step, aligned with the deviation trace.
    pub soc_trace: Vec<F>,
    /// Emergency flag per step.
    pub emergency: Vec<bool>,
    /// Fraction of non-emergency steps with the SoC outside the 30-min
    /// bounds.
    pub penalty_fraction: F,
    /// Settlement bookkeeping for the electricity-cost model.
    pub economics: TraceEconomics<F>,
    /// Steps where the plant clipped the requested power.
    pub clipped_steps: usize,
    /// Cycle count equivalent: number of rainflow records is derived later;
    /// here we keep the full trace for it.
    pub records: Option<Vec<StepRecord<F>>>,
}

/// Run the FCR controller against a deviation trace.
///
/// Recharge power is piecewise constant on the market blocks and decided
/// from the SoC sampled one lead time before each block starts; the first
/// block uses the initial SoC. Violations of the 30-min bounds count on the
/// post-step SoC and are forgiven during emergency states.
pub fn run_fcr<F: Real>(
    ctx: &FcrContext<'_, F>,
    delta_f_hz: &[F],
    initial_soc: F,
    collect_records: bool,
) -> FcrRun<F> {
    let dt = ctx.bess.dt_s;
    let n = delta_f_hz.len();
    let steps_per_block = (ctx.rules.t_recharge_s / dt).to_f64().unwrap_or(1.0) as usize;
    let steps_per_block = steps_per_block.max(1);
    let lead_steps = (ctx.rules.t_lead_s / dt).to_f64().unwrap_or(0.0) as usize;
    let n_blocks = n.div_ceil(steps_per_block);

    let mut sim = BessSimulator::new(ctx.bess, ctx.degr, initial_soc);
    let mut detector = EmergencyDetector::new();
    let mut soc_trace: Vec<F> = Vec::with_capacity(n);
    let mut emergency: Vec<bool> = Vec::with_capacity(n);
    let mut records = collect_records.then(|| Vec::with_capacity(n));
    let mut econ = TraceEconomics::with_blocks(n_blocks);
    let mut violations = 0usize;
    let mut clipped_steps = 0usize;
    let mut block_setpoint = F::zero();
    let hours = dt / real(3600.0);

    for (idx, &df) in delta_f_hz.iter().enumerate() {
        if idx % steps_per_block == 0 {
            // SoC at the decision instant, one lead time before the block
            // start; before the trace begins this is the initial SoC.
            let soc_at_decision = match idx.checked_sub(lead_steps) {
                None | Some(0) => initial_soc,
                Some(j) => soc_trace[j - 1],
            };
            block_setpoint =
                recharge_setpoint(ctx.params, ctx.rules, ctx.bess.p_max_w, soc_at_decision);
            econ.record_block_trade(idx / steps_per_block, block_setpoint * real(0.25));
        }
        let is_emergency = detector.update(df, dt);
        let soc_now = sim.state.cell.soc;
        let p_fcr = fcr_power(ctx.rules, df);
        let p_od = overdelivery_power(ctx.params, ctx.rules, df, soc_now);
        let split = grid_power(p_fcr, block_setpoint, p_od, ctx.bess.p_max_w);
        let plant = sim.step(split.p_grid);

        if plant.clipped {
            clipped_steps += 1;
        }
        let soc_after = sim.state.cell.soc;
        if !is_emergency
            && (soc_after > ctx.bounds.soc_max || soc_after < ctx.bounds.soc_min)
        {
            violations += 1;
        }
        // Imbalance residual: realised grid energy minus the traded block
        // power.
        let block = idx / steps_per_block;
        econ.record_residual(block, (plant.p_grid_w - block_setpoint) * hours);

        soc_trace.push(soc_after);
        emergency.push(is_emergency);
        if let Some(rec) = records.as_mut() {
            rec.push(StepRecord {
                t_s: real::<F>(idx as f64) * dt,
                delta_f_hz: df,
                p_grid_w: plant.p_grid_w,
                p_rech_w: split.p_rech,
                p_od_w: split.p_od,
                p_hvac_w: plant.p_hvac_w,
                i_cell_a: plant.i_cell_a,
                v_bat_v: plant.v_bat_v,
                soc: soc_after,
                temperature_c: sim.state.cell.temperature_c,
                clipped: plant.clipped,
            });
        }
    }
    econ.grid_in_wh = sim.energy_in_wh;
    econ.grid_out_wh = sim.energy_out_wh;

    FcrRun {
        penalty_fraction: if n == 0 {
            F::zero()
        } else {
            real::<F>(violations as f64) / real(n as f64)
        },
        soc_trace,
        emergency,
        economics: econ,
        clipped_steps,
        records,
    }
}
